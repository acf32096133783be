import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoeecc.harness.engine import History
from aoeecc.harness.metrics import (
    clamp_violation,
    compute_regret,
    compute_violation,
    primary_regret,
)


def test_best_fixed_strategy_has_zero_regret(rng):
    mu = np.array([0.2, 0.6, 0.3, 0.7])
    n = 500
    losses = (rng.uniform(size=(n, 4)) < mu).astype(float)
    best = np.sort(np.argsort(losses.sum(axis=0), kind="stable")[:2])
    h = History(np.tile(best, (n, 1)), losses, np.zeros(n), mu)
    assert compute_regret(h, "adversarial") == 0.0
    h_mu = History(np.tile([0, 2], (n, 1)), losses, np.zeros(n), mu)
    assert compute_regret(h_mu, "stochastic") == pytest.approx(0.0, abs=1e-12)


def test_uniform_policy_pseudo_regret(rng):
    mu = np.array([0.1, 0.5, 0.3, 0.8])
    subsets = np.array(list(combinations(range(4), 2)))
    gap = mu[subsets].sum(axis=1) - np.sort(mu)[:2].sum()
    n = 20_000
    pick = subsets[rng.integers(0, len(subsets), n)]
    h = History(pick, np.zeros((n, 4)), np.zeros(n), mu)
    r = compute_regret(h, "stochastic")
    assert abs(r - n * gap.mean()) <= 3 * math.sqrt(n * gap.var())


def test_regime_selects_primary():
    assert primary_regret("stochastic") == "pseudo"
    for regime in ("adversarial", "mixed", "contaminated"):
        assert primary_regret(regime) == "realized"


def test_pseudo_needs_means():
    h = History(np.zeros((3, 1), int), np.zeros((3, 2)), np.zeros(3), None)
    with pytest.raises(ValueError):
        compute_regret(h, "stochastic")


def test_violation_examples():
    assert compute_violation(np.full(100, 0.3), 0.5) == 0.0
    assert compute_violation(np.full(100, 0.55), 0.5) == pytest.approx(100 * 0.05)
    assert compute_violation([], 0.5) == 0.0


@given(st.lists(st.floats(0, 1), max_size=50), st.floats(0, 1))
def test_violation_is_positive_part_of_sum(p, P_o):
    v = compute_violation(p, P_o)
    assert v >= 0
    assert v == pytest.approx(max(sum(x - P_o for x in p), 0.0), abs=1e-9)


def test_clamp():
    assert clamp_violation(-2.0) == 0.0 and clamp_violation(1.5) == 1.5
