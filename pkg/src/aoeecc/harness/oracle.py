"""Brute-force cross-checks for small instances."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..baselines import hindsight_best
from ..subset_dp import marginals, strategy_prob
from .config import RunConfig
from .engine import run_fast, run_reference

MAX_ORACLE_K = 10


@dataclass(frozen=True)
class OracleCheck:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.error <= self.tol


def brute_strategy_probs(w, k: int) -> dict[tuple[int, ...], float]:
    w = np.asarray(w, float)
    raw = {s: float(np.prod(w[list(s)])) for s in combinations(range(w.size), k)}
    z = sum(raw.values())
    return {s: v / z for s, v in raw.items()}


def brute_marginals(w, k: int) -> np.ndarray:
    out = np.zeros(len(w))
    for s, p in brute_strategy_probs(w, k).items():
        out[list(s)] += p
    return out


def brute_hindsight(L, k: int) -> float:
    L = np.asarray(L, float)
    return min(L[list(s)].sum() for s in combinations(range(L.size), k))


def run_oracles(cfg: RunConfig, *, n_weights: int = 20, n_short: int = 2000,
                seed: int = 0) -> list[OracleCheck]:
    if cfg.K > MAX_ORACLE_K:
        raise ValueError(f"oracle checks enumerate subsets; need K <= {MAX_ORACLE_K}")
    K, k = cfg.K, cfg.k
    rng = np.random.default_rng(seed)
    dp_err = marg_err = hs_err = 0.0
    for _ in range(n_weights):
        w = np.exp(rng.normal(0.0, 2.0, K))
        ref = brute_strategy_probs(w, k)
        dp_err = max(dp_err, max(abs(strategy_prob(w, s, k) - p) for s, p in ref.items()))
        marg_err = max(marg_err, float(np.abs(marginals(w, k) - brute_marginals(w, k)).max()))
        L = rng.uniform(0, 100, K)
        hs_err = max(hs_err, abs(hindsight_best(L, k)[1] - brute_hindsight(L, k)))
    short = cfg.replace(n_rounds=min(cfg.n_rounds, n_short))
    fast, slow = run_fast(short), run_reference(short)
    both = ~np.isnan(fast.table) & ~np.isnan(slow.table)
    kernel_err = float(np.abs(fast.table[both] - slow.table[both]).max(initial=0.0))
    strat_err = float(np.any(fast.strategies != slow.strategies))
    return [
        OracleCheck("strategy probabilities vs enumeration", dp_err, 1e-10),
        OracleCheck("marginals vs enumeration", marg_err, 1e-10),
        OracleCheck("hindsight value vs enumeration", hs_err, 1e-9),
        OracleCheck("compiled loop vs reference loop", kernel_err, 1e-8),
        OracleCheck("compiled vs reference strategies", strat_err, 0.0),
    ]
