"""Regret, violation and per-checkpoint records."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..baselines import hindsight_best

PSEUDO_REGIMES = ("stochastic",)


@dataclass(frozen=True)
class RoundRecord:
    t: int
    strategy: tuple[int, ...]
    loss: float  # true loss of the chosen strategy at t
    expected_power: float  # sum_f rho_t(f) * Pbar(f) at t
    avg_power: float  # running mean of expected_power up to t
    lam: float
    regret: float  # the regime's primary regret
    realized_regret: float
    pseudo_regret: float
    violation: float  # signed accumulator; clamp with ``clamp_violation``
    ee: float
    hindsight: float  # best fixed strategy's cumulative true loss


def primary_regret(regime: str) -> str:
    return "pseudo" if regime in PSEUDO_REGIMES else "realized"


def compute_regret(history, regime: str) -> float:
    """Regret from a full unmasked trace.

    Stochastic regimes report the pseudo-regret against the known means;
    every other regime reports realised regret against the best fixed
    strategy in hindsight.
    """
    strategies = np.asarray(history.strategies)
    losses = np.asarray(history.losses, dtype=np.float64)
    if strategies.shape[0] == 0:
        return 0.0
    k = strategies.shape[1]
    if primary_regret(regime) == "pseudo":
        if history.mu is None:
            raise ValueError("pseudo-regret needs the channel means")
        mu = np.asarray(history.mu, dtype=np.float64)
        best = np.sort(mu)[:k].sum()
        return float(mu[strategies].sum() - strategies.shape[0] * best)
    played = np.take_along_axis(losses, strategies, axis=1).sum()
    return float(played - hindsight_best(losses.sum(axis=0), k)[1])


def compute_violation(expected_power, P_o: float) -> float:
    """[sum_t (expected power_t - P_o)]_+."""
    return clamp_violation(float(np.sum(np.asarray(expected_power, float) - P_o)))


def clamp_violation(v: float) -> float:
    return v if v > 0.0 else 0.0
