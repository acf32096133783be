"""Energy-efficiency rewards, ε-SPA time accounting and sensing-overhead helpers.

Rates are in nats/s (natural log), powers in W, times in s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NoCrossover(ValueError):
    """No probing time in (0, T) equalises the SA and SPA throughput bounds."""


@dataclass(frozen=True)
class LinkParams:
    W: float = 1.0
    theta_cap: float = 1.0
    noise_power: float = 1.0
    pu_interference: float = 0.0
    jammer_interference: float = 0.0
    cross_su_interference: float = 0.0
    gain_self: float = 1.0
    P_c: float = 1.0

    def __post_init__(self):
        vals = (self.W, self.theta_cap, self.noise_power, self.pu_interference,
                self.jammer_interference, self.cross_su_interference, self.gain_self, self.P_c)
        if any(v < 0 for v in vals):
            raise ValueError("link parameters must be nonnegative")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")

    @property
    def interference(self) -> float:
        return (self.cross_su_interference + self.pu_interference
                + self.jammer_interference + self.noise_power)


@dataclass(frozen=True)
class TimingParams:
    t_s: float = 0.01
    t_p: float = 0.01
    t_a: float = 2.0

    def __post_init__(self):
        if self.t_s < 0 or self.t_p < 0 or self.t_a <= 0 or self.t_s + self.t_p <= 0:
            raise ValueError("timings must be positive")

    @property
    def t_sp(self) -> float:
        return self.t_s + self.t_p

    @property
    def alpha(self) -> float:
        return self.t_a / self.t_sp


@dataclass(frozen=True)
class SuccessModel:
    pr_interrupt: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.pr_interrupt <= 1.0:
            raise ValueError("pr_interrupt must lie in [0, 1]")


def instant_rate(link: LinkParams, P_tx: float) -> float:
    """W ln(1 + theta * P g / (interference + noise))."""
    if P_tx < 0:
        raise ValueError("P_tx must be nonnegative")
    denom = link.interference
    if denom <= 0:
        raise ValueError("zero interference-plus-noise")
    return link.W * math.log1p(link.theta_cap * P_tx * link.gain_self / denom)


def channel_ee(rate: float, P_c: float, P_tx: float) -> float:
    total = P_c + P_tx
    if not total > 0:
        raise ValueError("total power must be positive")
    return rate / total


def strategy_ee(per_channel_ee, k: int | None = None) -> float:
    """Mean of the per-channel EEs of one strategy."""
    vals = np.asarray(per_channel_ee, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("need a non-empty vector of per-channel EE values")
    if k is not None and vals.size != k:
        raise ValueError(f"expected {k} values, got {vals.size}")
    return float(vals.mean())


def aggregate_ee(rates, P_c, P_tx) -> float:
    """Strategy EE from totals: sum of rates over sum of powers."""
    total = float(np.sum(P_c) + np.sum(P_tx))
    if not total > 0:
        raise ValueError("total power must be positive")
    return float(np.sum(rates)) / total


def ee_ordering_chain(rates, P_c, P_tx) -> tuple[bool, dict]:
    """Check max EE_f >= mean EE_f >= totals-EE >= min EE_f for one instance.

    Returns (holds, values).  The middle link is not a mathematical identity,
    so this is a measurement rather than an assertion.
    """
    rates = np.asarray(rates, float)
    per = rates / (np.asarray(P_c, float) + np.asarray(P_tx, float))
    vals = {
        "max": float(per.max()),
        "cc": float(per.mean()),
        "agg": aggregate_ee(rates, P_c, P_tx),
        "min": float(per.min()),
    }
    tol = 1e-12 * max(1.0, vals["max"])
    holds = (vals["max"] + tol >= vals["cc"] and vals["cc"] + tol >= vals["agg"]
             and vals["agg"] + tol >= vals["min"])
    return holds, vals


def channel_gain(ee_norm: float, success: SuccessModel, transmitted: bool) -> float:
    if not transmitted:
        return 0.0
    return float(ee_norm) * (1.0 - success.pr_interrupt)


def max_ee(link: LinkParams, P_max: float) -> float:
    """EE at full power with no interference beyond noise; the gain normaliser."""
    clean = LinkParams(W=link.W, theta_cap=link.theta_cap, noise_power=link.noise_power,
                       gain_self=link.gain_self, P_c=link.P_c)
    return channel_ee(instant_rate(clean, P_max), link.P_c, P_max)


def time_budget(n: int, eps_access: float, timing: TimingParams) -> float:
    """Expected wall time of n sensing/probing rounds with access probability eps."""
    if n < 0 or not 0.0 <= eps_access <= 1.0:
        raise ValueError("need n >= 0 and eps_access in [0, 1]")
    return n * timing.t_sp + eps_access * n * timing.t_a


def ee_lower_bound(G_max: float, n: int, K: int, k: int, eps_access: float,
                   timing: TimingParams) -> float:
    """Adversarial-regime floor on the achieved EE rate."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < eps_access <= 1.0:
        raise ValueError("eps_access must lie in (0, 1]")
    num = G_max - 4.0 * k * math.sqrt(K * math.log(K) / n)
    return num / (1.0 / (timing.alpha * eps_access) + 1.0)


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def false_alarm(t_s: float, f_s: float, threshold_ratio: float) -> float:
    """Energy-detector false-alarm probability Q((ratio - 1) sqrt(t_s f_s))."""
    if t_s <= 0 or f_s <= 0:
        raise ValueError("t_s and f_s must be positive")
    return q_function((threshold_ratio - 1.0) * math.sqrt(t_s * f_s))


def _sa_throughput(t_s, t_a, K, k, eps, T, G_max):
    a = t_a / t_s
    return (G_max - 4 * k * math.sqrt((1 + a * eps) * t_s * K * math.log(K) / (eps * T))) / (
        1 / (a * eps) + 1)


def _spa_throughput(t_s, t_p, t_a, K, k, eps, T, G_max):
    a = t_a / (t_s + t_p)
    return (G_max - 4 * k * math.sqrt((1 + a * eps) * (t_s + t_p) * K * math.log(K) / T)) / (
        1 / (a * eps) + 1)


def probing_crossover(t_s: float, K: int, k: int, eps: float, T: float, G_max: float, *,
                      t_a: float = 2.0, rtol: float = 1e-9) -> float:
    """Probing time at which sensing+probing and sensing-only bounds coincide.

    SPA observes every round, so its bound uses the full horizon T; SA only
    learns from the eps-fraction of rounds that transmit.
    """
    if min(t_s, eps, T, t_a) <= 0 or K < 2 or k < 1:
        raise ValueError("inputs must be positive")

    def h(tp):
        return _spa_throughput(t_s, tp, t_a, K, k, eps, T, G_max) - _sa_throughput(
            t_s, t_a, K, k, eps, T, G_max)

    lo, hi = 0.0, T
    h_lo, h_hi = h(lo), h(hi)
    if h_lo == 0.0:
        raise NoCrossover("bounds coincide at zero probing time")
    if h_lo * h_hi > 0:
        raise NoCrossover(f"no sign change of the throughput difference on (0, {T})")
    while hi - lo > rtol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        h_mid = h(mid)
        if h_mid == 0.0:
            return mid
        if (h_mid > 0) == (h_lo > 0):
            lo, h_lo = mid, h_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
