"""Cooperative probing: extra uniformly drawn strategies observed each round.

The learner plays H_n from its own mixture and additionally observes M-1
strategies sampled uniformly (without replacement) from the other N-1.  For
channel f not in H_n the chance that some extra covers it does not depend on
H_n, which gives an exact per-channel observation probability

    rho~(f) = rho(f) + (1 - rho(f)) * (m - 1) / (K - 1),
    m = 1 + (K - 1) * (1 - prod_{j<M-1} (A - j) / (N - 1 - j)),   A = C(K-1, k) - 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from numba import njit

from .subset_dp import n_strategies


class CoopError(ValueError):
    pass


@dataclass(frozen=True)
class CoopConfig:
    M: int = 1
    m_lower_bound: float = 1.0

    def validate(self, K: int, k: int) -> None:
        if not 1 <= self.M <= n_strategies(K, k):
            raise CoopError(f"coop.M must lie in [1, C(K,k)] (got {self.M})")
        if not 1.0 <= self.m_lower_bound <= K:
            raise CoopError("coop.m_lower_bound must lie in [1, K]")


@dataclass(frozen=True)
class ObservationSet:
    chosen: tuple[int, ...]
    extras: tuple[tuple[int, ...], ...]

    @property
    def observed_channels(self) -> tuple[int, ...]:
        s = set(self.chosen)
        for e in self.extras:
            s.update(e)
        return tuple(sorted(s))

    @property
    def strategies(self) -> tuple[tuple[int, ...], ...]:
        return (self.chosen,) + self.extras


def strategy_obs_prob(p_i: float, M: int, N: int) -> float:
    if not 0.0 <= p_i <= 1.0:
        raise CoopError("p_i must lie in [0, 1]")
    if N == 1:
        return 1.0
    return p_i + (1.0 - p_i) * (M - 1) / (N - 1)


def channel_obs_prob(rho_f: float, m: float, K: int) -> float:
    if not 0.0 <= rho_f <= 1.0 + 1e-12:
        raise CoopError("rho_f must lie in [0, 1]")
    return rho_f + (1.0 - rho_f) * (m - 1.0) / (K - 1)


def effective_probing_rate(K: int, k: int, M: int) -> float:
    """The m that makes the channel-level observation probability exact."""
    N = comb(K, k)
    if not 1 <= M <= N:
        raise CoopError("M must lie in [1, C(K,k)]")
    A = comb(K - 1, k) - 1
    miss = 1.0
    for j in range(M - 1):
        if A - j <= 0:
            miss = 0.0
            break
        miss *= (A - j) / (N - 1 - j)
    return 1.0 + (K - 1) * (1.0 - miss)


def measured_rate(n_distinct: int, K: int, k: int) -> float:
    """Map the distinct observed channel count onto [1, K]."""
    if K == k:
        return float(K)
    return 1.0 + (K - 1) * (n_distinct - k) / (K - k)


@njit(cache=True)
def _random_subset(K, k, rng, scratch, out):
    for f in range(K):
        scratch[f] = f
    for j in range(k):
        r = j + int(rng.random() * (K - j))
        tmp = scratch[j]
        scratch[j] = scratch[r]
        scratch[r] = tmp
    for j in range(k):
        out[j] = scratch[j]
    out.sort()


@njit(cache=True)
def draw_extras_kernel(K, k, M, chosen, rng, scratch, extras, observed):
    """Fill ``extras[:M-1]`` with distinct k-subsets different from ``chosen``.

    ``observed`` becomes the union mask of chosen and extras.  Returns the
    number of distinct observed channels.
    """
    for f in range(K):
        observed[f] = False
    for j in range(k):
        observed[chosen[j]] = True
    cand = np.empty(k, dtype=np.int64)
    filled = 0
    while filled < M - 1:
        _random_subset(K, k, rng, scratch, cand)
        dup = True
        for j in range(k):
            if cand[j] != chosen[j]:
                dup = False
                break
        if not dup:
            for e in range(filled):
                same = True
                for j in range(k):
                    if cand[j] != extras[e, j]:
                        same = False
                        break
                if same:
                    dup = True
                    break
        if dup:
            continue
        for j in range(k):
            extras[filled, j] = cand[j]
            observed[cand[j]] = True
        filled += 1
    d = 0
    for f in range(K):
        if observed[f]:
            d += 1
    return d


@njit(cache=True)
def obs_prob_kernel(rho, m, out):
    K = rho.shape[0]
    a = (m - 1.0) / (K - 1)
    for f in range(K):
        out[f] = rho[f] + (1.0 - rho[f]) * a


def coop_select(policy, M: int, rng_policy, rng_coop) -> tuple[ObservationSet, np.ndarray]:
    """Draw H_n from ``policy`` plus M-1 uniform probe strategies."""
    K, k = policy.K, policy.k
    if not 1 <= M <= n_strategies(K, k):
        raise CoopError("M out of range")
    chosen, rho = policy.select(rng_policy)
    extras = np.empty((max(M - 1, 1), k), dtype=np.int64)
    observed = np.zeros(K, dtype=np.bool_)
    draw_extras_kernel(K, k, M, np.asarray(chosen, dtype=np.int64), rng_coop,
                       np.empty(K, dtype=np.int64), extras, observed)
    ext = tuple(tuple(int(f) for f in extras[i]) for i in range(M - 1))
    return ObservationSet(tuple(chosen), ext), rho


def coop_observe(policy, obs_set: ObservationSet, losses, powers, rho, M: int) -> None:
    """Importance-weighted update over every observed channel.

    ``losses``/``powers`` are full length-K vectors; only observed entries are read.
    """
    K = policy.K
    m = effective_probing_rate(K, policy.k, M)
    prob = np.empty(K)
    obs_prob_kernel(np.asarray(rho, float), m, prob)
    observed = np.zeros(K, dtype=np.bool_)
    observed[list(obs_set.observed_channels)] = True
    loss = np.where(observed, losses, 0.0)
    power = np.where(observed, powers, 0.0)
    policy.observe_masked(observed, prob, loss, power, rho)
