"""Comparison learners and the best-fixed-strategy oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .policy import AoeeccPolicy
from .subset_dp import build_covering_set

UCB_RADIUS = 1.5


@dataclass
class UcbState:
    counts: np.ndarray
    mean_loss: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, K: int) -> "UcbState":
        return cls(np.zeros(K, dtype=np.int64), np.zeros(K), 0)


@njit(cache=True)
def ucb_select_kernel(counts, mean_loss, t, k, cov_members, out):
    """Lower-confidence index selection; the covering strategies go first.

    ``t`` is the 1-based round being played.
    """
    n_blocks = cov_members.shape[0]
    if t <= n_blocks:
        for j in range(k):
            out[j] = cov_members[t - 1, j]
        return
    K = counts.shape[0]
    idx = np.empty(K)
    log_t = math.log(t)
    for f in range(K):
        if counts[f] == 0:
            idx[f] = -np.inf
        else:
            idx[f] = mean_loss[f] - math.sqrt(UCB_RADIUS * log_t / counts[f])
    # stable argsort keeps ties in channel order
    order = np.argsort(idx, kind="mergesort")
    sel = np.sort(order[:k])
    for j in range(k):
        out[j] = sel[j]


@njit(cache=True)
def ucb_update_kernel(counts, mean_loss, strat, loss):
    for j in range(strat.shape[0]):
        f = strat[j]
        counts[f] += 1
        mean_loss[f] += (loss[j] - mean_loss[f]) / counts[f]


def combucb1_select(state: UcbState, k: int) -> tuple[int, ...]:
    K = state.counts.size
    cov = np.asarray(build_covering_set(K, k).strategies, dtype=np.int64)
    out = np.empty(k, dtype=np.int64)
    ucb_select_kernel(state.counts, state.mean_loss, state.t + 1, k, cov, out)
    return tuple(int(f) for f in out)


def combucb1_update(state: UcbState, obs) -> UcbState:
    """Running-mean update on the played channels only."""
    counts = state.counts.copy()
    means = state.mean_loss.copy()
    ucb_update_kernel(counts, means, np.asarray(obs.strategy, dtype=np.int64),
                      np.asarray(obs.loss, dtype=np.float64))
    return UcbState(counts, means, state.t + 1)


def exp3_policy(K: int, k: int, **kw) -> AoeeccPolicy:
    """Same sampler with forced exploration only and no budget handling."""
    return AoeeccPolicy(K, k, mode="adversarial-only", freeze_lambda=True, **kw)


def hindsight_best(cumulative_true_loss, k: int) -> tuple[tuple[int, ...], float]:
    L = np.asarray(cumulative_true_loss, dtype=np.float64)
    if not 1 <= k <= L.size:
        raise ValueError("need 1 <= k <= K")
    pick = np.sort(np.argsort(L, kind="stable")[:k])
    return tuple(int(f) for f in pick), float(L[pick].sum())


@njit(cache=True)
def hindsight_value_kernel(L, k):
    order = np.argsort(L, kind="mergesort")
    v = 0.0
    for j in range(k):
        v += L[order[j]]
    return v
