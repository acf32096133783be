"""Exact k-subset distributions over K channels with product weights.

A strategy (k-subset) ``S`` has weight ``prod(w[f] for f in S)``; the
normaliser is the elementary symmetric polynomial ``e_k(w)``.  Everything
here runs in O(K*k) through the DP recurrence

    e_j(w[i:]) = e_j(w[i+1:]) + w[i] * e_{j-1}(w[i+1:])

The jitted kernels keep every DP row rescaled to max 1 and carry the log
scale separately, so tables stay finite for thousands of channels.  Callers
own the scratch tables; nothing here holds state.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from numba import njit

__all__ = [
    "CoveringSet",
    "DegenerateWeightsError",
    "build_covering_set",
    "elementary_symmetric",
    "esp_table",
    "marginals",
    "n_strategies",
    "sample_many",
    "sample_strategy",
    "strategy_prob",
]


class DegenerateWeightsError(ValueError):
    """Raised when fewer than k channels carry positive weight."""


# ---------------------------------------------------------------------------
# jitted kernels (shared with the simulation engine)
# ---------------------------------------------------------------------------


@njit(cache=True)
def backward_table(w, k, table, logscale):
    """Fill ``table[i, j] * exp(logscale[i]) = e_j(w[i:])`` for i in 0..K."""
    K = w.shape[0]
    table[K, :] = 0.0
    table[K, 0] = 1.0
    logscale[K] = 0.0
    for i in range(K - 1, -1, -1):
        wi = w[i]
        top = 0.0
        table[i, 0] = table[i + 1, 0]
        if table[i, 0] > top:
            top = table[i, 0]
        for j in range(1, k + 1):
            v = table[i + 1, j] + wi * table[i + 1, j - 1]
            table[i, j] = v
            if v > top:
                top = v
        if top > 0.0:
            for j in range(k + 1):
                table[i, j] /= top
            logscale[i] = logscale[i + 1] + np.log(top)
        else:
            logscale[i] = logscale[i + 1]


@njit(cache=True)
def forward_table(w, k, table, logscale):
    """Fill ``table[i, j] * exp(logscale[i]) = e_j(w[:i])`` for i in 0..K."""
    K = w.shape[0]
    table[0, :] = 0.0
    table[0, 0] = 1.0
    logscale[0] = 0.0
    for i in range(1, K + 1):
        wi = w[i - 1]
        top = 0.0
        table[i, 0] = table[i - 1, 0]
        if table[i, 0] > top:
            top = table[i, 0]
        for j in range(1, k + 1):
            v = table[i - 1, j] + wi * table[i - 1, j - 1]
            table[i, j] = v
            if v > top:
                top = v
        if top > 0.0:
            for j in range(k + 1):
                table[i, j] /= top
            logscale[i] = logscale[i - 1] + np.log(top)
        else:
            logscale[i] = logscale[i - 1]


@njit(cache=True)
def marginals_kernel(w, k, fwd, fls, bwd, bls, out):
    """Inclusion probabilities of each channel under the product distribution.

    Expects ``bwd``/``bls`` and ``fwd``/``fls`` already filled for ``w``.
    Returns False when e_k(w) is zero (degenerate weights).
    """
    K = w.shape[0]
    ek = bwd[0, k]
    if not ek > 0.0:
        return False
    for f in range(K):
        acc = 0.0
        for a in range(k):
            acc += fwd[f, a] * bwd[f + 1, k - 1 - a]
        out[f] = w[f] * acc / ek * np.exp(fls[f] + bls[f + 1] - bls[0])
    return True


@njit(cache=True)
def sample_kernel(w, k, bwd, bls, rng, out):
    """Sequential inclusion sampling in ascending channel order.

    Writes the chosen channel ids (sorted) into ``out[:k]``.  ``bwd`` must be
    the backward table for ``w``.  Returns False on degenerate weights.
    """
    K = w.shape[0]
    if not bwd[0, k] > 0.0:
        return False
    j = k
    pos = 0
    for i in range(K):
        if j == 0:
            break
        if K - i == j:
            out[pos] = i
            pos += 1
            j -= 1
            continue
        denom = bwd[i, j]
        p = w[i] * bwd[i + 1, j - 1] / denom * np.exp(bls[i + 1] - bls[i])
        if rng.random() < p:
            out[pos] = i
            pos += 1
            j -= 1
    return True


@njit(cache=True)
def _sample_many_kernel(w, k, bwd, bls, rng, out):
    row = np.empty(k, dtype=np.int64)
    for r in range(out.shape[0]):
        sample_kernel(w, k, bwd, bls, rng, row)
        out[r, :] = row


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _as_weights(w) -> np.ndarray:
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("weights must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("weights must be finite and strictly positive")
    return arr


def _normalised(w) -> np.ndarray:
    arr = _as_weights(w)
    return arr / arr.max()


def _check_k(K: int, k: int) -> None:
    if not 0 <= k <= K:
        raise ValueError(f"subset size {k} outside [0, {K}]")


def esp_table(w, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Backward DP table and per-row log scales for ``w`` up to order ``k``.

    ``table[i, j] * exp(logscale[i])`` equals ``e_j(w[i:])``.
    """
    arr = _as_weights(w)
    _check_k(arr.size, k)
    table = np.empty((arr.size + 1, k + 1))
    logscale = np.empty(arr.size + 1)
    backward_table(arr, k, table, logscale)
    return table, logscale


def elementary_symmetric(w, j: int) -> float:
    """``e_j(w)``: sum over all j-subsets of the product of their weights."""
    arr = _as_weights(w)
    if not 0 <= j <= arr.size:
        raise ValueError(f"order {j} outside [0, {arr.size}]")
    table, logscale = esp_table(arr, j)
    return float(table[0, j] * np.exp(logscale[0]))


def strategy_prob(w, strategy, k: int) -> float:
    arr = _normalised(w)
    K = arr.size
    _check_k(K, k)
    chans = sorted(int(f) for f in strategy)
    if len(chans) != k or len(set(chans)) != k or (chans and not 0 <= chans[0] <= chans[-1] < K):
        raise ValueError(f"{strategy!r} is not a {k}-subset of range({K})")
    table, logscale = esp_table(arr, k)
    if not table[0, k] > 0.0:
        raise DegenerateWeightsError("e_k(w) is zero")
    log_num = float(np.sum(np.log(arr[chans]))) if chans else 0.0
    return float(np.exp(log_num - logscale[0]) / table[0, k])


def marginals(w, k: int) -> np.ndarray:
    """Per-channel inclusion probability; sums to ``k``."""
    arr = _normalised(w)
    K = arr.size
    _check_k(K, k)
    fwd = np.empty((K + 1, k + 1))
    fls = np.empty(K + 1)
    bwd = np.empty((K + 1, k + 1))
    bls = np.empty(K + 1)
    forward_table(arr, k, fwd, fls)
    backward_table(arr, k, bwd, bls)
    out = np.empty(K)
    if k == 0:
        return np.zeros(K)
    if not marginals_kernel(arr, k, fwd, fls, bwd, bls, out):
        raise DegenerateWeightsError("e_k(w) is zero")
    return out


def sample_strategy(w, k: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Draw one k-subset with probability proportional to its weight product."""
    arr = _normalised(w)
    _check_k(arr.size, k)
    table, logscale = esp_table(arr, k)
    out = np.empty(k, dtype=np.int64)
    if not sample_kernel(arr, k, table, logscale, rng, out):
        raise DegenerateWeightsError("e_k(w) is zero")
    return tuple(int(f) for f in out)


def sample_many(w, k: int, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """``n_draws`` independent strategies as an (n_draws, k) int array."""
    arr = _normalised(w)
    _check_k(arr.size, k)
    if n_draws < 0:
        raise ValueError("n_draws must be nonnegative")
    table, logscale = esp_table(arr, k)
    if not table[0, k] > 0.0:
        raise DegenerateWeightsError("e_k(w) is zero")
    out = np.empty((n_draws, k), dtype=np.int64)
    _sample_many_kernel(arr, k, table, logscale, rng, out)
    return out


@dataclass(frozen=True)
class CoveringSet:
    """``ceil(K/k)`` strategies covering every channel.

    ``home[f]`` is the index of the block that owns channel ``f``'s partition
    slot.  Padding channels added to the last block keep their own home.
    """

    K: int
    k: int
    strategies: tuple[tuple[int, ...], ...]
    home: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.strategies)

    def membership(self) -> np.ndarray:
        """Boolean (blocks x K) matrix of channel membership."""
        mat = np.zeros((len(self.strategies), self.K), dtype=np.bool_)
        for b, s in enumerate(self.strategies):
            mat[b, list(s)] = True
        return mat


def build_covering_set(K: int, k: int) -> CoveringSet:
    if not 1 <= k <= K:
        raise ValueError(f"need 1 <= k <= K, got k={k}, K={K}")
    blocks = []
    home = [0] * K
    for b, start in enumerate(range(0, K, k)):
        own = list(range(start, min(start + k, K)))
        for f in own:
            home[f] = b
        pad = [f for f in range(K) if f not in own][: k - len(own)]
        blocks.append(tuple(sorted(own + pad)))
    return CoveringSet(K=K, k=k, strategies=tuple(blocks), home=tuple(home))


def n_strategies(K: int, k: int) -> int:
    return comb(K, k)
