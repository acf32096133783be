"""AOEECC-EXP3++ learner state machine.

One round of the learner:

1. ``make_schedule`` fixes beta_n, eta_n, delta_n and the per-channel
   exploration caps eps_n(f) = min(1/(2K), beta_n, xi_n(f)).
2. ``select_strategy`` samples from the mixture of the exponential-weights
   distribution over k-subsets and the covering strategies, and returns the
   per-channel marginals rho_n(f).
3. ``estimate_and_update`` folds the importance-weighted loss and power of the
   played channels into the cumulative estimates.
4. ``update_lagrange`` takes one projected step on the budget multiplier.
5. ``estimate_gaps`` refreshes the empirical gaps used by the next schedule.

The numba kernels below are also driven directly by the simulation engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .subset_dp import (
    CoveringSet,
    DegenerateWeightsError,
    backward_table,
    build_covering_set,
    forward_table,
    marginals_kernel,
    sample_kernel,
)

MODE_KNOWN_GAP = 0
MODE_AVG = 1
MODE_ADVERSARIAL = 2
MODES = {"known-gap": MODE_KNOWN_GAP, "avg": MODE_AVG, "adversarial-only": MODE_ADVERSARIAL}

# xi numerator: "theorem" uses ln(n*gap^2) with known gaps and (ln n)^2 with
# estimated gaps; "experiment" uses ln(n*gap^2) for both.
FORM_THEOREM = 0
FORM_EXPERIMENT = 1
XI_FORMS = {"theorem": FORM_THEOREM, "experiment": FORM_EXPERIMENT}

EXPERIMENT_C = 1.0 / 32.0
THEOREM_MIN_C = 18.0


class ScheduleError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    """A numeric invariant of the learner broke (e.g. zero play probability)."""


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def schedule_kernel(n, K, k, c, mode, form, gaps, m_rate, eta_m, xi, eps):
    """Fill ``xi`` and ``eps`` for round ``n``; return (beta, eta, delta, gamma).

    ``gaps`` holds the true gaps (known-gap mode) or the estimates from the
    previous round (avg mode).  ``m_rate`` is the cooperative probing-rate
    lower bound (1 for a single learner); the learning rate is beta scaled
    by sqrt(eta_m).
    """
    lnK = math.log(K)
    beta = 0.5 * math.sqrt(lnK / (n * K))
    delta = 2.0 * k / m_rate * math.sqrt(K * lnK / n)
    cap = 1.0 / (2.0 * K)
    gamma = 0.0
    for f in range(K):
        x = np.inf
        if mode != MODE_ADVERSARIAL:
            g = gaps[f]
            if g > 0.0:
                ng2 = n * g * g
                if form == FORM_THEOREM and mode == MODE_AVG:
                    if n > 1:
                        ln_n = math.log(n)
                        x = c * ln_n * ln_n / ng2
                elif ng2 > 1.0:
                    x = c * math.log(ng2) / ng2
                x = x / m_rate
        xi[f] = x
        e = cap
        if beta < e:
            e = beta
        if x < e:
            e = x
        eps[f] = e
        gamma += e
    return beta, beta * math.sqrt(eta_m), delta, gamma


@njit(cache=True)
def weights_kernel(psi, eta, k, w):
    """w(f) = exp(-eta * (Psi(f) - min Psi)), log floored at -700/k."""
    K = psi.shape[0]
    lo = psi[0]
    for f in range(1, K):
        if psi[f] < lo:
            lo = psi[f]
    floor = -700.0 / k
    for f in range(K):
        z = -eta * (psi[f] - lo)
        if z < floor:
            z = floor
        w[f] = math.exp(z)


@njit(cache=True)
def block_eps_kernel(eps, cov_home, n_blocks, out):
    for b in range(n_blocks):
        out[b] = 0.0
    for f in range(eps.shape[0]):
        out[cov_home[f]] += eps[f]


@njit(cache=True)
def select_kernel(w, k, gamma, eps, cov_members, cov_home, fwd, fls, bwd, bls,
                  block_eps, qmarg, rho, rng, strat):
    """Mixture draw; fills ``strat`` and ``rho``.  Returns 0 ok, 1 degenerate."""
    K = w.shape[0]
    n_blocks = cov_members.shape[0]
    forward_table(w, k, fwd, fls)
    backward_table(w, k, bwd, bls)
    if not marginals_kernel(w, k, fwd, fls, bwd, bls, qmarg):
        return 1
    block_eps_kernel(eps, cov_home, n_blocks, block_eps)
    for f in range(K):
        rho[f] = (1.0 - gamma) * qmarg[f]
    for b in range(n_blocks):
        for j in range(k):
            rho[cov_members[b, j]] += block_eps[b]
    u = rng.random()
    if u < gamma:
        acc = 0.0
        pick = n_blocks - 1
        for b in range(n_blocks):
            acc += block_eps[b]
            if u < acc:
                pick = b
                break
        for j in range(k):
            strat[j] = cov_members[pick, j]
    else:
        if not sample_kernel(w, k, bwd, bls, rng, strat):
            return 1
    return 0


@njit(cache=True)
def update_kernel(observed, prob, loss, power, lam, Ltilde, Gtilde, Psitilde, ptilde):
    """Importance-weighted accumulation over the observed channels.

    Fills ``ptilde`` with this round's power estimates (zero when unobserved).
    Returns 0 ok, 1 if an observed channel had zero observation probability.
    """
    K = Ltilde.shape[0]
    for f in range(K):
        ptilde[f] = 0.0
        if observed[f]:
            p = prob[f]
            if not p > 0.0:
                return 1
            lt = loss[f] / p
            pt = power[f] / p
            Ltilde[f] += lt
            Gtilde[f] += pt
            Psitilde[f] += lt + lam * pt
            ptilde[f] = pt
    return 0


@njit(cache=True)
def lagrange_step(lam, delta, eta, gamma, p_dot_P, P_o):
    step = eta * math.sqrt(gamma)
    v = (1.0 - delta * step) * lam - step * (P_o - p_dot_P)
    return v if v > 0.0 else 0.0


@njit(cache=True)
def dot_kernel(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


@njit(cache=True)
def gaps_kernel(Ltilde, n, out):
    K = Ltilde.shape[0]
    lo = Ltilde[0]
    for f in range(1, K):
        if Ltilde[f] < lo:
            lo = Ltilde[f]
    for f in range(K):
        g = (Ltilde[f] - lo) / n
        out[f] = g if g < 1.0 else 1.0


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    n: int
    beta_n: float
    eta_n: float
    delta_n: float
    xi: np.ndarray
    eps: np.ndarray
    gamma_n: float
    c: float
    mode: str


@dataclass
class PolicyState:
    """Full learner state; arrays are owned by this instance."""

    n: int
    Ltilde: np.ndarray
    Gammatilde: np.ndarray
    Psitilde: np.ndarray
    lam: float
    gap_hat: np.ndarray
    last_marginals: np.ndarray
    eps_access: float = 1.0

    @classmethod
    def initial(cls, K: int, eps_access: float = 1.0) -> "PolicyState":
        if not 0.0 < eps_access <= 1.0:
            raise ValueError("eps_access must lie in (0, 1]")
        z = np.zeros(K)
        return cls(0, z.copy(), z.copy(), z.copy(), 0.0, z.copy(), np.full(K, np.nan), eps_access)

    @property
    def K(self) -> int:
        return self.Ltilde.shape[0]

    def copy(self) -> "PolicyState":
        return replace(
            self,
            Ltilde=self.Ltilde.copy(),
            Gammatilde=self.Gammatilde.copy(),
            Psitilde=self.Psitilde.copy(),
            gap_hat=self.gap_hat.copy(),
            last_marginals=self.last_marginals.copy(),
        )


@dataclass(frozen=True)
class Observation:
    """Semi-bandit feedback: values defined exactly on the played channels."""

    strategy: tuple[int, ...]
    loss: np.ndarray
    power: np.ndarray
    transmitted: bool = True

    def __post_init__(self):
        if len(self.loss) != len(self.strategy) or len(self.power) != len(self.strategy):
            raise ValueError("loss/power must have one entry per played channel")


@dataclass(frozen=True)
class PowerBudget:
    P_o: float

    def __post_init__(self):
        if not 0.0 <= self.P_o <= 1.0:
            raise ValueError("P_o must lie in [0, 1]")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def make_schedule(n: int, K: int, k: int, c: float, mode: str, gap_hat=None, *,
                  xi_form: str = "experiment", m_rate: float = 1.0,
                  eta_m: float | None = None) -> Schedule:
    """Exploration schedule for round ``n``.

    ``gap_hat`` carries the estimated gaps (avg mode) or the true gaps
    (known-gap mode); it is ignored in adversarial-only mode.  With a
    cooperative probing rate ``m_rate`` > 1, xi and delta shrink by 1/m and
    the learning rate grows by sqrt(eta_m) (``eta_m`` defaults to m_rate).
    """
    if n < 1:
        raise ScheduleError("round index n must be >= 1")
    if K < 2 or not 1 <= k <= K:
        raise ScheduleError(f"need K >= 2 and 1 <= k <= K (K={K}, k={k})")
    if mode not in MODES:
        raise ScheduleError(f"unknown schedule mode {mode!r}")
    if xi_form not in XI_FORMS:
        raise ScheduleError(f"unknown xi form {xi_form!r}")
    if mode != "adversarial-only":
        if gap_hat is None:
            raise ScheduleError(f"mode {mode!r} needs per-channel gaps")
        if xi_form == "theorem" and c < THEOREM_MIN_C:
            raise ScheduleError(f"theorem schedules need c >= {THEOREM_MIN_C}, got {c}")
        gaps = np.asarray(gap_hat, dtype=np.float64)
        if gaps.shape != (K,):
            raise ScheduleError("gap vector must have length K")
    else:
        gaps = np.zeros(K)
    if m_rate < 1.0:
        raise ScheduleError("probing rate must be >= 1")
    eta_m = m_rate if eta_m is None else eta_m
    if eta_m < 1.0:
        raise ScheduleError("learning-rate scale must be >= 1")
    xi = np.empty(K)
    eps = np.empty(K)
    beta, eta, delta, gamma = schedule_kernel(n, K, k, float(c), MODES[mode], XI_FORMS[xi_form],
                                              gaps, float(m_rate), float(eta_m), xi, eps)
    return Schedule(n, beta, eta, delta, xi, eps, gamma, float(c), mode)


def weights(state: PolicyState, eta: float, k: int) -> np.ndarray:
    """Channel weights exp(-eta * Psi) rescaled so the largest is 1."""
    w = np.empty(state.K)
    weights_kernel(state.Psitilde, float(eta), k, w)
    return w


def select_strategy(state: PolicyState, schedule: Schedule, w, covering: CoveringSet,
                    rng: np.random.Generator) -> tuple[tuple[int, ...], np.ndarray]:
    """Sample I_n and return it with the marginals rho_n."""
    if schedule.gamma_n > 1.0:
        raise ScheduleError(f"gamma_n = {schedule.gamma_n} exceeds 1")
    w = np.asarray(w, dtype=np.float64)
    if w.max() > 1.0 + 1e-12:
        raise ValueError("weights must be pre-normalised to max 1")
    K, k = covering.K, covering.k
    scratch = _Scratch(K, k, len(covering))
    strat = np.empty(k, dtype=np.int64)
    rho = np.empty(K)
    status = select_kernel(w, k, schedule.gamma_n, schedule.eps, _members(covering),
                           np.asarray(covering.home, dtype=np.int64), scratch.fwd, scratch.fls,
                           scratch.bwd, scratch.bls, scratch.block_eps, scratch.qmarg, rho, rng,
                           strat)
    if status:
        raise DegenerateWeightsError("e_k(w) is zero")
    state.last_marginals = rho.copy()
    return tuple(int(f) for f in strat), rho


def estimate_and_update(state: PolicyState, schedule: Schedule, obs: Observation,
                        rho) -> PolicyState:
    """Return the successor state after folding in one round of feedback."""
    K = state.K
    observed = np.zeros(K, dtype=np.bool_)
    loss = np.zeros(K)
    power = np.zeros(K)
    for f, l, p in zip(obs.strategy, obs.loss, obs.power):
        observed[f] = True
        loss[f] = l
        power[f] = p
    return _apply_update(state, observed, np.asarray(rho, dtype=np.float64), loss, power)


def _apply_update(state, observed, prob, loss, power):
    new = state.copy()
    ptilde = np.empty(state.K)
    if update_kernel(observed, prob, loss, power, new.lam, new.Ltilde, new.Gammatilde,
                     new.Psitilde, ptilde):
        raise InvariantViolation("zero observation probability on an observed channel")
    new.n = state.n + 1
    new.last_ptilde = ptilde
    return new


def p_dot_ptilde(rho, ptilde) -> float:
    """Expected strategy power estimate sum_f rho(f) * P~(f)."""
    return float(dot_kernel(np.asarray(rho, float), np.asarray(ptilde, float)))


def update_lagrange(state: PolicyState, schedule: Schedule, p_dot_P: float,
                    P_o: float) -> PolicyState:
    new = state.copy()
    new.lam = lagrange_step(state.lam, schedule.delta_n, schedule.eta_n, schedule.gamma_n,
                            float(p_dot_P), float(P_o))
    return new


def estimate_gaps(state: PolicyState) -> np.ndarray:
    if state.n < 1:
        raise ValueError("gap estimates need n >= 1")
    out = np.empty(state.K)
    gaps_kernel(state.Ltilde, float(state.n), out)
    return out


def access_decision(eps_access: float, rng: np.random.Generator) -> bool:
    """Bernoulli(eps_access): whether this round carries data."""
    if not 0.0 < eps_access <= 1.0:
        raise ValueError("eps_access must lie in (0, 1]")
    return bool(rng.random() < eps_access)


def minibatch_tau(K: int, k: int, n: int) -> int:
    """Batch length (4k sqrt(K ln K))^(-1/3) n^(1/3), rounded, at least 1."""
    tau = (4.0 * k * math.sqrt(K * math.log(K))) ** (-1.0 / 3.0) * n ** (1.0 / 3.0)
    return max(1, int(round(tau)))


# ---------------------------------------------------------------------------
# stateful learners
# ---------------------------------------------------------------------------


class _Scratch:
    def __init__(self, K, k, n_blocks):
        self.fwd = np.empty((K + 1, k + 1))
        self.fls = np.empty(K + 1)
        self.bwd = np.empty((K + 1, k + 1))
        self.bls = np.empty(K + 1)
        self.block_eps = np.empty(n_blocks)
        self.qmarg = np.empty(K)


def _members(covering: CoveringSet) -> np.ndarray:
    return np.asarray(covering.strategies, dtype=np.int64)


@dataclass
class AoeeccPolicy:
    """The constrained learner as an object: ``select`` then ``observe`` once per round.

    ``true_gaps`` is required in known-gap mode.  ``freeze_lambda`` keeps the
    multiplier at zero (plain combinatorial EXP3 when paired with
    adversarial-only mode).
    """

    K: int
    k: int
    mode: str = "avg"
    c: float = EXPERIMENT_C
    xi_form: str = "experiment"
    P_o: float = 1.0
    eps_access: float = 1.0
    freeze_lambda: bool = False
    m_rate: float = 1.0
    eta_m: float | None = None
    true_gaps: np.ndarray | None = None
    state: PolicyState = field(init=False)
    covering: CoveringSet = field(init=False)
    schedule: Schedule | None = field(init=False, default=None)

    def __post_init__(self):
        self.state = PolicyState.initial(self.K, self.eps_access)
        self.covering = build_covering_set(self.K, self.k)
        if self.mode == "known-gap" and self.true_gaps is None:
            raise ScheduleError("known-gap mode needs true_gaps")

    def _gaps(self):
        if self.mode == "known-gap":
            return self.true_gaps
        if self.mode == "avg":
            return self.state.gap_hat
        return None

    def select(self, rng: np.random.Generator):
        n = self.state.n + 1
        self.schedule = make_schedule(n, self.K, self.k, self.c, self.mode, self._gaps(),
                                      xi_form=self.xi_form, m_rate=self.m_rate,
                                      eta_m=self.eta_m)
        w = weights(self.state, self.schedule.eta_n, self.k)
        return select_strategy(self.state, self.schedule, w, self.covering, rng)

    def observe(self, strategy, loss, power, rho) -> None:
        obs = Observation(tuple(strategy), np.asarray(loss, float), np.asarray(power, float))
        new = estimate_and_update(self.state, self.schedule, obs, rho)
        self._finish(new, rho)

    def observe_masked(self, observed, prob, loss, power, rho) -> None:
        """Update from an arbitrary observed set with its observation probabilities."""
        new = _apply_update(self.state, np.asarray(observed, np.bool_),
                            np.asarray(prob, float), np.asarray(loss, float),
                            np.asarray(power, float))
        self._finish(new, rho)

    def _finish(self, new: PolicyState, rho) -> None:
        if not self.freeze_lambda:
            new = update_lagrange(new, self.schedule, p_dot_ptilde(rho, new.last_ptilde),
                                  self.P_o)
        new.gap_hat = estimate_gaps(new)
        self.state = new


class MinibatchPolicy:
    """Replays one inner draw for ``tau`` rounds and feeds back batch means."""

    def __init__(self, inner, tau: int):
        if tau < 1:
            raise ValueError("tau must be >= 1")
        self.inner = inner
        self.tau = tau
        self._left = 0
        self._current = None
        self._loss = None
        self._power = None
        self._count = 0

    @property
    def state(self) -> PolicyState:
        return self.inner.state

    def select(self, rng: np.random.Generator):
        if self._left == 0:
            self._current = self.inner.select(rng)
            self._left = self.tau
            self._loss = np.zeros(self.inner.k)
            self._power = np.zeros(self.inner.k)
            self._count = 0
        return self._current

    def observe(self, strategy, loss, power, rho) -> None:
        self._loss += np.asarray(loss, float)
        self._power += np.asarray(power, float)
        self._count += 1
        self._left -= 1
        if self._left == 0:
            s, r = self._current
            self.inner.observe(s, self._loss / self._count, self._power / self._count, r)


def minibatch_wrap(inner, tau: int) -> MinibatchPolicy:
    return MinibatchPolicy(inner, tau)
