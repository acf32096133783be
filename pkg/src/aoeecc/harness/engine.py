"""Round loop: one jitted kernel plus a slow reference built from the public API.

Both paths consume four independent generators spawned from the run seed
(policy, access, environment, cooperative probes) in the same order, so for
identical configs they produce identical trajectories.  The reference exists
to cross-check the kernel on short horizons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..baselines import hindsight_value_kernel, ucb_select_kernel, ucb_update_kernel
from ..coop import draw_extras_kernel, obs_prob_kernel
from ..envs import I_THETA, channel_gaps, env_record, env_step, pack, physical_mean_loss, strategy_gaps
from ..policy import (
    MODE_KNOWN_GAP,
    MODES,
    XI_FORMS,
    dot_kernel,
    gaps_kernel,
    lagrange_step,
    schedule_kernel,
    select_kernel,
    update_kernel,
    weights_kernel,
)
from ..subset_dp import build_covering_set
from .config import RunConfig

POL_EXP_WEIGHTS = 0
POL_UCB = 1

# output columns
O_T, O_REAL, O_PSEUDO, O_VIOL, O_LAM, O_EE, O_POWER, O_POWER_NOW, O_LOSS_NOW, O_BEST = range(10)
N_OUT = 10

# diagnostic slots
D_LAMBDA_BREACH, D_M_SUM, D_M_FLAGGED, D_RHO_RATIO_MIN, D_FAIL_T = range(5)
N_DIAG = 5

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_RHO_SUM = 2
STATUS_RHO_FLOOR = 3
STATUS_ZERO_PROB = 4
STATUS_MESSAGES = {
    STATUS_DEGENERATE: "degenerate weights (e_k(w) = 0)",
    STATUS_RHO_SUM: "marginals do not sum to k",
    STATUS_RHO_FLOOR: "a marginal fell below its exploration floor",
    STATUS_ZERO_PROB: "observed channel with zero observation probability",
}


class InvariantError(RuntimeError):
    """A numeric invariant broke mid-run; carries a diagnostic dump."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


def checkpoints(n: int, dense: int = 1000, per_decade: int = 50) -> np.ndarray:
    """Every round up to ``dense``, then geometric spacing, always ending at n."""
    pts = list(range(1, min(n, dense) + 1))
    if n > dense:
        ratio = 10.0 ** (1.0 / per_decade)
        x = float(dense)
        while True:
            x *= ratio
            t = int(round(x))
            if t >= n:
                break
            if t > pts[-1]:
                pts.append(t)
        pts.append(n)
    return np.asarray(pts, dtype=np.int64)


@njit(cache=True)
def run_kernel(n, K, k, pol_kind, mode, form, c, m_rate, eta_m, freeze, P_o, eps_access, tau, M,
               m_coop, cov_members, cov_home, sched_gaps, mu, pbar, best_sum, ip, fp, chan,
               targets, hist, ist, used, rng_pol, rng_acc, rng_env, rng_coop, t_sp, t_a, ck,
               out, out_strat, diag):
    # policy state
    Lt = np.zeros(K)
    Gt = np.zeros(K)
    Psi = np.zeros(K)
    gap_hat = np.zeros(K)
    lam = 0.0
    n_in = 0
    xi = np.empty(K)
    eps = np.empty(K)
    w = np.empty(K)
    fwd = np.empty((K + 1, k + 1))
    fls = np.empty(K + 1)
    bwd = np.empty((K + 1, k + 1))
    bls = np.empty(K + 1)
    n_blocks = cov_members.shape[0]
    block_eps = np.empty(n_blocks)
    qmarg = np.empty(K)
    rho = np.zeros(K)
    prob = np.empty(K)
    ptilde = np.empty(K)
    strat = np.empty(k, dtype=np.int64)
    observed = np.zeros(K, dtype=np.bool_)
    obs_loss = np.zeros(K)
    obs_pow = np.zeros(K)
    batch_loss = np.zeros(k)
    batch_pow = np.zeros(k)
    batch_cnt = 0
    beta = 0.0
    eta = 0.0
    delta = 0.0
    gamma = 0.0
    counts = np.zeros(K, dtype=np.int64)
    means = np.zeros(K)
    extras = np.empty((M if M > 1 else 1, k), dtype=np.int64)
    scratch = np.empty(K, dtype=np.int64)
    # env and metrics
    loss = np.empty(K)
    power = np.empty(K)
    Lchan = np.zeros(K)
    played = 0.0
    pseudo = 0.0
    viol = 0.0
    power_sum = 0.0
    gain_sum = 0.0
    n_tx = 0
    ci = 0
    n_ck = ck.shape[0]
    diag[D_RHO_RATIO_MIN] = np.inf
    for t in range(1, n + 1):
        # --- select -------------------------------------------------------
        if pol_kind == POL_UCB:
            ucb_select_kernel(counts, means, t, k, cov_members, strat)
            for f in range(K):
                rho[f] = 0.0
            for j in range(k):
                rho[strat[j]] = 1.0
        elif batch_cnt == 0:
            n_in += 1
            beta, eta, delta, gamma = schedule_kernel(
                n_in, K, k, c, mode, form, sched_gaps if mode == MODE_KNOWN_GAP else gap_hat,
                m_rate, eta_m, xi, eps)
            weights_kernel(Psi, eta, k, w)
            if select_kernel(w, k, gamma, eps, cov_members, cov_home, fwd, fls, bwd, bls,
                             block_eps, qmarg, rho, rng_pol, strat):
                diag[D_FAIL_T] = t
                return STATUS_DEGENERATE
            s = 0.0
            for f in range(K):
                s += rho[f]
                if rho[f] < eps[f] * (1.0 - 1e-12):
                    diag[D_FAIL_T] = t
                    return STATUS_RHO_FLOOR
                r = rho[f] / (k * eps[f])
                if r < diag[D_RHO_RATIO_MIN]:
                    diag[D_RHO_RATIO_MIN] = r
            if abs(s - k) > 1e-9:
                diag[D_FAIL_T] = t
                return STATUS_RHO_SUM
        # --- environment --------------------------------------------------
        env_step(t, ip, fp, chan, targets, hist, ist, used, rng_env, loss, power)
        env_record(strat, hist, ist, ip[I_THETA])
        tx = rng_acc.random() < eps_access
        # --- learn --------------------------------------------------------
        if pol_kind == POL_UCB:
            sl = np.empty(k)
            for j in range(k):
                sl[j] = loss[strat[j]]
            ucb_update_kernel(counts, means, strat, sl)
        else:
            for j in range(k):
                batch_loss[j] += loss[strat[j]]
                batch_pow[j] += power[strat[j]]
            batch_cnt += 1
            if batch_cnt >= tau:
                for f in range(K):
                    observed[f] = False
                    obs_loss[f] = 0.0
                    obs_pow[f] = 0.0
                for j in range(k):
                    f = strat[j]
                    observed[f] = True
                    obs_loss[f] = batch_loss[j] / batch_cnt
                    obs_pow[f] = batch_pow[j] / batch_cnt
                    batch_loss[j] = 0.0
                    batch_pow[j] = 0.0
                batch_cnt = 0
                if M > 1:
                    d = draw_extras_kernel(K, k, M, strat, rng_coop, scratch, extras, observed)
                    for f in range(K):
                        if observed[f]:
                            obs_loss[f] = loss[f]
                            obs_pow[f] = power[f]
                    m_meas = 1.0 + (K - 1) * (d - k) / (K - k) if K > k else float(K)
                    diag[D_M_SUM] += m_meas
                    if m_meas < m_rate:
                        diag[D_M_FLAGGED] += 1
                    obs_prob_kernel(rho, m_coop, prob)
                else:
                    for f in range(K):
                        prob[f] = rho[f]
                if update_kernel(observed, prob, obs_loss, obs_pow, lam, Lt, Gt, Psi, ptilde):
                    diag[D_FAIL_T] = t
                    return STATUS_ZERO_PROB
                if not freeze:
                    lam = lagrange_step(lam, delta, eta, gamma, dot_kernel(rho, ptilde), P_o)
                    if lam > P_o / delta + 1e-6:
                        diag[D_LAMBDA_BREACH] += 1
                gaps_kernel(Lt, float(n_in), gap_hat)
        # --- metrics ------------------------------------------------------
        for f in range(K):
            Lchan[f] += loss[f]
        g = 0.0
        loss_now = 0.0
        for j in range(k):
            f = strat[j]
            loss_now += loss[f]
            played += loss[f]
            pseudo += mu[f]
            g += 1.0 - loss[f]
        pseudo -= best_sum
        if tx:
            n_tx += 1
            gain_sum += g / k
        ep = 0.0
        for f in range(K):
            ep += rho[f] * pbar[f]
        power_sum += ep
        viol += ep - P_o
        if ci < n_ck and ck[ci] == t:
            best = hindsight_value_kernel(Lchan, k)
            out[ci, O_T] = t
            out[ci, O_REAL] = played - best
            out[ci, O_PSEUDO] = pseudo
            out[ci, O_VIOL] = viol
            out[ci, O_LAM] = lam
            out[ci, O_EE] = gain_sum * t_a / (t * t_sp + n_tx * t_a)
            out[ci, O_POWER] = power_sum / t
            out[ci, O_POWER_NOW] = ep
            out[ci, O_LOSS_NOW] = loss_now
            out[ci, O_BEST] = best
            for j in range(k):
                out_strat[ci, j] = strat[j]
            ci += 1
    return STATUS_OK


# ---------------------------------------------------------------------------
# python-side wiring
# ---------------------------------------------------------------------------


@dataclass
class Prepared:
    """Everything the kernel needs, derived once from a config."""

    cfg: RunConfig
    env: object
    mu: np.ndarray
    pbar: np.ndarray
    best_sum: float
    sched_gaps: np.ndarray
    cov_members: np.ndarray
    cov_home: np.ndarray
    m_coop: float


def prepare(cfg: RunConfig) -> Prepared:
    spec = cfg.env_spec()
    env = pack(spec)
    base = cfg.base_spec()
    if base.generator == "ee-physical":
        mu = physical_mean_loss(base)
    else:
        mu = base.mu.copy()
    best_sum = float(np.sort(mu)[: cfg.k].sum())
    sched_gaps = strategy_gaps(mu, cfg.k)
    cov = build_covering_set(cfg.K, cfg.k)
    from ..coop import effective_probing_rate

    return Prepared(cfg, env, mu, base.power_mean.copy(), best_sum, sched_gaps,
                    np.asarray(cov.strategies, dtype=np.int64),
                    np.asarray(cov.home, dtype=np.int64),
                    effective_probing_rate(cfg.K, cfg.k, cfg.coop.M))


def spawn_rngs(seed: int) -> tuple[np.random.Generator, ...]:
    """(policy, access, env, coop) generators."""
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))


@dataclass
class KernelResult:
    table: np.ndarray  # (n_checkpoints, N_OUT)
    strategies: np.ndarray  # (n_checkpoints, k)
    diag: np.ndarray
    status: int
    history: "History | None" = None


def run_fast(cfg: RunConfig, ck: np.ndarray | None = None) -> KernelResult:
    prep = prepare(cfg)
    if ck is None:
        ck = checkpoints(cfg.n_rounds)
    rp, ra, re, rc = spawn_rngs(cfg.seed)
    out = np.full((ck.size, N_OUT), np.nan)
    out_strat = np.full((ck.size, cfg.k), -1, dtype=np.int64)
    diag = np.zeros(N_DIAG)
    e = prep.env
    ucb = cfg.policy == "combucb1"
    status = run_kernel(
        cfg.n_rounds, cfg.K, cfg.k, POL_UCB if ucb else POL_EXP_WEIGHTS,
        MODES.get(cfg.schedule_mode, 0), XI_FORMS[cfg.schedule.xi_form], float(cfg.schedule.c),
        float(cfg.m_rate), float(cfg.eta_m), cfg.policy == "exp3" or ucb, float(cfg.P_o), float(cfg.eps_access),
        max(cfg.tau, 1), cfg.coop.M, float(prep.m_coop), prep.cov_members, prep.cov_home,
        prep.sched_gaps, prep.mu, prep.pbar, prep.best_sum, e.ip, e.fp, e.chan, e.targets,
        e.hist, e.ist, e.used, rp, ra, re, rc, cfg.timing.t_s + cfg.timing.t_p, cfg.timing.t_a,
        ck, out, out_strat, diag)
    return KernelResult(out, out_strat, diag, int(status))


def run_reference(cfg: RunConfig, ck: np.ndarray | None = None) -> KernelResult:
    """Same loop written against the public objects; slow, for cross-checks."""
    from ..baselines import UcbState, combucb1_select, combucb1_update, exp3_policy, hindsight_best
    from ..coop import coop_observe, coop_select
    from ..envs import Env
    from ..policy import AoeeccPolicy, MinibatchPolicy, Observation

    prep = prepare(cfg)
    if ck is None:
        ck = checkpoints(cfg.n_rounds)
    rp, ra, re, rc = spawn_rngs(cfg.seed)
    env = Env(cfg.env_spec())
    K, k = cfg.K, cfg.k
    ucb = cfg.policy == "combucb1"
    if ucb:
        ustate = UcbState.initial(K)
    else:
        kw = dict(c=cfg.schedule.c, xi_form=cfg.schedule.xi_form, P_o=cfg.P_o,
                  eps_access=cfg.eps_access, m_rate=cfg.m_rate, eta_m=cfg.eta_m)
        if cfg.policy == "exp3":
            pol = exp3_policy(K, k, **kw)
        else:
            pol = AoeeccPolicy(K, k, mode=cfg.schedule_mode, true_gaps=prep.sched_gaps, **kw)
        learner = MinibatchPolicy(pol, cfg.tau) if cfg.tau > 1 else pol
    out = np.full((ck.size, N_OUT), np.nan)
    out_strat = np.full((ck.size, k), -1, dtype=np.int64)
    hist = History(np.empty((cfg.n_rounds, k), dtype=np.int64), np.empty((cfg.n_rounds, K)),
                   np.empty(cfg.n_rounds), prep.mu.copy())
    Lchan = np.zeros(K)
    played = pseudo = viol = power_sum = gain_sum = 0.0
    n_tx = 0
    ci = 0
    t_sp = cfg.timing.t_s + cfg.timing.t_p
    for t in range(1, cfg.n_rounds + 1):
        obs_set = None
        if ucb:
            strat = combucb1_select(ustate, k)
            rho = np.zeros(K)
            rho[list(strat)] = 1.0
        elif cfg.coop.M > 1:
            obs_set, rho = coop_select(pol, cfg.coop.M, rp, rc)
            strat = obs_set.chosen
        else:
            strat, rho = learner.select(rp)
        outc = env.step(t, re)
        env.record(strat)
        tx = ra.random() < cfg.eps_access
        if ucb:
            ustate = combucb1_update(ustate, Observation(tuple(strat), outc.loss[list(strat)],
                                                         outc.power[list(strat)]))
        elif cfg.coop.M > 1:
            coop_observe(pol, obs_set, outc.loss, outc.power, rho, cfg.coop.M)
        else:
            learner.observe(strat, outc.loss[list(strat)], outc.power[list(strat)], rho)
        Lchan += outc.loss
        idx = list(strat)
        played += outc.loss[idx].sum()
        pseudo += prep.mu[idx].sum() - prep.best_sum
        if tx:
            n_tx += 1
            gain_sum += (1.0 - outc.loss[idx]).sum() / k
        ep = float(np.dot(rho, prep.pbar))
        power_sum += ep
        viol += ep - cfg.P_o
        hist.strategies[t - 1] = idx
        hist.losses[t - 1] = outc.loss
        hist.expected_power[t - 1] = ep
        if ci < ck.size and ck[ci] == t:
            lam = 0.0 if ucb else learner.state.lam
            best = hindsight_best(Lchan, k)[1]
            out[ci] = (t, played - best, pseudo, viol, lam,
                       gain_sum * cfg.timing.t_a / (t * t_sp + n_tx * cfg.timing.t_a),
                       power_sum / t, ep, outc.loss[idx].sum(), best)
            out_strat[ci] = idx
            ci += 1
    return KernelResult(out, out_strat, np.zeros(N_DIAG), STATUS_OK, hist)


@dataclass
class History:
    """Unmasked per-round trace kept by the reference loop."""

    strategies: np.ndarray  # (n, k)
    losses: np.ndarray  # (n, K) full true loss vectors
    expected_power: np.ndarray  # (n,)
    mu: np.ndarray | None = None


def status_message(status: int) -> str:
    return STATUS_MESSAGES.get(status, f"status {status}")


def channel_gap_vector(mu) -> np.ndarray:
    return channel_gaps(mu)[0]


def sqrt_bound(n: int, K: int, k: int) -> float:
    """4k sqrt(n K ln K)."""
    return 4.0 * k * math.sqrt(n * K * math.log(K))
