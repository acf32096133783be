"""End-to-end acceptance checks at their stated tolerances.

Each test prints a single verdict line (also repeated in the pytest terminal
summary) before asserting, so a failing criterion still reports its numbers.
"""
import functools
import math
import time
from itertools import combinations

import numpy as np
import pytest
from scipy import stats

from aoeecc.coop import coop_select, effective_probing_rate
from aoeecc.ee_model import TimingParams, ee_lower_bound, ee_ordering_chain, time_budget
from aoeecc.harness.config import RunConfig, dumps, loads
from aoeecc.harness.engine import run_fast, sqrt_bound
from aoeecc.harness.oracle import brute_marginals, brute_strategy_probs
from aoeecc.harness.runner import run_experiment
from aoeecc.policy import AoeeccPolicy, PolicyState, make_schedule, select_strategy
from aoeecc.subset_dp import build_covering_set, marginals, sample_many, strategy_prob

SEEDS = range(10)
N = 100_000
BASE = RunConfig(K=8, k=2, n_rounds=N)


@functools.lru_cache(maxsize=None)
def _runs(cfg_text: str):
    cfg = loads(cfg_text)
    return tuple(run_experiment(cfg.replace(seed=s)) for s in SEEDS)


def runs(**changes):
    return _runs(dumps(BASE.replace(**changes)))


def curve(results, field="regret"):
    """(t, 10-seed mean) over the shared checkpoints."""
    t = results[0].column("t")
    return t, np.mean([r.column(field) for r in results], axis=0)


def at(t, y, when):
    return float(y[np.argmin(np.abs(t - when))])


def final_mean(results, field="regret"):
    return float(np.mean([getattr(r.final, field) for r in results]))


# 1 ---------------------------------------------------------------------------


def test_sampler_exactness(report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_p = worst_m = 0.0
    for K in range(1, 11):
        for k in range(1, min(K, 3) + 1):
            for _ in range(50):
                w = np.exp(rng.normal(0.0, 2.0, K))
                for s, p in brute_strategy_probs(w, k).items():
                    worst_p = max(worst_p, abs(strategy_prob(w, s, k) - p) / p)
                worst_m = max(worst_m, float(np.abs(marginals(w, k) - brute_marginals(w, k)).max()))
    chi_ok = []
    for K in range(2, 7):
        for k in range(1, min(K - 1, 3) + 1):
            w = rng.uniform(0.05, 1.0, K)
            subsets = list(combinations(range(K), k))
            draws = sample_many(w, k, 100_000, rng)
            codes = (draws * (K ** np.arange(k))).sum(axis=1)
            lookup = {sum(f * K ** j for j, f in enumerate(s)): i for i, s in enumerate(subsets)}
            counts = np.bincount([lookup[c] for c in codes], minlength=len(subsets))
            exp = np.array([strategy_prob(w, s, k) for s in subsets]) * len(draws)
            stat = float(((counts - exp) ** 2 / exp).sum())
            chi_ok.append(stat < stats.chi2.ppf(0.999, len(subsets) - 1))
    elapsed = time.perf_counter() - start
    ok = worst_p <= 1e-10 and worst_m <= 1e-10 and all(chi_ok) and elapsed < 10
    report(1, "sampler exactness", ok,
           f"max rel prob err {worst_p:.2e}, max marginal err {worst_m:.2e}, "
           f"chi-square {sum(chi_ok)}/{len(chi_ok)} pass at 0.999, {elapsed:.1f}s")
    assert ok


# 2 ---------------------------------------------------------------------------


def test_unbiased_estimation(report):
    K, k, n_draws, lam = 8, 2, 100_000, 0.8
    rng = np.random.default_rng(2)
    loss = np.linspace(0.15, 0.85, K)
    power = np.linspace(0.05, 0.45, K)
    gaps = np.abs(rng.normal(0.1, 0.05, K))
    sched = make_schedule(50, K, k, 1 / 32, "avg", gaps)
    cov = build_covering_set(K, k)
    state = PolicyState.initial(K)
    state.lam = lam
    w = rng.uniform(0.2, 1.0, K)
    w /= w.max()
    Lt, Pt = np.zeros((n_draws, K)), np.zeros((n_draws, K))
    for i in range(n_draws):
        s, rho = select_strategy(state, sched, w, cov, rng)
        idx = list(s)
        Lt[i, idx] = loss[idx] / rho[idx]
        Pt[i, idx] = power[idx] / rho[idx]

    def z(samples, target):
        return np.abs(samples.mean(axis=0) - target) / (samples.std(axis=0) / math.sqrt(len(samples)))

    z_l, z_p = z(Lt, loss), z(Pt, power)
    # cooperative estimate: played strategy plus M-1 uniform probes
    M = 3
    pol = AoeeccPolicy(K, k)
    pol.state.lam = lam
    m = effective_probing_rate(K, k, M)
    Psi = np.zeros((n_draws, K))
    for i in range(n_draws):
        obs, rho = coop_select(pol, M, rng, rng)
        idx = list(obs.observed_channels)
        prob = rho[idx] + (1 - rho[idx]) * (m - 1) / (K - 1)
        Psi[i, idx] = (loss[idx] + lam * power[idx]) / prob
        pol.state.n = 0
    z_psi = z(Psi, loss + lam * power)
    ok = max(z_l.max(), z_p.max(), z_psi.max()) <= 3.0
    report(2, "unbiased estimation", ok,
           f"max |z| loss {z_l.max():.2f}, power {z_p.max():.2f}, "
           f"cooperative psi {z_psi.max():.2f} (limit 3)")
    assert ok


# 3 ---------------------------------------------------------------------------


def test_stochastic_polylog_and_ordering(report):
    start = time.perf_counter()
    avg, exp3 = runs(), runs(policy="exp3")
    elapsed = time.perf_counter() - start
    t, ra = curve(avg)
    _, re = curve(exp3)
    ratio_avg = at(t, ra, N) / at(t, ra, N // 10)
    ratio_exp3 = at(t, re, N) / at(t, re, N // 10)
    rel = final_mean(avg) / final_mean(exp3)
    ok = ratio_avg <= 4 and ratio_exp3 > ratio_avg and rel <= 0.8 and elapsed < 120
    report(3, "stochastic regime", ok,
           f"R(1e5)/R(1e4) AVG {ratio_avg:.2f} vs EXP3 {ratio_exp3:.2f}; "
           f"AVG/EXP3 final regret {final_mean(avg):.0f}/{final_mean(exp3):.0f} = {rel:.3f}; "
           f"{elapsed:.1f}s")
    assert ok


# 4 ---------------------------------------------------------------------------


def test_adversarial_bound_and_shape(report):
    res = runs(regime="adversarial")
    worst = max(float(np.max(r.column("regret") / [sqrt_bound(int(x), 8, 2)
                                                 for x in r.column("t")])) for r in res)
    t, mean = curve(res)
    g = mean / np.sqrt(t)
    dec = g[t >= N // 10]
    shape = max(float(np.max(dec[i + 1:] / dec[i])) for i in range(len(dec) - 1))
    ok = worst <= 1.0 and shape <= 1.2
    report(4, "adversarial regime", ok,
           f"max regret/bound over seeds and checkpoints {worst:.3f}; "
           f"regret/sqrt(n) {dec[0]:.2f} -> {dec[-1]:.2f}, worst later/earlier {shape:.3f} (limit 1.2)")
    assert ok


# 5 ---------------------------------------------------------------------------


@pytest.mark.parametrize("regime", ["stochastic", "adversarial", "mixed", "contaminated"])
def test_violation_sublinear(report, regime):
    res = runs(regime=regime)
    t, v = curve(res, "violation")
    v = np.maximum(v, 0.0)
    early, late = at(t, v, 1000) / 1000 ** 0.75, at(t, v, N) / N ** 0.75
    power = final_mean(res, "avg_power")
    P_o = BASE.P_o
    ok = late <= 1.5 * early and power <= P_o + 0.05
    report(5, f"violation ({regime})", ok,
           f"viol/n^0.75 at 1e3 {early:.4f}, at 1e5 {late:.4f}; average power {power:.4f} "
           f"(limit {P_o + 0.05:.2f})")
    assert ok


# 6 ---------------------------------------------------------------------------


def test_contaminated(report):
    cont = runs(regime="contaminated", **{"env.zeta": 0.25})
    clean = runs()
    t, rc = curve(cont)
    c_final = final_mean(cont)
    clean_real = final_mean(clean, "realized_regret")
    clean_pseudo = final_mean(clean)
    ratio = at(t, rc, N) / at(t, rc, N // 10)
    ok = c_final <= 3 * clean_real and c_final <= 3 * clean_pseudo and ratio <= 4
    report(6, "contaminated regime", ok,
           f"regret {c_final:.0f} vs clean realized {clean_real:.0f} / pseudo {clean_pseudo:.0f} "
           f"(x{c_final / clean_real:.2f}); R(1e5)/R(1e4) {ratio:.2f}")
    assert ok


# 7 ---------------------------------------------------------------------------


def test_mixed_between(report):
    sto = final_mean(runs(), "realized_regret")
    adv = final_mean(runs(regime="adversarial"), "realized_regret")
    mix = final_mean(runs(regime="mixed", **{"env.mixed.jammed": [0]}), "realized_regret")
    lo, hi = sorted((sto, adv))
    ok = lo <= mix <= hi
    report(7, "mixed regime", ok,
           f"stochastic {sto:.0f} <= mixed {mix:.0f} <= adversarial {adv:.0f}")
    assert ok


# 8 ---------------------------------------------------------------------------


def _last_decade_decreasing(t, y):
    rate = y / t
    d = rate[t >= N // 10]
    return bool(d[-1] < d[0]), float(d[0]), float(d[-1])


def test_adaptive_jammer_minibatch(report):
    common = {"regime": "adversarial", "env.attack": "adaptive", "env.adaptive.theta": 5}
    plain = runs(**common)
    batched = runs(**common, **{"minibatch.tau": "auto"})
    tau = BASE.replace(**{"minibatch.tau": "auto"}).tau
    rp, rb = final_mean(plain), final_mean(batched)
    t, cp = curve(plain)
    _, cb = curve(batched)
    dec_p, p0, p1 = _last_decade_decreasing(t, cp)
    dec_b, b0, b1 = _last_decade_decreasing(t, cb)
    ok = rb <= 0.9 * rp and dec_p and dec_b
    report(8, "adaptive jammer + minibatch", ok,
           f"tau={tau}: minibatch regret {rb:.0f} vs unwrapped {rp:.0f} (x{rb / rp:.2f}, limit 0.9); "
           f"regret/n last decade unwrapped {p0:.4f}->{p1:.4f}, minibatch {b0:.4f}->{b1:.4f}")
    assert ok


# 9 ---------------------------------------------------------------------------


def test_cooperative_speedup(report):
    M = 3
    solo = runs()
    team = runs(**{"coop.M": M})
    m_meas = float(np.mean([r.diagnostics["mean_measured_m"] for r in team]))
    rs, rt = final_mean(solo), final_mean(team)
    ok = m_meas >= 4 and rt <= 2 / 3 * rs
    report(9, "cooperative speedup", ok,
           f"M={M}, measured m {m_meas:.2f}; regret {rt:.0f} vs solo {rs:.0f} (x{rt / rs:.2f}, "
           "limit 0.667)")
    assert ok


# 10 --------------------------------------------------------------------------


def test_ee_accounting(report):
    rng = np.random.default_rng(10)
    holds = 0
    n_inst = 10_000
    for _ in range(n_inst):
        kk = int(rng.integers(2, 5))
        rates = rng.uniform(0.0, 5.0, kk)
        P_c = rng.uniform(0.1, 1.0, kk)
        P_tx = rng.uniform(0.0, 1.0, kk)
        holds += ee_ordering_chain(rates, P_c, P_tx)[0]
    chain_ok = holds == n_inst

    tm = TimingParams()
    res = runs(regime="adversarial")
    margins = []
    for r in res:
        g_max = 1.0 - r.final.hindsight / (N * 2)
        margins.append(r.final.ee - ee_lower_bound(g_max, N, 8, 2, BASE.eps_access, tm))
    floor_ok = min(margins) >= 0

    budget_ok = all(
        time_budget(n, eps, TimingParams(ts, tp, ta)) == n * (ts + tp) + eps * n * ta
        for n in (1, 100, 10**5, 10**7) for eps in (0.0, 0.25, 1.0)
        for ts, tp, ta in ((0.01, 0.01, 2.0), (0.003, 0.0, 1.5)))
    budget_ok &= time_budget(100, 1.0, TimingParams(0.01, 0.01, 2.0)) == pytest.approx(202.0)
    ok = chain_ok and floor_ok and budget_ok
    report(10, "EE accounting", ok,
           f"ordering chain holds on {holds}/{n_inst} instances; EE floor margin min "
           f"{min(margins):.3f}; time budget exact: {budget_ok}")
    assert ok


# 11 --------------------------------------------------------------------------


def test_performance_envelope(report):
    big = RunConfig(K=32, k=4, n_rounds=1_000_000)
    run_fast(big.replace(n_rounds=1000))  # compile outside the timer
    start = time.perf_counter()
    res = run_fast(big)
    big_time = time.perf_counter() - start
    n = 200_000
    Kk, secs = [], []
    for K in (8, 16, 32, 64):
        cfg = RunConfig(K=K, k=4, n_rounds=n)
        start = time.perf_counter()
        run_fast(cfg)
        secs.append(time.perf_counter() - start)
        Kk.append(K * 4)
    slope, icpt = np.polyfit(Kk, secs, 1)
    fit = icpt + slope * np.asarray(Kk)
    worst = float(np.max(np.maximum(secs / fit, fit / secs)))
    ok = res.status == 0 and big_time < 60 and slope > 0 and worst <= 2.0
    per = ", ".join(f"K={K}: {s / n * 1e9:.0f}ns" for K, s in zip((8, 16, 32, 64), secs))
    report(11, "performance envelope", ok,
           f"K=32 k=4 n=1e6 in {big_time:.1f}s; per-round {per}; worst point/fit {worst:.2f}")
    assert ok
