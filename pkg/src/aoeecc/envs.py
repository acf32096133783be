"""Loss/power generators for the stochastic, adversarial, mixed and contaminated regimes.

Every regime is packed into flat arrays (``EnvParams``) and stepped by the
jitted ``env_step`` kernel, which the simulation engine calls directly.  The
per-regime functions below wrap that kernel for interactive use.

Randomness discipline:
  * stochastic draws consume exactly the same number of uniforms from the env
    generator every round, so two policies facing the same seed see the same
    stochastic stream;
  * the oblivious jammer (base losses and attack pattern) is a pure function of
    (seed, t, channel) computed with a counter-based hash, so it is fixed
    before the run and can be evaluated at any t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

REGIMES = {"stochastic": 0, "adversarial": 1, "mixed": 2, "contaminated": 3}
GENERATORS = {"bernoulli": 0, "ee-physical": 1}
ATTACKS = {"oblivious": 0, "adaptive": 1}

# integer parameter slots
I_REGIME, I_GEN, I_ATTACK, I_K, I_k, I_PHASE, I_NTARGETS, I_THETA, I_JCH, I_TAU0, I_SEED = range(11)
N_IP = 11
# float parameter slots
F_SPREAD, F_ZETA, F_W, F_THETA_CAP, F_NOISE, F_PC, F_PMAX, F_M, F_ADAPT_STR = range(9)
N_FP = 9
# per-channel rows
C_MU, C_PMEAN, C_STRENGTH, C_JAM, C_GAP, C_BEST, C_MGAIN, C_PRINT, C_INTERF = range(9)
N_CH = 9
# mutable integer state slots
S_HLEN, S_HPOS, S_PHASE = range(3)
N_ST = 3


class EnvError(ValueError):
    pass


# ---------------------------------------------------------------------------
# counter-based hash for oblivious sequences
# ---------------------------------------------------------------------------


@njit(cache=True)
def _mix64(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def hash_uniform(seed, stream, t, f):
    """Uniform in [0, 1) determined by (seed, stream, t, f)."""
    z = _mix64(np.uint64(seed))
    z = _mix64(z ^ np.uint64(stream))
    z = _mix64(z ^ np.uint64(t))
    z = _mix64(z ^ np.uint64(f))
    return float(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


STREAM_BASE = 1
STREAM_PATTERN = 2
STREAM_FADE = 3


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _physical_loss(f, u_fade, p_level, k, fp, chan):
    """Loss 1 - g for channel f from one Rayleigh power-gain draw."""
    g_self = chan[C_MGAIN, f] * -math.log(1.0 - u_fade)
    p_tx = p_level * k * fp[F_PMAX]
    denom = chan[C_INTERF, f] + fp[F_NOISE]
    rate = fp[F_W] * math.log1p(fp[F_THETA_CAP] * p_tx * g_self / denom)
    ee = rate / (fp[F_PC] + p_tx)
    ee_norm = ee / fp[F_M]
    if ee_norm > 1.0:
        ee_norm = 1.0
    return 1.0 - ee_norm * (1.0 - chan[C_PRINT, f])


@njit(cache=True)
def _oblivious_targets(ip, phase, targets):
    """Fill ``targets`` (0/1) for one phase of the oblivious jammer."""
    K = ip[I_K]
    seed = ip[I_SEED]
    n_t = ip[I_NTARGETS]
    for f in range(K):
        hf = hash_uniform(seed, STREAM_PATTERN, phase, f)
        rank = 0
        for g in range(K):
            hg = hash_uniform(seed, STREAM_PATTERN, phase, g)
            if hg < hf or (hg == hf and g < f):
                rank += 1
        targets[f] = 1.0 if rank < n_t else 0.0


@njit(cache=True)
def _adaptive_targets(ip, chan, hist, ist, targets):
    """Most-played channels over the window; idle until the window is full."""
    K = ip[I_K]
    k = ip[I_k]
    theta = ip[I_THETA]
    for f in range(K):
        targets[f] = 0.0
    if theta <= 0 or ist[S_HLEN] < theta:
        return
    counts = np.zeros(K, dtype=np.int64)
    for r in range(theta):
        for j in range(k):
            counts[hist[r, j]] += 1
    mixed = ip[I_REGIME] == 2
    for _ in range(ip[I_JCH]):
        best = -1
        for f in range(K):
            if targets[f] > 0.0 or counts[f] == 0:
                continue
            if mixed and chan[C_JAM, f] == 0.0:
                continue
            if best < 0 or counts[f] > counts[best]:
                best = f
        if best < 0:
            break
        targets[best] = 1.0


@njit(cache=True)
def env_step(t, ip, fp, chan, targets, hist, ist, used, rng, loss, power):
    """Generate the full loss and power vectors for round ``t`` (1-based)."""
    K = ip[I_K]
    k = ip[I_k]
    regime = ip[I_REGIME]
    gen = ip[I_GEN]
    seed = ip[I_SEED]
    inv_k = 1.0 / k
    # identical rng consumption every round: K loss uniforms, K power
    # uniforms, and K fading uniforms for the physical generator
    for f in range(K):
        loss[f] = rng.random()
    for f in range(K):
        p = chan[C_PMEAN, f] + fp[F_SPREAD] * (2.0 * rng.random() - 1.0)
        power[f] = min(max(p, 0.0), inv_k)
    if gen == 1:
        for f in range(K):
            loss[f] = _physical_loss(f, rng.random(), power[f], k, fp, chan)
    else:
        for f in range(K):
            loss[f] = 1.0 if loss[f] < chan[C_MU, f] else 0.0
    if regime == 0:
        return
    if regime == 3:
        if t > ip[I_TAU0]:
            zeta = fp[F_ZETA]
            for f in range(K):
                budget = math.floor(t * chan[C_GAP, f] * zeta)
                if used[f] < budget:
                    used[f] += 1
                    loss[f] = 1.0 if chan[C_BEST, f] > 0.0 else 0.0
        return
    # jammer-driven regimes
    attack = ip[I_ATTACK]
    if attack == 0:
        phase = (t - 1) // ip[I_PHASE]
        if phase != ist[S_PHASE]:
            _oblivious_targets(ip, phase, targets)
            ist[S_PHASE] = phase
    else:
        _adaptive_targets(ip, chan, hist, ist, targets)
    for f in range(K):
        jammed = regime == 1 or chan[C_JAM, f] > 0.0
        if not jammed:
            continue
        base = loss[f]
        if attack == 0:
            # oblivious adversary: base fixed by (seed, t, f) alone, so a
            # jammed channel in the mixed regime sees exactly the sequence it
            # would see in the fully adversarial regime
            if gen == 1:
                base = _physical_loss(f, hash_uniform(seed, STREAM_FADE, t, f),
                                      chan[C_PMEAN, f], k, fp, chan)
            else:
                u = hash_uniform(seed, STREAM_BASE, t, f)
                base = 1.0 if u < chan[C_MU, f] else 0.0
        strength = chan[C_STRENGTH, f] if attack == 0 else fp[F_ADAPT_STR]
        v = base + strength * targets[f]
        loss[f] = min(max(v, 0.0), 1.0)


@njit(cache=True)
def env_record(strategy, hist, ist, theta):
    """Push the played strategy into the adaptive jammer's window."""
    if theta <= 0:
        return
    pos = ist[S_HPOS]
    for j in range(strategy.shape[0]):
        hist[pos, j] = strategy[j]
    ist[S_HPOS] = (pos + 1) % theta
    if ist[S_HLEN] < theta:
        ist[S_HLEN] += 1


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------


def default_mu(K: int, k: int, best: float = 0.3, other: float = 0.5) -> np.ndarray:
    """The first k channels at ``best``, the rest at ``other``."""
    mu = np.full(K, other)
    mu[:k] = best
    return mu


def default_power_mean(mu, k: int, best: float = 0.2, other: float = 0.35) -> np.ndarray:
    lo = np.min(mu)
    pm = np.where(np.isclose(mu, lo), best, other)
    return np.minimum(pm, 1.0 / k)


@dataclass(frozen=True)
class PhysicalParams:
    """Per-channel link model used by the ee-physical generator."""

    mean_gain: tuple[float, ...]
    pr_interrupt: tuple[float, ...]
    interference: tuple[float, ...]
    W: float = 1.0
    theta_cap: float = 1.0
    noise_power: float = 0.1
    P_c: float = 0.5
    P_max: float = 1.0

    def normaliser(self) -> float:
        """EE at full power, mean gain of the strongest channel, no interference."""
        g = max(self.mean_gain)
        rate = self.W * math.log1p(self.theta_cap * self.P_max * g / self.noise_power)
        return rate / (self.P_c + self.P_max)


@dataclass(frozen=True)
class StochasticSpec:
    mu: np.ndarray
    power_mean: np.ndarray
    k: int
    generator: str = "bernoulli"
    power_spread: float = 0.05
    physical: PhysicalParams | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu, float)
        pm = np.asarray(self.power_mean, float)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "power_mean", pm)
        if mu.ndim != 1 or mu.size < 2 or pm.shape != mu.shape:
            raise EnvError("mu and power_mean must be length-K vectors")
        if np.any((mu < 0) | (mu > 1)):
            raise EnvError("mu entries must lie in [0, 1]")
        if np.any((pm < 0) | (pm > 1.0 / self.k + 1e-12)):
            raise EnvError("power_mean entries must lie in [0, 1/k]")
        if self.generator not in GENERATORS:
            raise EnvError(f"unknown generator {self.generator!r}")
        if self.generator == "ee-physical" and self.physical is None:
            raise EnvError("ee-physical generator needs physical parameters")
        if self.power_spread < 0:
            raise EnvError("power_spread must be nonnegative")

    @property
    def K(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class ObliviousJammerSpec:
    attack_strength: np.ndarray
    seed: int = 0
    phase_len: int = 300
    n_targets: int = 4

    def __post_init__(self):
        a = np.asarray(self.attack_strength, float)
        object.__setattr__(self, "attack_strength", a)
        if np.any((a < 0) | (a > 1)):
            raise EnvError("attack_strength must lie in [0, 1]")
        if self.phase_len < 1 or self.n_targets < 0:
            raise EnvError("phase_len >= 1 and n_targets >= 0 required")


@dataclass(frozen=True)
class AdaptiveJammerSpec:
    theta: int = 5
    j_channels: int = 2
    strength: float = 0.5

    def __post_init__(self):
        if self.theta < 1 or self.j_channels < 0 or not 0 < self.strength <= 1:
            raise EnvError("need theta >= 1, j_channels >= 0, strength in (0, 1]")


@dataclass(frozen=True)
class MixedSpec:
    base: StochasticSpec
    jammed_set: tuple[int, ...]
    jammer: ObliviousJammerSpec | AdaptiveJammerSpec

    def __post_init__(self):
        js = tuple(int(f) for f in self.jammed_set)
        object.__setattr__(self, "jammed_set", js)
        if len(set(js)) != len(js) or any(not 0 <= f < self.base.K for f in js):
            raise EnvError("jammed_set must hold distinct channel ids")
        if len(js) > self.base.k:
            raise EnvError("at most k channels can be jammed")


@dataclass(frozen=True)
class ContaminatedSpec:
    base: StochasticSpec
    zeta: float
    tau0: int = 0

    def __post_init__(self):
        if not 0.0 <= self.zeta < 0.5:
            raise EnvError("zeta must lie in [0, 1/2)")
        if self.tau0 < 0:
            raise EnvError("tau0 must be >= 0")


@dataclass
class RoundOutcome:
    loss: np.ndarray
    power: np.ndarray


def channel_gaps(mu) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel gaps and best-channel mask.

    Best channels get the smallest positive gap (0 when all means tie).
    """
    mu = np.asarray(mu, float)
    lo = mu.min()
    best = np.isclose(mu, lo, rtol=0, atol=1e-12)
    gaps = np.where(best, 0.0, mu - lo)
    pos = gaps[gaps > 0]
    min_gap = pos.min() if pos.size else 0.0
    return np.where(best, min_gap, gaps), best


def strategy_gaps(mu, k: int) -> np.ndarray:
    """Per-channel loss gap relative to the k-th smallest mean."""
    mu = np.asarray(mu, float)
    kth = np.sort(mu)[k - 1]
    return np.maximum(mu - kth, 0.0)


@dataclass
class EnvParams:
    """Flat, jit-friendly view of a regime plus its mutable jammer state."""

    ip: np.ndarray
    fp: np.ndarray
    chan: np.ndarray
    targets: np.ndarray
    hist: np.ndarray
    ist: np.ndarray
    used: np.ndarray
    mu: np.ndarray = field(repr=False)
    power_mean: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return int(self.ip[I_K])

    @property
    def theta(self) -> int:
        return int(self.ip[I_THETA])

    def reset(self) -> None:
        self.targets[:] = 0.0
        self.hist[:] = 0
        self.ist[:] = 0
        self.ist[S_PHASE] = -1
        self.used[:] = 0


def pack(spec, regime: str | None = None) -> EnvParams:
    """Flatten any regime spec into ``EnvParams``."""
    jammer = None
    zeta, tau0 = 0.0, 0
    jam = None
    if isinstance(spec, StochasticSpec):
        base, name = spec, regime or "stochastic"
    elif isinstance(spec, tuple) and len(spec) == 2:
        base, jammer = spec
        name = "adversarial"
    elif isinstance(spec, MixedSpec):
        base, jammer, name = spec.base, spec.jammer, "mixed"
        jam = list(spec.jammed_set)
    elif isinstance(spec, ContaminatedSpec):
        base, name = spec.base, "contaminated"
        zeta, tau0 = spec.zeta, spec.tau0
    else:
        raise EnvError(f"unsupported spec {type(spec).__name__}")
    K, k = base.K, base.k
    ip = np.zeros(N_IP, dtype=np.int64)
    fp = np.zeros(N_FP)
    chan = np.zeros((N_CH, K))
    ip[I_REGIME] = REGIMES[name]
    ip[I_GEN] = GENERATORS[base.generator]
    ip[I_K] = K
    ip[I_k] = k
    ip[I_PHASE] = 1
    ip[I_TAU0] = tau0
    fp[F_SPREAD] = base.power_spread
    fp[F_ZETA] = zeta
    chan[C_MU] = base.mu
    chan[C_PMEAN] = base.power_mean
    gaps, best = channel_gaps(base.mu)
    chan[C_GAP] = gaps
    chan[C_BEST] = best
    if jam is not None:
        chan[C_JAM, jam] = 1.0
    if isinstance(jammer, ObliviousJammerSpec):
        ip[I_ATTACK] = ATTACKS["oblivious"]
        ip[I_SEED] = jammer.seed
        ip[I_PHASE] = jammer.phase_len
        ip[I_NTARGETS] = jammer.n_targets
        chan[C_STRENGTH] = jammer.attack_strength
    elif isinstance(jammer, AdaptiveJammerSpec):
        ip[I_ATTACK] = ATTACKS["adaptive"]
        ip[I_THETA] = jammer.theta
        ip[I_JCH] = jammer.j_channels
        fp[F_ADAPT_STR] = jammer.strength
    phys = base.physical
    if phys is not None:
        fp[F_W] = phys.W
        fp[F_THETA_CAP] = phys.theta_cap
        fp[F_NOISE] = phys.noise_power
        fp[F_PC] = phys.P_c
        fp[F_PMAX] = phys.P_max
        fp[F_M] = phys.normaliser()
        chan[C_MGAIN] = phys.mean_gain
        chan[C_PRINT] = phys.pr_interrupt
        chan[C_INTERF] = phys.interference
    theta = max(int(ip[I_THETA]), 1)
    env = EnvParams(ip, fp, chan, np.zeros(K), np.zeros((theta, k), dtype=np.int64),
                    np.zeros(N_ST, dtype=np.int64), np.zeros(K, dtype=np.int64),
                    base.mu.copy(), base.power_mean.copy())
    env.reset()
    return env


def physical_mean_loss(spec: StochasticSpec, n_samples: int = 200_000, seed: int = 12345):
    """Monte Carlo estimate of the per-channel mean loss of the physical generator."""
    env = pack(spec)
    acc = np.zeros(spec.K)
    _accumulate_losses(n_samples, env.ip, env.fp, env.chan, env.targets, env.hist, env.ist,
                       env.used, np.random.default_rng(seed), acc)
    return acc / n_samples


@njit(cache=True)
def _accumulate_losses(n, ip, fp, chan, targets, hist, ist, used, rng, acc):
    K = acc.shape[0]
    loss = np.empty(K)
    power = np.empty(K)
    for t in range(1, n + 1):
        env_step(t, ip, fp, chan, targets, hist, ist, used, rng, loss, power)
        for f in range(K):
            acc[f] += loss[f]


# ---------------------------------------------------------------------------
# per-regime convenience steps
# ---------------------------------------------------------------------------


def _step(env: EnvParams, t: int, rng) -> RoundOutcome:
    K = env.K
    loss = np.empty(K)
    power = np.empty(K)
    env_step(t, env.ip, env.fp, env.chan, env.targets, env.hist, env.ist, env.used, rng, loss,
             power)
    return RoundOutcome(loss, power)


def stochastic_step(spec: StochasticSpec, rng: np.random.Generator) -> RoundOutcome:
    return _step(pack(spec), 1, rng)


def oblivious_step(spec: tuple[StochasticSpec, ObliviousJammerSpec], t: int) -> RoundOutcome:
    """Losses of the oblivious adversary at round t; powers are the spec means."""
    if t < 1:
        raise EnvError("t must be >= 1")
    base, _ = spec
    env = pack(spec)
    out = _step(env, t, np.random.default_rng(0))
    out.power = base.power_mean.copy()
    return out


def adaptive_step(spec: tuple[StochasticSpec, AdaptiveJammerSpec], history,
                  rng: np.random.Generator) -> RoundOutcome:
    base, jam = spec
    history = [tuple(s) for s in history]
    if len(history) > jam.theta:
        raise EnvError("history longer than the jammer memory")
    env = pack(spec)
    for s in history:
        env_record(np.asarray(s, dtype=np.int64), env.hist, env.ist, env.theta)
    return _step(env, len(history) + 1, rng)


def mixed_step(spec: MixedSpec, t: int, history, rng: np.random.Generator) -> RoundOutcome:
    env = pack(spec)
    for s in history[-env.theta:] if env.theta else []:
        env_record(np.asarray(s, dtype=np.int64), env.hist, env.ist, env.theta)
    return _step(env, t, rng)


class ContaminatedEnv:
    """Stateful contaminated regime; budgets persist across rounds."""

    def __init__(self, spec: ContaminatedSpec):
        self.spec = spec
        self.env = pack(spec)

    @property
    def used(self) -> np.ndarray:
        return self.env.used

    def step(self, t: int, rng: np.random.Generator) -> RoundOutcome:
        if t < 1:
            raise EnvError("t must be >= 1")
        return _step(self.env, t, rng)


def contaminated_step(env: ContaminatedEnv, t: int, rng: np.random.Generator) -> RoundOutcome:
    return env.step(t, rng)


class Env:
    """Generic stateful environment over any packed regime."""

    def __init__(self, spec, regime: str | None = None):
        self.params = pack(spec, regime)

    def step(self, t: int, rng: np.random.Generator) -> RoundOutcome:
        return _step(self.params, t, rng)

    def record(self, strategy) -> None:
        env_record(np.asarray(strategy, dtype=np.int64), self.params.hist, self.params.ist,
                   self.params.theta)
