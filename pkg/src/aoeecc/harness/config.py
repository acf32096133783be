"""Typed run configuration loaded from flat dotted-key TOML files.

Example::

    K = 8
    k = 2
    n_rounds = 100000
    policy = "aoeecc-avg"
    regime = "contaminated"
    env.zeta = 0.25

Unknown keys and type mismatches raise ``ConfigError`` naming the dotted path.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from ..coop import effective_probing_rate
from ..envs import (
    ATTACKS,
    GENERATORS,
    REGIMES,
    AdaptiveJammerSpec,
    ContaminatedSpec,
    MixedSpec,
    ObliviousJammerSpec,
    PhysicalParams,
    StochasticSpec,
    default_mu,
    default_power_mean,
)
from ..policy import MODES, THEOREM_MIN_C, XI_FORMS, minibatch_tau
from ..subset_dp import n_strategies

POLICIES = ("aoeecc", "aoeecc-avg", "exp3", "combucb1")
DEFAULT_MODE = {"aoeecc": "known-gap", "aoeecc-avg": "avg", "exp3": "adversarial-only"}


class ConfigError(ValueError):
    pass


@dataclass
class ScheduleCfg:
    mode: str = ""  # empty: the policy's own mode
    c: float = 1.0 / 32.0
    xi_form: str = "experiment"
    coop_eta: str = "sqrt-m"  # "fixed" keeps eta = beta under cooperation


@dataclass
class MinibatchCfg:
    tau: typing.Union[int, str] = 0  # 0 off, "auto" from the horizon


@dataclass
class CoopCfg:
    M: int = 1
    m_lower_bound: float = 0.0  # 0: use the exact rate implied by M


@dataclass
class JammerCfg:
    strength: typing.List[float] = field(default_factory=lambda: [0.5])
    phase_len: int = 300
    n_targets: int = 0  # 0: K/2
    seed: int = -1  # -1: derived from the run seed


@dataclass
class AdaptiveCfg:
    theta: int = 5
    j_channels: int = 0  # 0: k
    strength: float = 0.5


@dataclass
class MixedCfg:
    jammed: typing.List[int] = field(default_factory=lambda: [0])


@dataclass
class PhysicalCfg:
    mean_gain: typing.List[float] = field(default_factory=list)
    pr_interrupt: typing.List[float] = field(default_factory=list)
    interference: typing.List[float] = field(default_factory=list)
    W: float = 1.0
    theta_cap: float = 1.0
    noise_power: float = 0.1
    P_c: float = 0.5
    P_max: float = 1.0


@dataclass
class EnvCfg:
    mu: typing.List[float] = field(default_factory=list)
    mu_best: float = 0.3
    mu_other: float = 0.5
    power_mean: typing.List[float] = field(default_factory=list)
    power_best: float = 0.2
    power_other: float = 0.35
    power_spread: float = 0.05
    generator: str = "bernoulli"
    attack: str = "oblivious"
    zeta: float = 0.25
    tau0: int = 0
    jammer: JammerCfg = field(default_factory=JammerCfg)
    adaptive: AdaptiveCfg = field(default_factory=AdaptiveCfg)
    mixed: MixedCfg = field(default_factory=MixedCfg)
    physical: PhysicalCfg = field(default_factory=PhysicalCfg)


@dataclass
class TimingCfg:
    t_s: float = 0.01
    t_p: float = 0.01
    t_a: float = 2.0


@dataclass
class RunConfig:
    K: int = 8
    k: int = 2
    n_rounds: int = 100_000
    seed: int = 0
    policy: str = "aoeecc-avg"
    regime: str = "stochastic"
    P_o: float = 0.5
    eps_access: float = 1.0
    output: str = ""
    schedule: ScheduleCfg = field(default_factory=ScheduleCfg)
    minibatch: MinibatchCfg = field(default_factory=MinibatchCfg)
    coop: CoopCfg = field(default_factory=CoopCfg)
    env: EnvCfg = field(default_factory=EnvCfg)
    timing: TimingCfg = field(default_factory=TimingCfg)

    # -- derived values -----------------------------------------------------

    @property
    def schedule_mode(self) -> str:
        return self.schedule.mode or DEFAULT_MODE.get(self.policy, "")

    @property
    def eta_m(self) -> float:
        """Learning-rate scale: eta = beta * sqrt(eta_m)."""
        return self.m_rate if self.schedule.coop_eta == "sqrt-m" else 1.0

    @property
    def tau(self) -> int:
        t = self.minibatch.tau
        if t == "auto":
            return minibatch_tau(self.K, self.k, self.n_rounds)
        return int(t)

    @property
    def m_rate(self) -> float:
        """Probing-rate lower bound used to scale the schedule."""
        if self.coop.m_lower_bound > 0:
            return float(self.coop.m_lower_bound)
        return effective_probing_rate(self.K, self.k, self.coop.M)

    def mu(self):
        import numpy as np

        if self.env.mu:
            return np.asarray(self.env.mu, float)
        return default_mu(self.K, self.k, self.env.mu_best, self.env.mu_other)

    def power_mean(self):
        import numpy as np

        if self.env.power_mean:
            return np.asarray(self.env.power_mean, float)
        return default_power_mean(self.mu(), self.k, self.env.power_best, self.env.power_other)

    def physical(self) -> PhysicalParams | None:
        if self.env.generator != "ee-physical":
            return None
        p = self.env.physical
        K = self.K
        mg = p.mean_gain or [1.0] * K
        pr = p.pr_interrupt or [0.0] * K
        it = p.interference or [0.0] * K
        return PhysicalParams(tuple(mg), tuple(pr), tuple(it), p.W, p.theta_cap, p.noise_power,
                              p.P_c, p.P_max)

    def base_spec(self) -> StochasticSpec:
        return StochasticSpec(self.mu(), self.power_mean(), self.k, self.env.generator,
                              self.env.power_spread, self.physical())

    def jammer_spec(self):
        import numpy as np

        if self.env.attack == "adaptive":
            a = self.env.adaptive
            return AdaptiveJammerSpec(a.theta, a.j_channels or self.k, a.strength)
        j = self.env.jammer
        strength = np.asarray(j.strength, float)
        if strength.size == 1:
            strength = np.full(self.K, strength[0])
        seed = j.seed if j.seed >= 0 else self.seed
        return ObliviousJammerSpec(strength, seed, j.phase_len, j.n_targets or self.K // 2)

    def env_spec(self):
        base = self.base_spec()
        if self.regime == "stochastic":
            return base
        if self.regime == "adversarial":
            return (base, self.jammer_spec())
        if self.regime == "mixed":
            return MixedSpec(base, tuple(self.env.mixed.jammed), self.jammer_spec())
        return ContaminatedSpec(base, self.env.zeta, self.env.tau0)

    def replace(self, **changes) -> "RunConfig":
        """Copy with top-level or dotted-path overrides (``{"env.zeta": 0.1}``)."""
        data = to_dict(self)
        for key, value in changes.items():
            _set_path(data, key.replace("__", "."), value)
        return from_dict(data)


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------


def _set_path(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        for alt in typing.get_args(tp):
            try:
                return _coerce(alt, value, path)
            except ConfigError:
                continue
        raise ConfigError(f"{path}: invalid value {value!r}")
    if origin in (list, typing.List):
        (inner,) = typing.get_args(tp)
        if not isinstance(value, list):
            value = [value]
        return [_coerce(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if tp is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    raise ConfigError(f"{path}: unsupported type {tp}")


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or '<root>'}: expected a table")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}: unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        tp = hints[f.name]
        path = prefix + f.name
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, data[f.name], path + ".")
        else:
            kwargs[f.name] = _coerce(tp, data[f.name], path)
    return cls(**kwargs)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def from_dict(data: dict) -> RunConfig:
    cfg = _build(RunConfig, data)
    validate(cfg)
    return cfg


def loads(text: str) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    return from_dict(data)


def load(path) -> RunConfig:
    """Read and validate a config file.  I/O errors propagate as OSError."""
    return loads(Path(path).read_text(encoding="utf-8"))


def dumps(cfg: RunConfig) -> str:
    """Serialise back to the flat dotted-key form (round-trips through ``loads``)."""
    lines = []

    def emit(obj, prefix):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                emit(v, prefix + f.name + ".")
                continue
            if isinstance(v, str):
                s = '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, list):
                s = "[" + ", ".join(repr(x) for x in v) + "]"
            else:
                s = repr(v)
            lines.append(f"{prefix}{f.name} = {s}")

    emit(cfg, "")
    return "\n".join(lines) + "\n"


def validate(cfg: RunConfig) -> None:
    def need(cond, path, msg):
        if not cond:
            raise ConfigError(f"{path}: {msg}")

    need(cfg.K >= 2, "K", "must be >= 2")
    need(1 <= cfg.k <= cfg.K, "k", "must satisfy 1 <= k <= K")
    need(cfg.n_rounds >= 1, "n_rounds", "must be >= 1")
    need(cfg.seed >= 0, "seed", "must be >= 0")
    need(cfg.policy in POLICIES, "policy", f"must be one of {', '.join(POLICIES)}")
    need(cfg.regime in REGIMES, "regime", f"must be one of {', '.join(REGIMES)}")
    need(0.0 <= cfg.P_o <= 1.0, "P_o", "must lie in [0, 1]")
    need(0.0 < cfg.eps_access <= 1.0, "eps_access", "must lie in (0, 1]")
    if cfg.policy != "combucb1":
        mode = cfg.schedule_mode
        need(mode in MODES, "schedule.mode", f"must be one of {', '.join(MODES)}")
        need(cfg.schedule.xi_form in XI_FORMS, "schedule.xi_form",
             f"must be one of {', '.join(XI_FORMS)}")
        need(cfg.schedule.coop_eta in ("sqrt-m", "fixed"), "schedule.coop_eta",
             'must be "sqrt-m" or "fixed"')
        need(cfg.schedule.c > 0, "schedule.c", "must be positive")
        if cfg.schedule.xi_form == "theorem" and mode != "adversarial-only":
            need(cfg.schedule.c >= THEOREM_MIN_C, "schedule.c",
                 f"theorem schedules need c >= {THEOREM_MIN_C:g}")
    t = cfg.minibatch.tau
    need(t == "auto" or (isinstance(t, int) and t >= 0), "minibatch.tau",
         'must be a nonnegative integer or "auto"')
    need(1 <= cfg.coop.M <= n_strategies(cfg.K, cfg.k), "coop.M", "must lie in [1, C(K,k)]")
    need(cfg.coop.m_lower_bound == 0 or 1.0 <= cfg.coop.m_lower_bound <= cfg.K,
         "coop.m_lower_bound", "must be 0 (auto) or lie in [1, K]")
    if cfg.coop.M > 1:
        need(cfg.policy != "combucb1", "coop.M", "cooperative probing needs an exponential-weights policy")
        need(cfg.tau <= 1, "coop.M", "cooperative probing cannot be combined with minibatch.tau")
    if cfg.tau > 1:
        need(cfg.policy != "combucb1", "minibatch.tau", "mini-batching wraps exponential-weights policies only")
    e = cfg.env
    need(e.generator in GENERATORS, "env.generator", f"must be one of {', '.join(GENERATORS)}")
    need(e.attack in ATTACKS, "env.attack", f"must be one of {', '.join(ATTACKS)}")
    need(not e.mu or len(e.mu) == cfg.K, "env.mu", "must have K entries")
    need(not e.power_mean or len(e.power_mean) == cfg.K, "env.power_mean", "must have K entries")
    need(len(e.jammer.strength) in (1, cfg.K), "env.jammer.strength", "must have 1 or K entries")
    need(0 <= e.jammer.n_targets <= cfg.K, "env.jammer.n_targets", "must lie in [0, K]")
    need(0.0 <= e.zeta < 0.5, "env.zeta", "must lie in [0, 1/2)")
    need(e.tau0 >= 0, "env.tau0", "must be >= 0")
    need(0 <= e.adaptive.j_channels <= cfg.K, "env.adaptive.j_channels", "must lie in [0, K]")
    p = e.physical
    for name in ("mean_gain", "pr_interrupt", "interference"):
        v = getattr(p, name)
        need(not v or len(v) == cfg.K, f"env.physical.{name}", "must have K entries")
    need(p.noise_power > 0, "env.physical.noise_power", "must be positive")
    for name in ("t_s", "t_p", "t_a"):
        need(getattr(cfg.timing, name) >= 0, f"timing.{name}", "must be nonnegative")
    need(cfg.timing.t_a > 0 and cfg.timing.t_s + cfg.timing.t_p > 0, "timing",
         "t_a and t_s + t_p must be positive")
    # building the env spec runs the remaining range checks
    try:
        cfg.env_spec()
    except ValueError as exc:
        raise ConfigError(f"env: {exc}") from exc
