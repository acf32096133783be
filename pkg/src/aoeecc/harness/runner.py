"""Run, sweep and persist experiments."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .engine import (
    D_LAMBDA_BREACH,
    D_M_FLAGGED,
    D_M_SUM,
    D_RHO_RATIO_MIN,
    O_BEST,
    O_EE,
    O_LAM,
    O_LOSS_NOW,
    O_POWER,
    O_POWER_NOW,
    O_PSEUDO,
    O_REAL,
    O_T,
    O_VIOL,
    InvariantError,
    STATUS_OK,
    checkpoints,
    run_fast,
    status_message,
)
from .metrics import RoundRecord, clamp_violation, primary_regret

log = logging.getLogger("aoeecc")

CSV_HEADER = ("t", "policy", "regime", "seed", "regret", "violation", "lambda", "ee",
              "expected_power")


@dataclass
class RunResult:
    config: RunConfig
    records: list[RoundRecord]
    diagnostics: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    @property
    def final(self) -> RoundRecord:
        return self.records[-1]


def run_experiment(cfg: RunConfig, ck: np.ndarray | None = None) -> RunResult:
    """Execute one run; raises ``InvariantError`` if a numeric invariant breaks."""
    log.info("run policy=%s regime=%s K=%d k=%d n=%d seed=%d", cfg.policy, cfg.regime, cfg.K,
             cfg.k, cfg.n_rounds, cfg.seed)
    res = run_fast(cfg, ck)
    diag = {
        "lambda_bound_breaches": int(res.diag[D_LAMBDA_BREACH]),
        "min_rho_over_k_eps": float(res.diag[D_RHO_RATIO_MIN]),
    }
    if cfg.coop.M > 1:
        diag["mean_measured_m"] = float(res.diag[D_M_SUM]) / cfg.n_rounds
        diag["rounds_below_m_bound"] = int(res.diag[D_M_FLAGGED])
    if res.status != STATUS_OK:
        dump = {"config": cfg, "status": res.status, "diagnostics": res.diag.tolist()}
        raise InvariantError(status_message(res.status), dump)
    if diag.get("rounds_below_m_bound"):
        log.warning("measured probing rate fell below m_lower_bound in %d rounds",
                    diag["rounds_below_m_bound"])
    if diag["lambda_bound_breaches"]:
        # early rounds have a large delta_t, so a handful of breaches is expected
        log.info("lambda exceeded P_o/delta in %d rounds", diag["lambda_bound_breaches"])
    log.debug("diagnostics %s", diag)
    primary = primary_regret(cfg.regime)
    records = []
    for row, strat in zip(res.table, res.strategies):
        if math.isnan(row[O_T]):
            break
        records.append(RoundRecord(
            t=int(row[O_T]), strategy=tuple(int(f) for f in strat), loss=float(row[O_LOSS_NOW]),
            expected_power=float(row[O_POWER_NOW]), avg_power=float(row[O_POWER]),
            lam=float(row[O_LAM]),
            regret=float(row[O_PSEUDO] if primary == "pseudo" else row[O_REAL]),
            realized_regret=float(row[O_REAL]), pseudo_regret=float(row[O_PSEUDO]),
            violation=float(row[O_VIOL]), ee=float(row[O_EE]), hindsight=float(row[O_BEST])))
    return RunResult(cfg, records, diag)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvRow:
    t: int
    policy: str
    regime: str
    seed: str
    regret: float
    violation: float
    lam: float
    ee: float
    expected_power: float

    def cells(self) -> list[str]:
        return [str(self.t), self.policy, self.regime, self.seed, repr(self.regret),
                repr(self.violation), repr(self.lam), repr(self.ee), repr(self.expected_power)]


def result_rows(result: RunResult) -> list[CsvRow]:
    c = result.config
    return [CsvRow(r.t, c.policy, c.regime, str(c.seed), r.regret, clamp_violation(r.violation),
                   r.lam, r.ee, r.expected_power) for r in result.records]


def write_csv(rows, path) -> None:
    """Write rows (``CsvRow``s or a ``RunResult``) with the fixed header.

    ``path`` may be ``"-"`` for stdout.  I/O errors propagate as ``OSError``
    carrying the path.
    """
    if isinstance(rows, RunResult):
        rows = result_rows(rows)
    if str(path) == "-":
        import sys

        _write(rows, sys.stdout)
        return
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise FileNotFoundError(2, "directory does not exist", str(p.parent))
    with open(p, "w", encoding="utf-8", newline="") as fh:
        _write(rows, fh)


def _write(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())


def read_csv(path) -> list[CsvRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        return [CsvRow(int(r[0]), r[1], r[2], r[3], float(r[4]), float(r[5]), float(r[6]),
                       float(r[7]), float(r[8])) for r in reader]


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    runs: list[RunResult]
    failures: list[tuple[int, str]]
    aggregate: list[CsvRow]


def _run_seed(args):
    cfg, seed = args
    try:
        return seed, run_experiment(cfg.replace(seed=seed)), None
    except Exception as exc:  # reported by the parent, never swallowed
        return seed, None, f"{type(exc).__name__}: {exc}"


def aggregate(runs: list[RunResult]) -> list[CsvRow]:
    """Per-checkpoint mean and standard deviation across seeds."""
    if not runs:
        return []
    cfg = runs[0].config
    n_rows = min(len(r.records) for r in runs)
    cols = ("regret", "violation", "lam", "ee", "expected_power")
    stack = {c: np.array([[_csv_value(rec, c) for rec in r.records[:n_rows]] for r in runs])
             for c in cols}
    out = []
    for i in range(n_rows):
        t = runs[0].records[i].t
        for label, fn in (("mean", np.mean), ("std", np.std)):
            vals = [float(fn(stack[c][:, i])) for c in cols]
            out.append(CsvRow(t, cfg.policy, cfg.regime, label, *vals))
    return out


def _csv_value(rec: RoundRecord, name: str) -> float:
    if name == "violation":
        return clamp_violation(rec.violation)
    return getattr(rec, name)


def sweep(cfg: RunConfig, seeds, parallel: int = 1) -> SweepResult:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    jobs = [(cfg, s) for s in seeds]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(_run_seed, jobs))
    else:
        outcomes = [_run_seed(j) for j in jobs]
    runs = [r for _, r, err in outcomes if err is None]
    failures = [(s, err) for s, _, err in outcomes if err is not None]
    for s, err in failures:
        log.error("seed %d failed: %s", s, err)
    return SweepResult(runs, failures, aggregate(runs))


def parse_seed_range(text: str) -> range:
    """'A..B' inclusive, or a single integer."""
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
    else:
        lo = hi = int(text)
    if lo < 0 or hi < lo:
        raise ValueError(f"invalid seed range {text!r}")
    return range(lo, hi + 1)


def configure_logging() -> None:
    level = os.environ.get("AOEECC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


__all__ = [
    "CSV_HEADER",
    "CsvRow",
    "RunResult",
    "SweepResult",
    "aggregate",
    "checkpoints",
    "parse_seed_range",
    "read_csv",
    "run_experiment",
    "sweep",
    "write_csv",
]
