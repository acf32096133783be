import numpy as np
import pytest

from aoeecc.harness import runner
from aoeecc.harness.config import RunConfig
from aoeecc.harness.engine import InvariantError, KernelResult, N_DIAG
from aoeecc.harness.runner import (
    CSV_HEADER,
    CsvRow,
    parse_seed_range,
    read_csv,
    run_experiment,
    sweep,
    write_csv,
)


def small(**kw):
    return RunConfig(n_rounds=3000).replace(**kw)


def test_single_round_single_record():
    for regime in ("stochastic", "adversarial"):
        res = run_experiment(small(n_rounds=1, regime=regime))
        assert len(res.records) == 1
        r = res.records[0]
        assert r.t == 1
        if regime == "adversarial":
            assert r.regret == pytest.approx(r.loss - r.hindsight)
        else:
            mu = RunConfig().mu()
            assert r.regret == pytest.approx(mu[list(r.strategy)].sum() - 0.6)


def test_records_cover_checkpoints():
    res = run_experiment(small(n_rounds=20_000))
    ts = [r.t for r in res.records]
    assert ts[:1000] == list(range(1, 1001))
    assert ts[-1] == 20_000
    assert all(0 <= r.expected_power <= 1 for r in res.records)
    assert all(r.lam >= 0 for r in res.records)


def test_regret_column_follows_regime():
    sto = run_experiment(small()).final
    assert sto.regret == sto.pseudo_regret
    adv = run_experiment(small(regime="adversarial")).final
    assert adv.regret == adv.realized_regret


def test_invariant_failure_raises_with_dump(monkeypatch):
    cfg = small(n_rounds=5)

    def broken(cfg, ck=None):
        return KernelResult(np.full((5, 10), np.nan), np.zeros((5, 2), int), np.zeros(N_DIAG), 2)

    monkeypatch.setattr(runner, "run_fast", broken)
    with pytest.raises(InvariantError) as exc:
        run_experiment(cfg)
    assert "sum to k" in str(exc.value)
    assert exc.value.dump["config"] == cfg


def test_csv_header_only(tmp_path):
    p = tmp_path / "empty.csv"
    write_csv([], p)
    assert p.read_bytes() == (",".join(CSV_HEADER) + "\n").encode()
    assert read_csv(p) == []


def test_csv_round_trip_and_layout(tmp_path):
    res = run_experiment(small(regime="mixed"))
    p = tmp_path / "run.csv"
    write_csv(res, p)
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "t,policy,regime,seed,regret,violation,lambda,ee,expected_power"
    rows = read_csv(p)
    assert len(rows) == len(res.records)
    for row, rec in zip(rows, res.records):
        assert row.t == rec.t and row.regret == rec.regret and row.lam == rec.lam
        assert row.ee == rec.ee and row.expected_power == rec.expected_power
        assert row.violation == max(rec.violation, 0.0)
        assert (row.policy, row.regime, row.seed) == ("aoeecc-avg", "mixed", "0")


def test_csv_byte_identical_across_runs(tmp_path):
    cfg = small(regime="contaminated", seed=11)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(run_experiment(cfg), a)
    write_csv(run_experiment(cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_io_error_names_path(tmp_path):
    with pytest.raises(OSError) as exc:
        write_csv([], tmp_path / "missing" / "x.csv")
    assert "missing" in str(exc.value)


def test_read_csv_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(p)


def test_sweep_single_seed_has_zero_std():
    res = sweep(small(), [4])
    final = [r for r in res.aggregate if r.t == 3000]
    mean = next(r for r in final if r.seed == "mean")
    std = next(r for r in final if r.seed == "std")
    assert mean.regret == res.runs[0].final.regret
    assert std.regret == 0.0 and std.ee == 0.0


def test_sweep_multiple_seeds_vary():
    res = sweep(small(), range(3))
    std = [r for r in res.aggregate if r.seed == "std" and r.t == 3000][0]
    assert std.regret > 0
    assert not res.failures


def test_sweep_parallel_matches_serial():
    a = sweep(small(n_rounds=1500), range(2), parallel=1)
    b = sweep(small(n_rounds=1500), range(2), parallel=2)
    assert a.aggregate == b.aggregate


def test_sweep_keeps_partial_results(monkeypatch):
    real = runner.run_experiment

    def flaky(cfg, ck=None):
        if cfg.seed == 1:
            raise InvariantError("boom", {})
        return real(cfg, ck)

    monkeypatch.setattr(runner, "run_experiment", flaky)
    res = sweep(small(), range(3))
    assert [r.config.seed for r in res.runs] == [0, 2]
    assert res.failures == [(1, "InvariantError: boom")]
    assert res.aggregate


def test_sweep_needs_seeds():
    with pytest.raises(ValueError):
        sweep(small(), [])


def test_seed_ranges():
    assert list(parse_seed_range("0..3")) == [0, 1, 2, 3]
    assert list(parse_seed_range("5")) == [5]
    for bad in ("3..1", "-1..2", "a..b"):
        with pytest.raises(ValueError):
            parse_seed_range(bad)


def test_csvrow_cells_use_repr():
    row = CsvRow(3, "p", "r", "0", 0.1, 0.0, 1e-300, 2 / 3, 0.5)
    assert row.cells()[6] == "1e-300" and row.cells()[7] == repr(2 / 3)
