import os
import subprocess
import sys

import pytest

from aoeecc.harness import cli, runner
from aoeecc.harness.engine import InvariantError


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('K = 6\nk = 2\nn_rounds = 2000\nregime = "adversarial"\n')
    return p


def test_run_writes_csv(cfg_file, tmp_path):
    out = tmp_path / "out.csv"
    assert cli.main(["run", str(cfg_file), "--output", str(out)]) == 0
    assert out.read_text().startswith("t,policy,regime,seed,")


def test_output_from_config(tmp_path):
    out = tmp_path / "from_cfg.csv"
    p = tmp_path / "c.toml"
    p.write_text(f'n_rounds = 50\noutput = "{out}"\n')
    assert cli.main(["run", str(p)]) == 0
    assert out.exists()


def test_run_to_stdout(cfg_file, capsys):
    assert cli.main(["run", str(cfg_file), "-o", "-"]) == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("2000,aoeecc-avg,adversarial,0,")


def test_sweep_writes_aggregate(cfg_file, tmp_path):
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", str(cfg_file), "--seeds", "0..2", "--parallel", "1",
                     "-o", str(out)]) == 0
    seeds = {line.split(",")[3] for line in out.read_text().splitlines()[1:]}
    assert seeds == {"mean", "std"}


def test_validate_prints_normalised_config(cfg_file, capsys):
    assert cli.main(["validate", str(cfg_file)]) == 0
    text = capsys.readouterr().out
    assert "n_rounds = 2000" in text and 'env.attack = "oblivious"' in text


def test_oracle_passes(cfg_file, capsys):
    assert cli.main(["oracle", str(cfg_file)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5


def test_oracle_rejects_large_K(tmp_path):
    p = tmp_path / "big.toml"
    p.write_text("K = 32\nk = 4\n")
    assert cli.main(["oracle", str(p)]) == 1


@pytest.mark.parametrize("text", ["bogus = 1\n", "k = 0\n", "K = [\n"])
def test_config_errors_exit_1(tmp_path, text, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    assert cli.main(["validate", str(p)]) == 1
    assert "config error" in capsys.readouterr().err


def test_bad_seed_range_exit_1(cfg_file):
    assert cli.main(["sweep", str(cfg_file), "--seeds", "4..1"]) == 1


def test_invariant_exit_2(cfg_file, monkeypatch, capsys):
    def broken(cfg, ck=None):
        raise InvariantError("marginals do not sum to k", {"status": 2})

    monkeypatch.setattr(runner, "run_experiment", broken)
    assert cli.main(["run", str(cfg_file), "-o", "-"]) == 2
    err = capsys.readouterr().err
    assert "invariant violation" in err and "status: 2" in err


def test_io_errors_exit_3(cfg_file, tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == 3
    assert cli.main(["run", str(cfg_file), "-o", str(tmp_path / "no" / "x.csv")]) == 3


def test_log_level_from_environment(cfg_file, tmp_path):
    env = dict(os.environ, AOEECC_LOG="INFO")
    proc = subprocess.run([sys.executable, "-m", "aoeecc.harness.cli", "run", str(cfg_file),
                           "-o", str(tmp_path / "x.csv")], env=env, capture_output=True,
                          text=True, timeout=300)
    assert proc.returncode == 0
    assert "INFO aoeecc: run policy=aoeecc-avg" in proc.stderr
