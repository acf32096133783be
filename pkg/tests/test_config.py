import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoeecc.harness.config import ConfigError, RunConfig, dumps, load, loads


def test_defaults_and_flat_dotted_keys():
    cfg = loads('K = 8\nk = 2\nregime = "contaminated"\nenv.zeta = 0.1\n'
                'env.jammer.strength = [0.2, 0.3, 0.2, 0.3, 0.2, 0.3, 0.2, 0.3]\n')
    assert cfg.env.zeta == 0.1 and cfg.regime == "contaminated"
    assert cfg.n_rounds == 100_000 and cfg.policy == "aoeecc-avg"
    assert cfg.schedule_mode == "avg"


def test_table_syntax_also_accepted():
    cfg = loads("[env]\nzeta = 0.2\n[coop]\nM = 3\n")
    assert cfg.env.zeta == 0.2 and cfg.coop.M == 3


@pytest.mark.parametrize("text,path", [
    ("bogus = 1\n", "bogus"),
    ("env.zetta = 0.1\n", "env.zetta"),
    ("env.jammer.phase = 3\n", "env.jammer.phase"),
    ('K = "eight"\n', "K"),
    ("k = 9\n", "k"),
    ("n_rounds = 0\n", "n_rounds"),
    ("P_o = 1.5\n", "P_o"),
    ('policy = "ucb"\n', "policy"),
    ('regime = "chaos"\n', "regime"),
    ("env.zeta = 0.5\n", "env.zeta"),
    ("env.mu = [0.1, 0.2]\n", "env.mu"),
    ('schedule.xi_form = "theorem"\n', "schedule.c"),
    ("coop.M = 3\nminibatch.tau = 4\n", "coop.M"),
    ('policy = "combucb1"\nminibatch.tau = 4\n', "minibatch.tau"),
    ("coop.M = 100\n", "coop.M"),
    ("eps_access = 0.0\n", "eps_access"),
    ("K = 8\nK = 9\n", "parse error"),
])
def test_errors_name_the_field(text, path):
    with pytest.raises(ConfigError) as exc:
        loads(text)
    assert path in str(exc.value)


def test_bool_is_not_an_int():
    with pytest.raises(ConfigError):
        loads("K = true\n")


def test_round_trip():
    cfg = RunConfig().replace(**{"env.zeta": 0.1, "coop.M": 3, "policy": "aoeecc",
                                 "env.jammer.strength": [0.25]})
    again = loads(dumps(cfg))
    assert again == cfg
    assert dumps(again) == dumps(cfg)


@given(st.integers(2, 40), st.data(), st.floats(0, 1), st.integers(0, 2**31))
def test_round_trip_property(K, data, P_o, seed):
    k = data.draw(st.integers(1, K))
    cfg = RunConfig(K=K, k=k, P_o=P_o, seed=seed)
    assert loads(dumps(cfg)) == cfg


def test_replace_validates():
    with pytest.raises(ConfigError):
        RunConfig().replace(k=20)
    assert RunConfig().replace(env__zeta=0.2).env.zeta == 0.2


def test_derived_values():
    cfg = RunConfig(minibatch=RunConfig().minibatch)
    assert cfg.tau == 0
    auto = RunConfig().replace(**{"minibatch.tau": "auto"})
    assert auto.tau == 15
    coop = RunConfig().replace(**{"coop.M": 3})
    assert coop.m_rate == pytest.approx(1 + 7 * (1 - 20 / 27 * 19 / 26))
    assert coop.eta_m == coop.m_rate
    assert coop.replace(**{"schedule.coop_eta": "fixed"}).eta_m == 1.0


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load(tmp_path / "nope.toml")
