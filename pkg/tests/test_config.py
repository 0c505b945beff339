import numpy as np
import pytest

from containment.config import DecisionRule, bundled_path, load_config, make_config, parse_config
from containment.errors import ConfigError

BASE = """\
[network]
file = chain.net

[gain]
family = power-law
c = 2.0
p = 0.75

[run]
T = 10
seed = 7
"""


def test_parse_basic():
    cfg = parse_config(BASE)
    assert cfg.gain.family == "power-law" and cfg.gain.p == 0.75 and cfg.gain.c == 2.0
    assert cfg.T == 10.0 and cfg.seed == 7 and cfg.mode == "stationary"
    assert cfg.network.n == 3 and cfg.sigma[0, 1] == 1.0


def test_overrides_win():
    cfg = parse_config(BASE, overrides={"seed": 11, "replicates": 5, "output": None})
    assert cfg.seed == 11 and cfg.replicates == 5


def test_bundled_configs_load():
    for name in ("log_gain_chain.cfg", "log_gain_fan.cfg", "a2_violating.cfg", "dynamic_fan.cfg"):
        cfg = load_config(bundled_path(name))
        assert cfg.network.n >= 3
    dyn = load_config("dynamic_fan.cfg")
    assert dyn.mode == "dynamic" and dyn.k == 1.0 and dyn.gamma == 0.5
    np.testing.assert_array_equal(dyn.initial_positions()[3:], [[0, 0], [6, 0], [3, 5]])


def test_relative_network_path(tmp_path):
    (tmp_path / "g.net").write_text("agents 2\nedge 0 1 1\n")
    (tmp_path / "e.cfg").write_text("[network]\nfile = g.net\n")
    cfg = load_config(tmp_path / "e.cfg")
    assert cfg.network.n == 2


@pytest.mark.parametrize("text, needle", [
    (BASE + "bogus = 1\n", "line 12"),
    (BASE.replace("T = 10", "T = ten"), "run.t"),
    (BASE + "\n[extra]\nx = 1\n", "unknown section"),
    (BASE.replace("power-law", "wavy"), "gain.family"),
    (BASE + "mode = sideways\n", "mode"),
    ("[gain]\nc = 1\n", "network.file"),
    (BASE + "\n[initial]\n9 = 1 2\n", "initial.9"),
])
def test_errors_name_the_field(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, path="exp.cfg")
    assert "exp.cfg" in str(exc.value)
    assert needle in str(exc.value)


def test_describe_is_stable():
    cfg = make_config("agents 3\nedge 0 1 1\nedge 1 2 1\n", seed=3)
    d = dict(cfg.describe())
    assert d["seed"] == "3" and d["gain"] == "log-over-linear(c=1.0)"
    assert cfg.describe() == cfg.replace().describe()


def test_decision_defaults():
    d = DecisionRule()
    assert (d.rho, d.as_rel, d.as_abs, d.quorum) == (0.2, 0.05, 1e-3, 0.95)
