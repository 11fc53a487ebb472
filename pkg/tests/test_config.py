import pytest

from lockdown_hjb import ConfigError, ModelParams
from lockdown_hjb.config import dump_config, load_config, parse_control, read_config_text

GOOD = """\
[params]
beta = 0.3
phi_kind = affine
phi0 = 0.02
phi_slope = 0.3
phi_cap = 0.05

[grid]
n = 40
dt = none
analytic_candidate = false

[suites]
select = hamiltonian, value
gronwall_trials = 7
convergence_levels = 10, 20, 40

[run]
seed = 11
workers = 2

[sweep]
chi = 1, 5, 25
"""


def test_read_full_config():
    cfg = read_config_text(GOOD, env={})
    assert cfg.params.beta == 0.3
    assert cfg.params.phi.kind == "affine" and cfg.params.phi.cap == 0.05
    assert cfg.grid.n == 40 and cfg.grid.dt is None and cfg.grid.analytic_candidate is False
    assert cfg.select == ("hamiltonian", "value")
    assert cfg.suites.gronwall_trials == 7 and cfg.suites.seed == 11
    assert cfg.suites.workers == 2 and cfg.workers == 2
    assert cfg.suites.convergence_levels == (10, 20, 40)
    assert cfg.sweep.chi == (1.0, 5.0, 25.0)


def test_defaults_without_file():
    cfg = load_config(None, env={})
    assert cfg.params == ModelParams()
    assert cfg.grid.n == 100


def test_invalid_value_names_line():
    text = "[params]\nbeta = 0.2\n\n[grid]\nn = lots\n"
    with pytest.raises(ConfigError, match=r"cfg\.ini:5 \[grid\] n"):
        read_config_text(text, "cfg.ini", env={})


def test_unknown_key_and_section():
    with pytest.raises(ConfigError, match=r"x:2: unknown key 'bta'"):
        read_config_text("[params]\nbta = 0.2\n", "x", env={})
    with pytest.raises(ConfigError, match="unknown section"):
        read_config_text("[solver]\nn = 3\n", "x", env={})


def test_syntax_error_reported():
    with pytest.raises(ConfigError):
        read_config_text("beta = 0.2\n", "x", env={})


def test_domain_errors_become_config_errors():
    with pytest.raises(ConfigError, match="beta"):
        read_config_text("[params]\nbeta = -1\n", env={})
    with pytest.raises(ConfigError):
        read_config_text("[simulate]\ncontrol = 0.9\n", env={})
    with pytest.raises(ConfigError):
        read_config_text("[suites]\nselect = hamiltonian, bogus\n", env={})
    with pytest.raises(ConfigError):
        read_config_text("[suites]\ndpp_trials = 0\n", env={})
    with pytest.raises(ConfigError):
        read_config_text("[run]\nworkers = 0\n", env={})


def test_environment_override():
    env = {"LOCKDOWN_HJB_PARAMS_CHI": "42", "LOCKDOWN_HJB_GRID_N": "12", "HOME": "/x"}
    cfg = read_config_text(GOOD, env=env)
    assert cfg.params.chi == 42.0 and cfg.grid.n == 12
    with pytest.raises(ConfigError, match="names no config key"):
        read_config_text("", env={"LOCKDOWN_HJB_PARAMS_NOPE": "1"})
    with pytest.raises(ConfigError, match="environment"):
        read_config_text("", env={"LOCKDOWN_HJB_GRID_N": "abc"})


def test_dump_roundtrip():
    cfg = read_config_text(GOOD, env={})
    again = read_config_text(dump_config(cfg), env={})
    assert again == cfg
    base = load_config(None, env={})
    assert read_config_text(dump_config(base), env={}) == base


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.ini", env={})


def test_parse_control():
    c = parse_control("0.3")
    assert c(0.0) == 0.3 and c(100.0) == 0.3
    c = parse_control("0:0.5, 10:0.2")
    assert c(5.0) == 0.5 and c(10.0) == 0.2
    with pytest.raises(ConfigError):
        parse_control("0:abc")
