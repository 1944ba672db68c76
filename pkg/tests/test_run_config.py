"""
Test suite for the sectioned key = value run configuration
"""
import pytest

from errors import ConfigParseError, ConfigurationError
from initial_conditions import ICFamily
from integrator_engine import PositivityMode, SolverMethod
from run_config import Scenario, load_config, parse_config, thread_count


def test_empty_config_uses_defaults():
    config = parse_config("")
    assert config.run.scenario == Scenario.SIMULATE
    assert config.run.truncation == 12
    assert config.galerkin.order == 12
    assert config.model.theta == 0.6
    assert config.integrator.rel_tol == 1e-8
    assert config.integrator.method == SolverMethod.AUTO
    assert config.integrator.dt_min is None
    assert config.certificate.B_target == 0.447


def test_sections_and_comments():
    text = """
    # decay run
    scenario = decay        # trailing comment
    truncation = 6
    [model]
    theta = 0.55
    [ic]
    family = delta-ball
    delta = 0.4
    [integrator]
    method = Radau
    positivity_mode = clamp
    [scenario.decay]
    fit_window = 2, 40
    """
    config = parse_config(text)
    assert config.run.scenario == Scenario.DECAY
    assert config.galerkin.order == 6
    assert config.model.theta == 0.55
    assert config.ic.family == ICFamily.DELTA_BALL
    assert config.ic.delta == 0.4
    assert config.integrator.method == SolverMethod.RADAU
    assert config.integrator.positivity_mode == PositivityMode.CLAMP
    assert config.scenario.decay.fit_window == [2.0, 40.0]


def test_top_level_key_resolves_to_owning_section():
    config = parse_config("theta = 0.6\nrel_tol = 1e-10")
    assert config.model.theta == 0.6
    assert config.integrator.rel_tol == 1e-10


def test_constraint_violation_names_line_and_key():
    with pytest.raises(ConfigParseError) as info:
        parse_config("[run]\nt_end = 2\n[model]\ntheta = -1\n")
    assert info.value.line == 4
    assert info.value.key == "model.theta"


def test_unknown_key_and_section():
    with pytest.raises(ConfigParseError) as info:
        parse_config("[model]\nviscosity = 1")
    assert info.value.line == 2
    with pytest.raises(ConfigParseError):
        parse_config("[physics]\nx = 1")
    with pytest.raises(ConfigParseError):
        parse_config("[model\ntheta = 0.6")
    with pytest.raises(ConfigParseError):
        parse_config("theta 0.6")


def test_duplicate_key():
    with pytest.raises(ConfigParseError) as info:
        parse_config("[model]\ntheta = 0.6\ntheta = 0.5")
    assert info.value.line == 3


def test_overrides_win():
    config = parse_config("[model]\ntheta = 0.6", ["model.theta=0.5", "run.seed=9", "truncation=7"])
    assert config.model.theta == 0.5
    assert config.run.seed == 9
    assert config.run.truncation == 7
    assert config.galerkin.order == 7


def test_override_errors_report_override_line():
    with pytest.raises(ConfigParseError) as info:
        parse_config("", ["model.theta"])
    assert info.value.line == 0
    assert "--set" in str(info.value)


def test_galerkin_order_must_match_truncation():
    with pytest.raises(ConfigParseError) as info:
        parse_config("truncation = 6\n[galerkin]\norder = 5")
    assert info.value.key == "galerkin.order"
    config = parse_config("rhs = dyadic\ntruncation = 6\n[galerkin]\norder = 5")
    assert config.galerkin.order == 5


def test_empty_time_span_rejected():
    with pytest.raises(ConfigParseError) as info:
        parse_config("t_start = 1\nt_end = 1")
    assert info.value.key == "run.t_end"


def test_scenario_option_lists():
    config = parse_config("[scenario.galerkin-convergence]\norders = 4, 6, 8\nprobe_times = 0.1, 0.5")
    assert config.scenario.galerkin_convergence.orders == [4, 6, 8]
    assert config.scenario.galerkin_convergence.probe_times == [0.1, 0.5]


def test_digest_is_stable():
    a = parse_config("theta = 0.6\nseed = 3")
    b = parse_config("seed = 3\n[model]\ntheta = 0.6")
    assert a.digest() == b.digest()
    assert a.digest() != parse_config("seed = 4").digest()
    assert len(a.digest()) == 64


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("scenario = certificate\n", encoding="utf-8")
    assert load_config(str(path)).run.scenario == Scenario.CERTIFICATE
    assert load_config(None, ["scenario=scaling"]).run.scenario == Scenario.SCALING
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / "missing.cfg"))


def test_thread_count(monkeypatch):
    monkeypatch.delenv("DYADIC_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("DYADIC_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("DYADIC_THREADS", "many")
    with pytest.raises(ConfigurationError):
        thread_count()
