import textwrap

import pytest

from crossgame.config import (AgentsConfig, ConfigError, ScenarioConfig, case_scenario,
                              dump_scenario, load_scenario, parse_scenario)

MINIMAL = """\
initial:
  gap: 30.0
  v_av: 9.0
  v_ped: 0.0
"""


def test_minimal_file_takes_defaults(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(MINIMAL)
    cfg = load_scenario(p)
    assert cfg.dt == 0.8 and cfg.horizon == 40.0 and cfg.horizon_steps == 50
    assert cfg.agents.k_max == 2 and cfg.agents.lambda_init == 10.0
    assert cfg.agents.av_level_belief is None
    assert cfg.geometry.lane_width == 3.65
    assert cfg.weights.w_collision == 1000.0
    assert cfg.sampling.history == 5
    assert cfg.search.iterations >= 1
    assert cfg.initial.ped_offset == 2.564
    assert cfg.utility_weights().v_des == 9.0


def test_negative_lane_width_names_field():
    text = MINIMAL + "geometry:\n  lane_width: -3.0\n"
    with pytest.raises(ConfigError, match=r"geometry\.lane_width \(line 6\)"):
        parse_scenario(text)


def test_missing_required_field():
    text = "initial:\n  gap: 30.0\n  v_av: 9.0\n"
    with pytest.raises(ConfigError, match=r"initial\.v_ped"):
        parse_scenario(text)


def test_missing_initial_section():
    with pytest.raises(ConfigError, match="initial"):
        parse_scenario("dt: 0.5\n")


def test_malformed_yaml_reports_line():
    with pytest.raises(ConfigError, match="malformed YAML at line 3"):
        parse_scenario("initial:\n  gap: 1\n  v_av: : 2\n  v_ped: 0\n")


def test_unknown_field():
    with pytest.raises(ConfigError, match=r"search\.iters \(line 6\): unknown field"):
        parse_scenario(MINIMAL + "search:\n  iters: 5\n")


def test_wrong_type():
    with pytest.raises(ConfigError, match=r"search\.iterations"):
        parse_scenario(MINIMAL + "search:\n  iterations: many\n")


def test_bad_top_level_dt():
    with pytest.raises(ConfigError, match="dt"):
        parse_scenario(MINIMAL + "dt: 0\n")


def test_round_trip():
    cfg = parse_scenario(MINIMAL + textwrap.dedent("""\
        agents:
          av_level_belief: [0.25, 0.75]
        search:
          iterations: 123
        """))
    again = parse_scenario(dump_scenario(cfg))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_belief_must_be_simplex():
    with pytest.raises(ValueError):
        AgentsConfig(av_level_belief=(0.5, 0.6))
    with pytest.raises(ValueError):
        AgentsConfig(ped_level_belief=(1.0,))


def test_case_presets():
    c1 = case_scenario(1)
    assert (c1.initial.gap, c1.initial.v_av, c1.initial.a_av, c1.initial.v_ped) == (
        46.309, 9.348, -0.11, 0.03)
    assert case_scenario(2).initial.gap == 34.0
    assert case_scenario(3).initial == case_scenario(2).initial
    with pytest.raises(ValueError):
        case_scenario(4)


def test_config_hash_changes_with_content():
    a = case_scenario(1)
    b = case_scenario(1, gap=40.0)
    assert a.config_hash() != b.config_hash()
    assert isinstance(a, ScenarioConfig)
