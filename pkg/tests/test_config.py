import pytest

from markov_structures.config import (
    DEFAULT_BREAKPOINTS,
    DEFAULT_ETAS,
    ModeConfig,
    QueryConfig,
    Schedule,
    bundled_scenarios,
    load_scenario,
    parse_scenario,
    resolve_scenario,
)
from markov_structures.exceptions import ConfigError
from markov_structures.measures import FixedHorizon, RollingWindow

MINIMAL = """\
name = "minimal"
family = "extreme_contagion"

[parameters]
c = { values = [0.01, 0.1, 0.08, 0.05, 0.03, 0.03] }
"""


def _messages(text):
    with pytest.raises(ConfigError) as excinfo:
        parse_scenario(text, "scenario.toml")
    return excinfo.value.messages


def test_bundled_scenarios():
    scenarios = bundled_scenarios()

    assert len(scenarios) == 15
    assert list(scenarios) == sorted(scenarios)
    assert scenarios["ex1_common_jumps_s1"].family == "common_jumps"
    assert scenarios["ex2_extreme_contagion_s1"].mode.kind == "rolling"
    assert scenarios["ex1_common_jumps_discrete"].algorithm.dt == 0.25
    assert scenarios["ex1_common_jumps_discrete"].comparison.etas == ()
    alt = scenarios["ex4_systemic_importance_s1_alt"]
    assert alt.parameters["c"].breakpoints == (0.0, 6.0, 8.0, 10.0, 12.0, 15.0)


def test_defaults():
    config = parse_scenario(MINIMAL)

    assert config.name == "minimal"
    assert config.description == ""
    assert config.m == 2
    assert config.query == QueryConfig((1, 1), 2, (0, 0))
    assert config.mode == ModeConfig()
    assert config.grid_step == 0.2
    assert config.comparison.etas == DEFAULT_ETAS
    assert not config.comparison.extreme_contagion
    assert config.montecarlo is None
    assert config.algorithm is None
    assert config.parameters["c"].breakpoints == DEFAULT_BREAKPOINTS


def test_schedule_to_function():
    config = parse_scenario(MINIMAL)

    fn = config.functions()["c"]

    assert fn(7.0) == 0.1
    assert fn.breakpoints == DEFAULT_BREAKPOINTS
    assert Schedule((0.0, 2.0), (0.1, 0.2)).to_function()(2.0) == 0.2


def test_modes_build():
    assert ModeConfig().build() == FixedHorizon(30.0)
    assert ModeConfig(kind="rolling", window=2.0, end=10.0).build() == RollingWindow(
        2.0, 10.0
    )


def test_with_grid_step():
    config = parse_scenario(MINIMAL)

    assert config.with_grid_step(0.5).grid_step == 0.5
    assert config.grid_step == 0.2


def test_unknown_key_is_reported_with_line():
    text = MINIMAL.replace("\n\n[parameters]", '\ncolour = "red"\n\n[parameters]')

    assert _messages(text) == ["3: colour: Unknown field."]


def test_nested_error_path():
    text = MINIMAL + "\n[mode]\nkind = \"sliding\"\n"

    messages = _messages(text)

    assert len(messages) == 1
    assert messages[0].startswith("8: mode.kind: Must be one of: fixed, rolling")


def test_default_periods_need_six_values():
    text = MINIMAL.replace("0.03, 0.03]", "0.03]")

    messages = _messages(text)

    assert messages == [
        "5: parameters.c.values: without breakpoints, 6 values are required for the "
        "default periods [0.0, 6.0, 10.0, 20.0, 26.0, 30.0]."
    ]


@pytest.mark.parametrize(
    "schedule,message",
    [
        (
            "{ breakpoints = [1, 2], values = [0.1, 0.2] }",
            "parameters.c.breakpoints: breakpoints must start at 0.",
        ),
        (
            "{ breakpoints = [0, 2, 2], values = [0.1, 0.2, 0.3] }",
            "parameters.c.breakpoints: breakpoints must be strictly increasing.",
        ),
        (
            "{ breakpoints = [0, 2], values = [0.1] }",
            "parameters.c.values: 1 values for 2 breakpoints.",
        ),
    ],
)
def test_schedule_errors(schedule, message):
    text = MINIMAL.replace("{ values = [0.01, 0.1, 0.08, 0.05, 0.03, 0.03] }", schedule)

    assert _messages(text) == ["5: %s" % message]


def test_family_parameters_are_checked():
    text = MINIMAL.replace(
        "[parameters]\n", "[parameters]\nd = { values = [1, 1, 1, 1, 1, 1] }\n"
    ).replace('"extreme_contagion"', '"common_jumps"')

    messages = _messages(text)

    assert set(messages) == {
        "4: parameters.a: Missing parameter for family common_jumps.",
        "4: parameters.b: Missing parameter for family common_jumps.",
        "5: parameters.d: Unknown parameter for family common_jumps.",
    }


def test_explicit_family_needs_generator():
    text = (
        'name = "explicit"\nfamily = "explicit"\n\n[parameters]\n'
        "lambda_1 = { values = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1] }\n"
        "lambda_2 = { values = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1] }\n"
    )

    messages = _messages(text)

    assert messages == ["1: generator: family explicit needs a [generator] table."]


def test_query_must_match_institutions():
    text = MINIMAL + "\n[query]\nz = [1, 1, 1]\n"

    messages = _messages(text)

    assert messages == ["8: query.z: Need one entry per institution (2)."]


def test_query_ratings_are_binary():
    text = MINIMAL + "\n[query]\nz = [2, 1]\n"

    assert _messages(text) == ["8: query.z: Ratings are 0 (alive) or 1 (default)."]


def test_missing_required_fields():
    messages = _messages('family = "extreme_contagion"\n')

    assert "1: name: Missing data for required field." in messages
    assert "1: parameters: Missing data for required field." in messages


def test_toml_syntax_error():
    messages = _messages('name = "broken"\nfamily = \n')

    assert len(messages) == 1
    assert messages[0].startswith("2: ")


def test_config_error_prefixes_source():
    with pytest.raises(ConfigError) as excinfo:
        parse_scenario(MINIMAL.replace("minimal", ""), "scenario.toml")

    assert excinfo.value.source == "scenario.toml"
    assert str(excinfo.value).startswith("scenario.toml:1: name: ")


def test_load_scenario(tmp_path):
    path = tmp_path / "minimal.toml"
    path.write_text(MINIMAL, encoding="utf-8")

    assert load_scenario(path).name == "minimal"
    assert resolve_scenario(str(path)).name == "minimal"


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        load_scenario(tmp_path / "absent.toml")

    assert excinfo.value.messages[0].startswith("1: ")


def test_resolve_bundled_scenario_by_name():
    config = resolve_scenario("ex3_anti_contagion_s2")

    assert config.family == "extreme_anti_contagion"


def test_resolve_unknown_name():
    with pytest.raises(ConfigError) as excinfo:
        resolve_scenario("no_such_scenario")

    assert "no such file or bundled scenario" in excinfo.value.messages[0]
