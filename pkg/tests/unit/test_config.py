from pathlib import Path

import pytest

from nanofiber_probe.config import RunConfig, config_from_event
from nanofiber_probe.constants import MICROSECOND, MILLISECOND
from nanofiber_probe.errors import ConfigError
from nanofiber_probe.pipeline import build_dynamics, build_schedule

RECIPES = Path(__file__).resolve().parents[2] / "recipes"


def test_defaults():
    config = RunConfig()
    assert config.trap.depth_uK == 240.0
    assert config.trap.stiffness == pytest.approx(5.85e6)
    assert config.coupling.beta_hot == 0.012
    assert config.dynamics.initial_od == 1.23
    assert config.schedule.segments == ()
    assert config.fit.analysis == "none"


def test_empty_document_gives_defaults():
    assert RunConfig.from_text("") == RunConfig()


@pytest.mark.parametrize("recipe", sorted(RECIPES.glob("*.yaml")), ids=lambda p: p.stem)
def test_recipes_parse(recipe):
    config = RunConfig.from_file(recipe)
    assert config.source == str(recipe)


def test_schedule_syntax():
    config = RunConfig.from_text(
        "schedule:\n"
        "  segments:\n"
        "    - {kind: wait, duration_ms: 30}\n"
        "    - {kind: probe, duration_us: 1000, power: 0.27}\n"
        "  sweep: {target: wait_ms, values: [0, 30, 60, 90]}\n"
        "fit:\n"
        "  analysis: flank\n"
    )
    wait, probe = config.schedule.segments
    assert wait.kind == "wait" and wait.duration == pytest.approx(30 * MILLISECOND)
    assert probe.duration == pytest.approx(1000 * MICROSECOND)
    assert probe.power == 0.27
    assert config.schedule.sweep_target == "wait_ms"
    assert config.schedule.sweep_values == (0.0, 30.0, 60.0, 90.0)
    assert len(build_schedule(config, 0.0).segments) == 1
    assert build_schedule(config, 60.0).segments[0].duration == pytest.approx(60 * MILLISECOND)


def test_repeat_and_power_sweep():
    config = RunConfig.from_text(
        "schedule:\n"
        "  segments:\n"
        "    - {kind: probe, duration_us: 20, power: 0.26}\n"
        "    - {kind: cool, duration_ms: 8}\n"
        "  repeat: 3\n"
        "  sweep: {target: power, values: [0.1]}\n"
    )
    schedule = build_schedule(config, 0.1)
    assert len(schedule.segments) == 6
    assert all(p.power == 0.1 for p in schedule.probes)


def test_exponent_without_dot_is_a_number():
    config = RunConfig.from_text("dynamics:\n  rtol: 1e-7\n  atol_K: 1e-13\n")
    assert config.dynamics.rtol == 1e-7
    assert build_dynamics(config).atol == 1e-13


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("trap:\n  depth_uK: 240\n  bogus: 1\n", 3, "bogus"),
        ("trap:\n  depth_uK: 240\nnonsense:\n  a: 1\n", 3, "nonsense"),
        ("monte_carlo:\n  samples: many\n", 2, "integer"),
        ("trap:\n  depth_uK: -5\n", 2, "depth_uK"),
        ("coupling:\n  beta_hot: 0.03\n", 2, "beta_hot"),
        ("coupling:\n  reference_beta: 0.7\n", 2, "reference_beta"),
        ("schedule:\n  segments:\n    - {kind: probe, duration_us: 10}\n", 3, "power"),
        ("schedule:\n  segments:\n    - {kind: jump, duration_us: 10}\n", 3, "kind"),
        ("schedule:\n  segments:\n    - {kind: cool, duration_ms: 1}\n  sweep: {target: speed, values: [1]}\n", 4, "target"),
        ("fit:\n  analysis: everything\n", 2, "analysis"),
        ("trap: [1, 2\n", 2, "YAML"),
    ],
)
def test_invalid_configuration_names_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.from_text(text, "run.yaml")
    assert excinfo.value.line == line
    assert excinfo.value.path == "run.yaml"
    assert fragment in str(excinfo.value)
    assert str(excinfo.value).startswith(f"run.yaml:{line}:")


def test_duplicate_keys_are_rejected():
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.from_text("trap:\n  depth_uK: 240\n  depth_uK: 250\n")
    assert excinfo.value.line == 3


def test_missing_file():
    with pytest.raises(ConfigError):
        RunConfig.from_file("does/not/exist.yaml")


def test_event_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("monte_carlo:\n  seed: 5\n", encoding="utf-8")
    config = config_from_event({"config": str(path), "seed": 9, "out": str(tmp_path / "o"), "samples": 12345})
    assert config.monte_carlo.seed == 9
    assert config.monte_carlo.samples == 12345
    assert config.output.directory == str(tmp_path / "o")
    assert config_from_event({}).monte_carlo.seed == 0


def test_from_mapping_round_trip():
    config = RunConfig.from_mapping({"trap": {"depth_uK": 120.0}, "excited": {"calibrate": True}})
    assert config.trap.depth_uK == 120.0
    assert config.excited.calibrate is True
