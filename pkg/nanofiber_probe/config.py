"""
Run configuration: a YAML document with unit-suffixed keys, validated into
frozen attrs sections. Errors point at the file and line of the offending node.
"""
import logging
import math
from pathlib import Path

import attrs
import yaml

from nanofiber_probe.constants import (
    CESIUM_LINEWIDTH_HZ,
    CESIUM_MASS_U,
    CESIUM_WAVELENGTH_M,
    MICROKELVIN,
    MICROSECOND,
    MILLISECOND,
    NANOMETER,
)
from nanofiber_probe.errors import ConfigError
from nanofiber_probe.heating_mc import DEFAULT_SAMPLES, SAMPLING_MODES, TIME_WEIGHTED

logger = logging.getLogger(__name__)

PER_MICROMETER = 1e6
SWEEP_TARGETS = ("power", "wait_ms", "cool_ms")
READOUTS = ("trace", "instant_od")
ANALYSES = ("flank", "lifetime", "cool_recovery", "stitched", "none")
SEGMENT_KINDS = ("probe", "cool", "wait")


@attrs.frozen
class TrapSection:
    depth_uK: float = 240.0
    stiffness_per_um: float = 5.85
    position_nm: float = 231.0

    @property
    def depth_K(self):
        return self.depth_uK * MICROKELVIN

    @property
    def stiffness(self):
        return self.stiffness_per_um * PER_MICROMETER

    @property
    def position(self):
        return self.position_nm * NANOMETER


@attrs.frozen
class AtomSection:
    mass_u: float = CESIUM_MASS_U
    linewidth_MHz: float = CESIUM_LINEWIDTH_HZ / 1e6
    wavelength_nm: float = CESIUM_WAVELENGTH_M / NANOMETER


@attrs.frozen
class CouplingSection:
    beta_hot: float = 0.012
    beta_cold: float = 0.024
    cold_temperature_uK: float = 1.0
    # Fixing both skips the two-point calibration.
    amplitude: float | None = None
    decay_length_nm: float | None = None
    sweep_start_uK: float = 0.1
    sweep_stop_uK: float = 10_000.0
    sweep_points: int = 61
    # Saturated absorbed power and the coupling it was measured at; reported by calibrate.
    saturated_absorption_pW: float = 112.0
    reference_beta: float = 0.011


@attrs.frozen
class ExcitedSection:
    """amplitude_uK and decay_per_um default to the trap depth and stiffness."""

    amplitude_uK: float | None = None
    decay_per_um: float | None = None
    calibrate: bool = False
    target_temperature_uK: float = 100.0
    calibration_samples: int = 20_000


@attrs.frozen
class MonteCarloSection:
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    sampling: str = TIME_WEIGHTED


@attrs.frozen
class DynamicsSection:
    initial_temperature_uK: float = 1.0
    passive_rate_mK_per_s: float = 6.0
    cooling_rate_per_s: float = 1000.0
    calibrate_cooling: bool = False
    target_recovery_rate_per_s: float = 360.0
    initial_od: float = 1.23
    initial_atoms: float | None = None
    sample_period_us: float = 1.0
    rtol: float = 1e-7
    atol_K: float = 1e-12


@attrs.frozen
class Segment:
    kind: str
    duration: float
    power: float = 0.0


@attrs.frozen
class ScheduleSection:
    segments: tuple = ()
    repeat: int = 1
    sweep_target: str | None = None
    sweep_values: tuple = ()
    readout: str = "trace"
    fixed_beta_readout: bool = True


@attrs.frozen
class FitSection:
    analysis: str = "none"


@attrs.frozen
class OutputSection:
    directory: str = "out"


@attrs.frozen
class RunConfig:
    trap: TrapSection = attrs.field(factory=TrapSection)
    atom: AtomSection = attrs.field(factory=AtomSection)
    coupling: CouplingSection = attrs.field(factory=CouplingSection)
    excited: ExcitedSection = attrs.field(factory=ExcitedSection)
    monte_carlo: MonteCarloSection = attrs.field(factory=MonteCarloSection)
    dynamics: DynamicsSection = attrs.field(factory=DynamicsSection)
    schedule: ScheduleSection = attrs.field(factory=ScheduleSection)
    fit: FitSection = attrs.field(factory=FitSection)
    output: OutputSection = attrs.field(factory=OutputSection)
    source: str | None = attrs.field(default=None, eq=False)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read configuration: {e.strerror}", str(path)) from e
        return cls.from_text(text, str(path))

    @classmethod
    def from_text(cls, text, source="<string>"):
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            if node is None:
                return cls(source=source)
            return _Parser(loader, source).run_config(node)
        except yaml.MarkedYAMLError as e:
            line = e.problem_mark.line + 1 if e.problem_mark else None
            raise ConfigError(f"YAML syntax error: {e.problem}", source, line) from e
        finally:
            loader.dispose()

    @classmethod
    def from_mapping(cls, mapping):
        return cls.from_text(yaml.safe_dump(mapping, sort_keys=False), "<mapping>")

    def with_overrides(self, seed=None, out=None, samples=None):
        config = self
        if seed is not None:
            config = attrs.evolve(config, monte_carlo=attrs.evolve(config.monte_carlo, seed=seed))
        if samples is not None:
            config = attrs.evolve(config, monte_carlo=attrs.evolve(config.monte_carlo, samples=samples))
        if out is not None:
            config = attrs.evolve(config, output=OutputSection(directory=str(out)))
        return config


_SECTIONS = {
    "trap": TrapSection,
    "atom": AtomSection,
    "coupling": CouplingSection,
    "excited": ExcitedSection,
    "monte_carlo": MonteCarloSection,
    "dynamics": DynamicsSection,
    "fit": FitSection,
    "output": OutputSection,
}


class _Parser:
    """Walks the composed YAML node tree so every value keeps its line number."""

    def __init__(self, loader, source):
        self.loader = loader
        self.source = source

    def error(self, message, node):
        raise ConfigError(message, self.source, node.start_mark.line + 1)

    def mapping(self, node, where):
        if not isinstance(node, yaml.MappingNode):
            self.error(f"'{where}' must be a mapping", node)
        items = {}
        for key_node, value_node in node.value:
            key = self.loader.construct_object(key_node)
            if not isinstance(key, str):
                self.error(f"keys in '{where}' must be strings", key_node)
            if key in items:
                self.error(f"duplicate key '{key}' in '{where}'", key_node)
            items[key] = (key_node, value_node)
        return items

    def scalar(self, node, where, expected):
        if not isinstance(node, yaml.ScalarNode):
            self.error(f"'{where}' must be a scalar", node)
        value = self.loader.construct_object(node)
        if value is None:
            return None
        if expected is bool:
            if not isinstance(value, bool):
                self.error(f"'{where}' must be true or false, got {value!r}", node)
            return value
        if expected is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.error(f"'{where}' must be an integer, got {value!r}", node)
            return value
        if expected is float:
            # YAML 1.1 reads 1e-7 (no dot) as a string.
            if isinstance(value, str):
                try:
                    value = float(value)
                except ValueError:
                    self.error(f"'{where}' must be a number, got {value!r}", node)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.error(f"'{where}' must be a number, got {value!r}", node)
            if not math.isfinite(value):
                self.error(f"'{where}' must be finite", node)
            return float(value)
        if not isinstance(value, str):
            self.error(f"'{where}' must be a string, got {value!r}", node)
        return value

    def section(self, cls, node, name):
        fields = {f.name: f for f in attrs.fields(cls)}
        values = {}
        for key, (key_node, value_node) in self.mapping(node, name).items():
            if key not in fields:
                self.error(f"unknown key '{key}' in section '{name}'", key_node)
            expected = _scalar_type(fields[key].type)
            values[key] = self.scalar(value_node, f"{name}.{key}", expected)
            if values[key] is None:
                del values[key]
        try:
            section = cls(**values)
        except (TypeError, ValueError) as e:
            self.error(str(e), node)
        self.check(section, name, node)
        return section

    def check(self, section, name, node):
        problems = _section_problems(section)
        if problems:
            self.error(f"section '{name}': {problems[0]}", node)

    def segment(self, node, index):
        where = f"schedule.segments[{index}]"
        items = self.mapping(node, where)
        allowed = {"kind", "duration_us", "duration_ms", "power"}
        for key, (key_node, _) in items.items():
            if key not in allowed:
                self.error(f"unknown key '{key}' in {where}", key_node)
        if "kind" not in items:
            self.error(f"{where} needs a 'kind' ({', '.join(SEGMENT_KINDS)})", node)
        kind = self.scalar(items["kind"][1], f"{where}.kind", str)
        if kind not in SEGMENT_KINDS:
            self.error(f"{where}.kind must be one of {SEGMENT_KINDS}, got {kind!r}", items["kind"][1])
        if ("duration_us" in items) == ("duration_ms" in items):
            self.error(f"{where} needs exactly one of duration_us, duration_ms", node)
        unit_key = "duration_us" if "duration_us" in items else "duration_ms"
        unit = MICROSECOND if unit_key == "duration_us" else MILLISECOND
        duration = self.scalar(items[unit_key][1], f"{where}.{unit_key}", float)
        if duration is None or duration <= 0:
            self.error(f"{where}.{unit_key} must be strictly positive", items[unit_key][1])
        power = 0.0
        if "power" in items:
            if kind != "probe":
                self.error(f"{where}: only probe segments take a power", items["power"][0])
            power = self.scalar(items["power"][1], f"{where}.power", float)
            if power is None or power < 0:
                self.error(f"{where}.power must be non-negative", items["power"][1])
        elif kind == "probe":
            self.error(f"{where}: probe segments need a power", node)
        return Segment(kind=kind, duration=duration * unit, power=power)

    def schedule(self, node):
        items = self.mapping(node, "schedule")
        allowed = {"segments", "repeat", "sweep", "readout", "fixed_beta_readout"}
        values = {}
        for key, (key_node, value_node) in items.items():
            if key not in allowed:
                self.error(f"unknown key '{key}' in section 'schedule'", key_node)
            if key == "segments":
                if not isinstance(value_node, yaml.SequenceNode) or not value_node.value:
                    self.error("schedule.segments must be a non-empty list", value_node)
                values["segments"] = tuple(
                    self.segment(child, i) for i, child in enumerate(value_node.value)
                )
            elif key == "repeat":
                values["repeat"] = self.scalar(value_node, "schedule.repeat", int)
                if values["repeat"] < 1:
                    self.error("schedule.repeat must be at least 1", value_node)
            elif key == "readout":
                values["readout"] = self.scalar(value_node, "schedule.readout", str)
                if values["readout"] not in READOUTS:
                    self.error(f"schedule.readout must be one of {READOUTS}", value_node)
            elif key == "fixed_beta_readout":
                values["fixed_beta_readout"] = self.scalar(value_node, "schedule.fixed_beta_readout", bool)
            else:
                target, sweep_values = self.sweep(value_node)
                values["sweep_target"] = target
                values["sweep_values"] = sweep_values
        return ScheduleSection(**values)

    def sweep(self, node):
        items = self.mapping(node, "schedule.sweep")
        for key, (key_node, _) in items.items():
            if key not in ("target", "values"):
                self.error(f"unknown key '{key}' in schedule.sweep", key_node)
        if "target" not in items or "values" not in items:
            self.error("schedule.sweep needs 'target' and 'values'", node)
        target = self.scalar(items["target"][1], "schedule.sweep.target", str)
        if target not in SWEEP_TARGETS:
            self.error(f"schedule.sweep.target must be one of {SWEEP_TARGETS}", items["target"][1])
        values_node = items["values"][1]
        if not isinstance(values_node, yaml.SequenceNode) or not values_node.value:
            self.error("schedule.sweep.values must be a non-empty list", values_node)
        values = tuple(self.scalar(v, "schedule.sweep.values", float) for v in values_node.value)
        if any(v is None or v < 0 for v in values):
            self.error("schedule.sweep.values must be non-negative numbers", values_node)
        return target, values

    def run_config(self, node):
        sections = {}
        for key, (key_node, value_node) in self.mapping(node, "<document>").items():
            if key == "schedule":
                sections[key] = self.schedule(value_node)
            elif key in _SECTIONS:
                sections[key] = self.section(_SECTIONS[key], value_node, key)
            else:
                self.error(f"unknown section '{key}'", key_node)
        config = RunConfig(source=self.source, **sections)
        logger.debug("Loaded configuration from %s", self.source)
        return config


def _scalar_type(annotation):
    text = str(annotation)
    for candidate in (bool, int, float, str):
        if annotation is candidate or candidate.__name__ in text.split(" | "):
            return candidate
    return str


def _section_problems(section):
    problems = []
    positive = {
        TrapSection: ("depth_uK", "stiffness_per_um", "position_nm"),
        AtomSection: ("mass_u", "linewidth_MHz", "wavelength_nm"),
        CouplingSection: ("cold_temperature_uK", "sweep_start_uK", "sweep_stop_uK", "sweep_points",
                          "decay_length_nm", "saturated_absorption_pW"),
        ExcitedSection: ("decay_per_um", "target_temperature_uK", "calibration_samples"),
        MonteCarloSection: ("samples",),
        DynamicsSection: ("initial_temperature_uK", "initial_od", "initial_atoms",
                          "sample_period_us", "rtol", "atol_K", "target_recovery_rate_per_s"),
    }
    non_negative = {
        ExcitedSection: ("amplitude_uK",),
        MonteCarloSection: ("seed",),
        DynamicsSection: ("passive_rate_mK_per_s", "cooling_rate_per_s"),
    }
    for name in positive.get(type(section), ()):
        value = getattr(section, name)
        if value is not None and not value > 0:
            problems.append(f"{name} must be strictly positive, got {value!r}")
    for name in non_negative.get(type(section), ()):
        value = getattr(section, name)
        if value is not None and not value >= 0:
            problems.append(f"{name} must be non-negative, got {value!r}")
    if isinstance(section, CouplingSection):
        if not 0 < section.beta_hot < section.beta_cold < 0.5:
            problems.append("coupling targets must satisfy 0 < beta_hot < beta_cold < 0.5")
        if (section.amplitude is None) != (section.decay_length_nm is None):
            problems.append("amplitude and decay_length_nm must be given together")
        if section.sweep_start_uK >= section.sweep_stop_uK:
            problems.append("sweep_start_uK must be below sweep_stop_uK")
        if not 0 < section.reference_beta < 0.5:
            problems.append(f"reference_beta must lie in (0, 0.5), got {section.reference_beta!r}")
    if isinstance(section, MonteCarloSection) and section.sampling not in SAMPLING_MODES:
        problems.append(f"sampling must be one of {SAMPLING_MODES}, got {section.sampling!r}")
    if isinstance(section, FitSection) and section.analysis not in ANALYSES:
        problems.append(f"analysis must be one of {ANALYSES}, got {section.analysis!r}")
    return problems


def config_from_event(event):
    """RunConfig named by event['config'] (defaults when absent) with CLI overrides applied."""
    path = event.get("config")
    config = RunConfig.from_file(path) if path else RunConfig()
    return config.with_overrides(
        seed=event.get("seed"), out=event.get("out"), samples=event.get("samples")
    )
