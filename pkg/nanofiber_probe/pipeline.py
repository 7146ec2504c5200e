"""
Builds the simulation objects a command needs from a RunConfig: bound states,
calibrated coupling, excited potential, the (cached) heating table and the
probe context with its dynamics settings.
"""
import logging
import math
from pathlib import Path

import attrs
import scipy.constants as sc

from nanofiber_probe.calibration import calibrate_cooling_rate, calibrate_excited_amplitude
from nanofiber_probe.constants import (
    CONSTANTS,
    MICROKELVIN,
    MICROSECOND,
    NANOMETER,
    AtomSpecies,
    temperature_to_energy,
)
from nanofiber_probe.coupling_thermal import (
    CouplingProfile,
    calibrate_coupling,
    per_state_coupling,
)
from nanofiber_probe.dynamics import (
    Cool,
    DynamicsConfig,
    Probe,
    PulseSchedule,
    Wait,
    build_probe_context,
)
from nanofiber_probe.heating_mc import build_heating_table
from nanofiber_probe.morse_spectrum import MorsePotential, RepulsivePotential, build_bound_states
from nanofiber_probe.outputs import ResultCache, cache_key

logger = logging.getLogger(__name__)

PER_MICROMETER = 1e6


@attrs.frozen
class Workspace:
    config: object = attrs.field(repr=False)
    table: object = attrs.field(repr=False)
    species: AtomSpecies = attrs.field(repr=False)
    profile: CouplingProfile
    calibration: object = attrs.field(eq=False, repr=False)
    excited: RepulsivePotential
    heating: object = attrs.field(eq=False, repr=False)
    context: object = attrs.field(eq=False, repr=False)
    dynamics: DynamicsConfig
    diagnostics: dict = attrs.field(factory=dict, eq=False)


def build_species(config):
    atom = config.atom
    return AtomSpecies(
        mass=atom.mass_u * sc.atomic_mass,
        linewidth=2.0 * math.pi * atom.linewidth_MHz * 1e6,
        wavelength=atom.wavelength_nm * NANOMETER,
        constants=CONSTANTS,
    )


def build_potential(config):
    trap = config.trap
    return MorsePotential(
        depth=temperature_to_energy(trap.depth_K),
        stiffness=trap.stiffness,
        position=trap.position,
    )


def build_table(config, species=None):
    species = species or build_species(config)
    return build_bound_states(build_potential(config), species.mass, CONSTANTS)


def build_profile(config, table):
    """Fixed profile when the config gives one, the two-point calibration otherwise."""
    coupling = config.coupling
    if coupling.amplitude is not None:
        profile = CouplingProfile(
            amplitude=coupling.amplitude,
            decay_length=coupling.decay_length_nm * NANOMETER,
            position=table.potential.position,
        )
        return profile, None
    calibration = calibrate_coupling(
        table, coupling.beta_hot, coupling.beta_cold, coupling.cold_temperature_uK * MICROKELVIN
    )
    return calibration.profile, calibration


def build_excited(config, table, amplitude=None):
    excited = config.excited
    if amplitude is None:
        amplitude = (
            temperature_to_energy(excited.amplitude_uK * MICROKELVIN)
            if excited.amplitude_uK is not None
            else table.potential.depth
        )
    decay = (
        excited.decay_per_um * PER_MICROMETER if excited.decay_per_um is not None
        else table.potential.stiffness
    )
    return RepulsivePotential(amplitude=amplitude, decay=decay, position=table.potential.position)


def heating_key(table, excited, species, samples, seed, sampling):
    return cache_key({
        "kind": "heating",
        "ground": [table.potential.depth, table.potential.stiffness, table.potential.position],
        "excited": [excited.amplitude, excited.decay, excited.position],
        "mass": species.mass,
        "linewidth": species.linewidth,
        "wavelength": species.wavelength,
        "energies": table.energies,
        "samples": samples,
        "seed": seed,
        "sampling": sampling,
    })


def heating_table(table, excited, species, samples, seed, sampling, cache, threads=1):
    key = heating_key(table, excited, species, samples, seed, sampling)
    cached = cache.load_heating(key)
    if cached is not None:
        return cached
    result = build_heating_table(table, excited, species, samples, seed, sampling, threads)
    cache.store_heating(key, result)
    return result


def build_dynamics(config):
    dynamics = config.dynamics
    return DynamicsConfig(
        initial_temperature=dynamics.initial_temperature_uK * MICROKELVIN,
        passive_rate=dynamics.passive_rate_mK_per_s * 1e-3,
        cooling_rate=dynamics.cooling_rate_per_s,
        initial_atoms=dynamics.initial_atoms,
        initial_optical_depth=dynamics.initial_od,
        sample_period=dynamics.sample_period_us * MICROSECOND,
        rtol=dynamics.rtol,
        atol=dynamics.atol_K,
    )


def build_schedule(config, sweep_value=None):
    """PulseSchedule from the schedule section, with one sweep value applied."""
    section = config.schedule
    kinds = {"probe": Probe, "cool": Cool, "wait": Wait}
    segments = [
        Probe(s.duration, s.power) if s.kind == "probe" else kinds[s.kind](s.duration)
        for s in section.segments
    ]
    schedule = PulseSchedule(segments)
    if sweep_value is not None:
        if section.sweep_target == "power":
            schedule = schedule.with_power(sweep_value)
        elif section.sweep_target == "wait_ms":
            schedule = schedule.with_duration(Wait, sweep_value * 1e-3)
        else:
            schedule = schedule.with_duration(Cool, sweep_value * 1e-3)
    return schedule.repeated(section.repeat)


def _excited_amplitude(config, table, profile, per_state, species, dynamics, cache, threads):
    section = config.excited
    mc = config.monte_carlo
    key = cache_key({
        "kind": "excited_amplitude",
        "heating": heating_key(
            table, build_excited(config, table), species, section.calibration_samples, mc.seed, mc.sampling
        ),
        "profile": [profile.amplitude, profile.decay_length],
        "target": section.target_temperature_uK,
        "dynamics": attrs.asdict(dynamics),
    })
    record = cache.load_record(key)
    if record is not None:
        return record["amplitude"]

    def context_for(amplitude):
        excited = build_excited(config, table, amplitude)
        heating = build_heating_table(
            table, excited, species, section.calibration_samples, mc.seed, mc.sampling, threads
        )
        return build_probe_context(table, per_state, heating, species)

    result = calibrate_excited_amplitude(
        context_for, dynamics, table.potential.depth, section.target_temperature_uK * MICROKELVIN
    )
    cache.store_record(key, attrs.asdict(result))
    return result.amplitude


def build_workspace(config, cache_dir=None, threads=1):
    """Assemble everything the dynamics commands need, running enabled calibrations."""
    cache = ResultCache(cache_dir if cache_dir is not None else Path(config.output.directory) / "cache")
    species = build_species(config)
    table = build_table(config, species)
    profile, calibration = build_profile(config, table)
    dynamics = build_dynamics(config)

    excited = build_excited(config, table)
    per_state = per_state_coupling(table, profile, excited)
    diagnostics = {}
    if config.excited.calibrate:
        amplitude = _excited_amplitude(config, table, profile, per_state, species, dynamics, cache, threads)
        excited = build_excited(config, table, amplitude)
        per_state = per_state_coupling(table, profile, excited)
        diagnostics["excited_amplitude_over_depth"] = amplitude / table.potential.depth

    mc = config.monte_carlo
    heating = heating_table(table, excited, species, mc.samples, mc.seed, mc.sampling, cache, threads)
    context = build_probe_context(table, per_state, heating, species)

    if config.dynamics.calibrate_cooling:
        cooling = calibrate_cooling_rate(
            context, dynamics, config.dynamics.target_recovery_rate_per_s
        )
        dynamics = attrs.evolve(dynamics, cooling_rate=cooling.cooling_rate)
        diagnostics["cooling"] = attrs.asdict(cooling)

    return Workspace(
        config=config,
        table=table,
        species=species,
        profile=profile,
        calibration=calibration,
        excited=excited,
        heating=heating,
        context=context,
        dynamics=dynamics,
        diagnostics=diagnostics,
    )
