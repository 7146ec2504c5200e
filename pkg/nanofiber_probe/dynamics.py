"""
Temperature, atom-number and transmission dynamics under probe/cool/wait schedules.

Ensemble averages (mean beta, detuning, heating per scatter) are tabulated once
on a log-temperature grid and interpolated inside the ODE right-hand side.
"""
import logging
import math

import attrs
import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from nanofiber_probe.constants import MICROKELVIN, MICROSECOND
from nanofiber_probe.coupling_thermal import (
    PerStateCoupling,
    mean_beta,
    mean_detuning,
    occupation,
    remaining_fraction,
)
from nanofiber_probe.errors import IntegrationError
from nanofiber_probe.heating_mc import HeatingTable, heating_rate

logger = logging.getLogger(__name__)

GRID_POINTS = 200
GRID_RANGE = (0.1 * MICROKELVIN, 10_000 * MICROKELVIN)
DEFAULT_RTOL = 1e-7
DEFAULT_ATOL = 1e-12


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError(f"{attribute.name} must be strictly positive, got {value!r}")


def _non_negative(instance, attribute, value):
    if not value >= 0:
        raise ValueError(f"{attribute.name} must be non-negative, got {value!r}")


@attrs.frozen
class ProbeContext:
    """Everything the steppers need: the trap, the species and the tabulated averages."""

    table: object = attrs.field(repr=False)
    species: object = attrs.field(repr=False)
    per_state: PerStateCoupling = attrs.field(eq=False, repr=False)
    heating: HeatingTable = attrs.field(eq=False, repr=False)
    beta_inf: float
    log_grid: np.ndarray = attrs.field(eq=False, repr=False)
    beta_curve: PchipInterpolator = attrs.field(eq=False, repr=False)
    detuning_curve: PchipInterpolator = attrs.field(eq=False, repr=False)
    heating_curve: PchipInterpolator = attrs.field(eq=False, repr=False)

    @property
    def depth(self):
        return self.table.potential.depth

    @property
    def k_B(self):
        return self.table.constants.k_B

    def _evaluate(self, curve, temperature):
        log_t = np.clip(np.log(temperature), self.log_grid[0], self.log_grid[-1])
        value = curve(log_t)
        return float(value) if np.ndim(value) == 0 else value

    def mean_beta(self, temperature):
        return self._evaluate(self.beta_curve, temperature)

    def detuning(self, temperature):
        return self._evaluate(self.detuning_curve, temperature)

    def heating_per_scatter(self, temperature):
        return self._evaluate(self.heating_curve, temperature)

    def remaining_fraction(self, peak_temperature):
        return remaining_fraction(self.depth, peak_temperature, self.k_B)


def build_probe_context(table, per_state, heating, species, grid_points=GRID_POINTS,
                        grid_range=GRID_RANGE):
    log_grid = np.linspace(math.log(grid_range[0]), math.log(grid_range[1]), grid_points)
    betas, detunings, heats = [], [], []
    for temperature in np.exp(log_grid):
        occ = occupation(table, temperature)
        betas.append(mean_beta(per_state, occ))
        detunings.append(mean_detuning(per_state, occ))
        heats.append(heating.per_temperature(occ))
    beta_inf = mean_beta(per_state, occupation(table, math.inf))
    logger.debug(
        "Tabulated averages on %d temperatures; beta(inf) = %.5f", grid_points, beta_inf
    )
    return ProbeContext(
        table=table,
        species=species,
        per_state=per_state,
        heating=heating,
        beta_inf=beta_inf,
        log_grid=log_grid,
        beta_curve=PchipInterpolator(log_grid, betas),
        detuning_curve=PchipInterpolator(log_grid, detunings),
        heating_curve=PchipInterpolator(log_grid, heats),
    )


@attrs.frozen
class DynamicsConfig:
    """initial_atoms = None derives N0 from initial_optical_depth at the initial temperature."""

    initial_temperature: float = attrs.field(default=1.0 * MICROKELVIN, validator=_positive)
    passive_rate: float = attrs.field(default=6e-3, validator=_non_negative)
    cooling_rate: float = attrs.field(default=1000.0, validator=_non_negative)
    initial_atoms: float | None = attrs.field(default=None)
    initial_optical_depth: float = attrs.field(default=1.23, validator=_positive)
    sample_period: float = attrs.field(default=1.0 * MICROSECOND, validator=_positive)
    rtol: float = attrs.field(default=DEFAULT_RTOL, validator=_positive)
    atol: float = attrs.field(default=DEFAULT_ATOL, validator=_positive)

    @property
    def cooling_floor(self):
        return self.initial_temperature


@attrs.frozen
class SimState:
    time: float
    temperature: float
    peak_temperature: float
    initial_atoms: float
    atoms: float
    beta: float


@attrs.frozen
class Probe:
    duration: float = attrs.field(validator=_positive)
    power: float = attrs.field(validator=_non_negative)


@attrs.frozen
class Cool:
    duration: float = attrs.field(validator=_positive)


@attrs.frozen
class Wait:
    duration: float = attrs.field(validator=_positive)


def _segments(instance, attribute, value):
    if not value:
        raise ValueError("a schedule needs at least one segment")
    for segment in value:
        if not isinstance(segment, (Probe, Cool, Wait)):
            raise TypeError(f"unknown schedule segment {segment!r}")


@attrs.frozen
class PulseSchedule:
    segments: tuple = attrs.field(converter=tuple, validator=_segments)

    @property
    def probes(self):
        return [s for s in self.segments if isinstance(s, Probe)]

    def repeated(self, count):
        if count < 1:
            raise ValueError(f"repeat count must be at least 1, got {count}")
        return PulseSchedule(self.segments * count)

    def with_power(self, power):
        return PulseSchedule(
            Probe(s.duration, power) if isinstance(s, Probe) else s for s in self.segments
        )

    def with_duration(self, kind, duration):
        """Replace the duration of every segment of kind; zero drops those segments."""
        segments = [
            s for s in self.segments if not (isinstance(s, kind) and duration == 0)
        ]
        return PulseSchedule(
            attrs.evolve(s, duration=duration) if isinstance(s, kind) else s for s in segments
        )


@attrs.frozen
class TransmissionTrace:
    """Probe-segment samples; probe_time is the stitched axis with cool/wait removed."""

    time: np.ndarray = attrs.field(eq=False)
    probe_time: np.ndarray = attrs.field(eq=False)
    transmission: np.ndarray = attrs.field(eq=False)
    temperature: np.ndarray = attrs.field(eq=False)
    atoms: np.ndarray = attrs.field(eq=False)
    beta: np.ndarray = attrs.field(eq=False)
    pulse: np.ndarray = attrs.field(eq=False)
    final_state: SimState | None = None

    COLUMNS = ("time_s", "probe_time_s", "transmission", "temperature_K", "atoms", "beta")

    @classmethod
    def from_series(cls, probe_time, transmission):
        """Wrap a measured (t, transmission) series; diagnostics are NaN."""
        probe_time = np.asarray(probe_time, dtype=float)
        nan = np.full_like(probe_time, np.nan)
        return cls(
            time=probe_time,
            probe_time=probe_time,
            transmission=np.asarray(transmission, dtype=float),
            temperature=nan,
            atoms=nan,
            beta=nan,
            pulse=np.zeros(len(probe_time), dtype=int),
        )

    @property
    def pulse_count(self):
        return int(self.pulse.max()) + 1 if len(self.pulse) else 0

    def select(self, pulse):
        """One probe pulse, with probe_time restarted at zero."""
        mask = self.pulse == pulse
        start = self.probe_time[mask][0]
        return TransmissionTrace(
            time=self.time[mask],
            probe_time=self.probe_time[mask] - start,
            transmission=self.transmission[mask],
            temperature=self.temperature[mask],
            atoms=self.atoms[mask],
            beta=self.beta[mask],
            pulse=np.zeros(int(mask.sum()), dtype=int),
        )

    def rows(self):
        return np.column_stack(
            (self.time, self.probe_time, self.transmission, self.temperature, self.atoms, self.beta)
        )


def saturation_parameter(power, beta, beta_inf):
    """s = P_in_norm * beta / beta_inf; P_in_norm is normalized to P_sat at T -> infinity."""
    if not beta_inf > 0:
        raise ValueError(f"beta_inf must be strictly positive, got {beta_inf!r}")
    if power < 0:
        raise ValueError(f"probe power must be non-negative, got {power!r}")
    return power * beta / beta_inf


def transmission(beta, atoms):
    """(1 - 2 beta)^(2 N), vectorized over both arguments."""
    beta = np.asarray(beta, dtype=float)
    atoms = np.asarray(atoms, dtype=float)
    if np.any(beta < 0) or np.any(beta >= 0.5):
        raise ValueError("coupling must lie in [0, 0.5)")
    if np.any(atoms < 0):
        raise ValueError("atom number must be non-negative")
    value = np.exp(2.0 * atoms * np.log1p(-2.0 * beta))
    return float(value) if value.ndim == 0 else value


def optical_depth(beta, atoms):
    """-ln of transmission(beta, atoms)."""
    return -2.0 * np.asarray(atoms, dtype=float) * np.log1p(-2.0 * np.asarray(beta, dtype=float))


def double_exp_transmission(od0, gamma, t):
    if od0 < 0 or gamma < 0:
        raise ValueError("OD0 and gamma must be non-negative")
    return np.exp(-od0 * np.exp(-gamma * np.asarray(t, dtype=float)))


def atoms_for_optical_depth(context, od, temperature):
    """N0 such that -2 N0 ln(1 - 2 beta(T)) equals od."""
    return float(od / optical_depth(context.mean_beta(temperature), 1.0))


def _state(context, initial_atoms, time, temperature, peak_temperature):
    return SimState(
        time=time,
        temperature=temperature,
        peak_temperature=peak_temperature,
        initial_atoms=initial_atoms,
        atoms=initial_atoms * context.remaining_fraction(peak_temperature),
        beta=context.mean_beta(temperature),
    )


def initial_state(context, config):
    atoms = config.initial_atoms
    if atoms is None:
        atoms = atoms_for_optical_depth(
            context, config.initial_optical_depth, config.initial_temperature
        )
    temperature = config.initial_temperature
    return _state(context, atoms, 0.0, temperature, temperature)


def instant_optical_depth(context, state, beta_temperature=None):
    """-2 N ln(1 - 2 beta) without probe back-action.

    beta_temperature fixes the coupling at that temperature instead of the
    current one, so the readout only tracks atom loss.
    """
    temperature = state.temperature if beta_temperature is None else beta_temperature
    return float(optical_depth(context.mean_beta(temperature), state.atoms))


def probe_sample_times(duration, period):
    """Local sample instants in [0, duration)."""
    count = max(int(math.ceil(duration / period - 1e-9)), 1)
    return np.arange(count) * period


def _integrate_probe(state, duration, power, context, config, sample_times):
    """Temperature at sample_times and at duration under constant probe power."""
    if power == 0:
        return np.full(len(sample_times), state.temperature), state.temperature

    beta_inf = context.beta_inf

    def rhs(t, y):
        temperature = y[0]
        s = saturation_parameter(power, context.mean_beta(temperature), beta_inf)
        return [heating_rate(s, temperature, context)]

    t_eval = np.append(sample_times, duration)
    solution = solve_ivp(
        rhs,
        (0.0, duration),
        [state.temperature],
        method="RK45",
        t_eval=t_eval,
        rtol=config.rtol,
        atol=config.atol,
        max_step=config.sample_period,
    )
    if not solution.success:
        raise IntegrationError(f"probe integration failed at t = {state.time:.6e} s: {solution.message}")
    temperatures = solution.y[0]
    return temperatures[:-1], float(temperatures[-1])


def step_probe(state, dt, power, context, config):
    """Advance by dt under dT/dt = heating_rate(s(T), T)."""
    if not dt > 0:
        raise ValueError(f"step must be strictly positive, got {dt!r}")
    _, final = _integrate_probe(state, dt, power, context, config, np.empty(0))
    peak = max(state.peak_temperature, final)
    return _state(context, state.initial_atoms, state.time + dt, final, peak)


def step_cool(state, dt, context, config):
    """Exponential relaxation toward the cooling floor; loss is not undone."""
    if not dt > 0:
        raise ValueError(f"step must be strictly positive, got {dt!r}")
    floor = config.cooling_floor
    temperature = floor + (state.temperature - floor) * math.exp(-config.cooling_rate * dt)
    return attrs.evolve(
        state,
        time=state.time + dt,
        temperature=temperature,
        beta=context.mean_beta(temperature),
    )


def step_wait(state, dt, context, config):
    """Linear passive heating."""
    if not dt > 0:
        raise ValueError(f"step must be strictly positive, got {dt!r}")
    temperature = state.temperature + config.passive_rate * dt
    peak = max(state.peak_temperature, temperature)
    return _state(context, state.initial_atoms, state.time + dt, temperature, peak)


def run_schedule(schedule, config, context, state=None):
    """Evolve through schedule, sampling transmission every sample period during probes."""
    state = state or initial_state(context, config)
    chunks = []
    probe_clock = 0.0
    for segment in schedule.segments:
        if isinstance(segment, Probe):
            local = probe_sample_times(segment.duration, config.sample_period)
            temperatures, final = _integrate_probe(
                state, segment.duration, segment.power, context, config, local
            )
            peaks = np.maximum.accumulate(np.maximum(temperatures, state.peak_temperature))
            atoms = state.initial_atoms * -np.expm1(-context.depth / (context.k_B * peaks))
            betas = np.asarray(context.mean_beta(temperatures), dtype=float)
            chunks.append((
                state.time + local,
                probe_clock + local,
                transmission(betas, atoms),
                temperatures,
                atoms,
                betas,
                np.full(len(local), len(chunks)),
            ))
            probe_clock += segment.duration
            peak = max(float(peaks[-1]), final)
            state = _state(
                context, state.initial_atoms, state.time + segment.duration, final, peak
            )
        elif isinstance(segment, Cool):
            state = step_cool(state, segment.duration, context, config)
        else:
            state = step_wait(state, segment.duration, context, config)

    if chunks:
        columns = [np.concatenate(parts) for parts in zip(*chunks)]
    else:
        columns = [np.empty(0)] * 6 + [np.empty(0, dtype=int)]
    logger.debug(
        "Schedule of %d segments: %d samples, final T = %.3e K, N = %.3f",
        len(schedule.segments), len(columns[0]), state.temperature, state.atoms,
    )
    return TransmissionTrace(*columns, final_state=state)


@attrs.frozen
class WaitSweep:
    """Instant-OD readout after each wait, with the state it was read from."""

    waits: np.ndarray = attrs.field(eq=False)
    optical_depth: np.ndarray = attrs.field(eq=False)
    states: tuple = attrs.field(eq=False, repr=False)

    @property
    def atoms(self):
        return np.array([s.atoms for s in self.states])

    @property
    def peak_temperature(self):
        return np.array([s.peak_temperature for s in self.states])

    @property
    def relative(self):
        return self.optical_depth / self.optical_depth[0]


def wait_sweep(context, config, waits, cool_duration, fixed_beta=True):
    """Instant OD after Wait(t) then Cool(cool_duration), for every wait t."""
    readout_temperature = config.initial_temperature if fixed_beta else None
    waits = np.asarray(waits, dtype=float)
    states = []
    for wait in waits:
        state = initial_state(context, config)
        if wait > 0:
            state = step_wait(state, wait, context, config)
        if cool_duration > 0:
            state = step_cool(state, cool_duration, context, config)
        states.append(state)
    values = np.array([instant_optical_depth(context, s, readout_temperature) for s in states])
    return WaitSweep(waits=waits, optical_depth=values, states=tuple(states))


def cooling_recovery_curve(context, config, probe, cool_durations):
    """Delta OD_cool: OD at the start of the next probe minus OD at the end of the first."""
    heated = step_probe(initial_state(context, config), probe.duration, probe.power, context, config)
    heated_od = instant_optical_depth(context, heated)
    values = []
    for duration in cool_durations:
        cooled = step_cool(heated, duration, context, config) if duration > 0 else heated
        values.append(instant_optical_depth(context, cooled) - heated_od)
    return np.array(values)


def implied_cooling_rate(cooling_rate, start_temperature, floor):
    """Average K/s removed during the first 1/kappa of the relaxation."""
    return -math.expm1(-1.0) * cooling_rate * (start_temperature - floor)
