"""
Scattering rate and per-scatter heating.

Each scattered photon deposits one recoil plus the work done by the
excited-state potential while the atom dwells there. The dwell heating is
estimated by Monte Carlo: start on the classical ground-state orbit of a
bound state, evolve in the excited potential for an Exp(Gamma) dwell time
and measure the ground-state energy on return.
"""
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import attrs
import numpy as np

from nanofiber_probe.constants import CONSTANTS
from nanofiber_probe.morse_spectrum import classical_orbit, orbit_turning_points

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10_000
DEFAULT_SAMPLES = 100_000
BLOCK_SIZE = 4096
# Leapfrog steps per harmonic period and dwell truncation in units of 1/Gamma.
STEPS_PER_PERIOD = 50
DWELL_CUTOFF = 100.0

TIME_WEIGHTED = "time_weighted"
UNIFORM_POSITION = "uniform_position"
SAMPLING_MODES = (TIME_WEIGHTED, UNIFORM_POSITION)


@attrs.frozen
class ScatterSample:
    """A batch of scattering events for one bound state, one entry per sample."""

    position: np.ndarray = attrs.field(eq=False)
    momentum: np.ndarray = attrs.field(eq=False)
    dwell: np.ndarray = attrs.field(eq=False)
    gain: np.ndarray = attrs.field(eq=False)


@attrs.frozen
class StateHeating:
    mean: float
    standard_error: float
    variance: float
    samples: int


@attrs.frozen
class HeatingTable:
    """Mean dwell heating per bound state, in K, with its Monte-Carlo error."""

    per_state: np.ndarray = attrs.field(eq=False)
    standard_errors: np.ndarray = attrs.field(eq=False)
    recoil_temperature: float
    samples: int
    seed: int
    sampling: str = TIME_WEIGHTED

    def per_temperature(self, occ):
        return mean_heating_per_scatter(self.per_state, self.recoil_temperature, occ)


def scattering_rate(saturation, detuning, linewidth):
    """R_sc = Gamma/2 * s / (1 + s + (2 delta / Gamma)^2)."""
    if np.any(np.asarray(saturation) < 0):
        raise ValueError("saturation parameter must be non-negative")
    return 0.5 * linewidth * saturation / (1.0 + saturation + (2.0 * detuning / linewidth) ** 2)


def state_rng(seed, state_index, block):
    """Independent stream for one block of samples of one state."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(state_index, block)))


def _initial_conditions(rng, count, energy, ground, mass, sampling):
    if sampling == TIME_WEIGHTED:
        phase = rng.uniform(0.0, 2.0 * math.pi, count)
        return classical_orbit(ground, mass, energy, phase)
    inner, outer = orbit_turning_points(ground, energy)
    d = rng.uniform(inner, outer, count)
    kinetic = np.maximum(energy - ground.energy(d), 0.0)
    direction = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    return d, direction * np.sqrt(2.0 * mass * kinetic)


def propagate_dwell(position, momentum, dwell, excited, mass, max_step):
    """Kick-drift-kick leapfrog in the excited potential, each sample for its own dwell."""
    steps = np.maximum(np.ceil(dwell / max_step), 1.0)
    dt = dwell / steps
    d = np.array(position, dtype=float)
    p = np.array(momentum, dtype=float)
    force = excited.force(d)
    for k in range(int(steps.max())):
        h = np.where(steps > k, dt, 0.0)
        p = p + 0.5 * h * force
        d = d + h * p / mass
        force = excited.force(d)
        p = p + 0.5 * h * force
    return d, p


def draw_scatter_samples(energy, ground, excited, mass, linewidth, samples, seed, state_index=0,
                         sampling=TIME_WEIGHTED, trap_frequency=None):
    if samples < MIN_SAMPLES:
        raise ValueError(f"Monte-Carlo budget {samples} is below the minimum of {MIN_SAMPLES}")
    if sampling not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling mode {sampling!r}; expected one of {SAMPLING_MODES}")
    omega = trap_frequency or ground.stiffness * math.sqrt(2.0 * ground.depth / mass)
    max_step = 2.0 * math.pi / omega / STEPS_PER_PERIOD

    positions, momenta, dwells, gains = [], [], [], []
    for block, start in enumerate(range(0, samples, BLOCK_SIZE)):
        count = min(BLOCK_SIZE, samples - start)
        rng = state_rng(seed, state_index, block)
        d, p = _initial_conditions(rng, count, energy, ground, mass, sampling)
        dwell = np.minimum(rng.exponential(1.0 / linewidth, count), DWELL_CUTOFF / linewidth)
        before = p**2 / (2.0 * mass) + ground.energy(d)
        d_after, p_after = propagate_dwell(d, p, dwell, excited, mass, max_step)
        after = p_after**2 / (2.0 * mass) + ground.energy(d_after)
        positions.append(d)
        momenta.append(p)
        dwells.append(dwell)
        gains.append(after - before)
    return ScatterSample(
        position=np.concatenate(positions),
        momentum=np.concatenate(momenta),
        dwell=np.concatenate(dwells),
        gain=np.concatenate(gains),
    )


def excited_dwell_heating(energy, ground, excited, mass, linewidth, samples, seed, state_index=0,
                          sampling=TIME_WEIGHTED, k_B=None):
    """Mean dwell heating in K for one bound-state energy, with its standard error."""
    k_B = k_B or CONSTANTS.k_B
    batch = draw_scatter_samples(
        energy, ground, excited, mass, linewidth, samples, seed, state_index, sampling
    )
    gain = batch.gain / k_B
    variance = float(np.var(gain, ddof=1))
    return StateHeating(
        mean=float(np.mean(gain)),
        standard_error=math.sqrt(variance / samples),
        variance=variance,
        samples=samples,
    )


def build_heating_table(table, excited, species, samples=DEFAULT_SAMPLES, seed=0,
                        sampling=TIME_WEIGHTED, threads=1):
    """Dwell heating for every bound state of table; independent of the thread count."""
    logger.info(
        "Monte-Carlo heating: %d states x %d samples (seed %d, %s, %d threads)",
        table.state_count, samples, seed, sampling, threads,
    )

    def run(index):
        return excited_dwell_heating(
            table.energies[index], table.potential, excited, table.mass, species.linewidth,
            samples, seed, index, sampling, table.constants.k_B,
        )

    indices = range(table.state_count)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, indices))
    else:
        results = [run(index) for index in indices]
    return HeatingTable(
        per_state=np.array([r.mean for r in results]),
        standard_errors=np.array([r.standard_error for r in results]),
        recoil_temperature=species.recoil_temperature,
        samples=samples,
        seed=seed,
        sampling=sampling,
    )


def mean_heating_per_scatter(per_state, recoil_temperature, occ):
    """Delta T(T) = sum_n (Delta T_n + T_rec) P_n."""
    per_state = np.asarray(per_state, dtype=float)
    if len(per_state) != len(occ.weights):
        raise ValueError(
            f"heating table has {len(per_state)} states, occupation has {len(occ.weights)}"
        )
    return float(np.dot(per_state + recoil_temperature, occ.weights))


def recoil_heating_rate(saturation, species, detuning=0.0):
    """Heating from photon recoil alone, in K/s."""
    return scattering_rate(saturation, detuning, species.linewidth) * species.recoil_temperature


def heating_rate(saturation, temperature, context, recoil_only=False):
    """dT/dt = R_sc(s, delta(T)) * Delta T(T) in K/s.

    context provides species, detuning(T) and heating_per_scatter(T).
    recoil_only replaces Delta T(T) by the recoil temperature and delta by 0.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be strictly positive, got {temperature!r}")
    if saturation > 1.0:
        warnings.warn(
            f"saturation parameter {saturation:.3g} > 1: excited-state depletion is not modelled",
            RuntimeWarning,
            stacklevel=2,
        )
    if recoil_only:
        return recoil_heating_rate(saturation, context.species)
    rate = scattering_rate(saturation, context.detuning(temperature), context.species.linewidth)
    return rate * context.heating_per_scatter(temperature)
