"""
Distance-dependent coupling beta(d), per-state overlaps, thermal occupations
and the ensemble averages built from them.
"""
import logging
import math

import attrs
import numpy as np
from scipy.optimize import brentq

from nanofiber_probe.constants import CONSTANTS, MICROKELVIN, NANOMETER
from nanofiber_probe.errors import CalibrationError
from nanofiber_probe.morse_spectrum import harmonic_wavefunctions, integrate_states

logger = logging.getLogger(__name__)

# Below this the Boltzmann weights are indistinguishable from the ground state.
TEMPERATURE_FLOOR = 10e-9

DECAY_LENGTH_BOX = (10 * NANOMETER, 1000 * NANOMETER)
AMPLITUDE_BOX = (1e-4, 0.4)
CROSS_CHECK_TEMPERATURE = 100 * MICROKELVIN
SCAN_POINTS = 41


def _coupling_amplitude(instance, attribute, value):
    if not 0.0 < value < 0.5:
        raise ValueError(f"{attribute.name} must lie in (0, 0.5), got {value!r}")


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError(f"{attribute.name} must be strictly positive, got {value!r}")


@attrs.frozen
class CouplingProfile:
    """beta(d) = amplitude * exp(-(d - position) / decay_length)."""

    amplitude: float = attrs.field(validator=_coupling_amplitude)
    decay_length: float = attrs.field(validator=_positive)
    position: float = attrs.field(validator=_positive)

    def __call__(self, d):
        return beta_of_distance(self, d)


@attrs.frozen
class ThermalOccupation:
    temperature: float
    weights: np.ndarray = attrs.field(eq=False)


@attrs.frozen
class PerStateCoupling:
    beta: np.ndarray = attrs.field(eq=False)
    detuning: np.ndarray = attrs.field(eq=False)


@attrs.frozen
class CouplingCalibration:
    profile: CouplingProfile
    residual: float
    cross_check: float
    per_state: np.ndarray = attrs.field(eq=False, repr=False)


def beta_of_distance(profile, d):
    """Vectorized; the quadrature window may extend below d = 0 where the states vanish."""
    y = np.asarray(d, dtype=float) - profile.position
    return profile.amplitude * np.exp(-y / profile.decay_length)


def per_state_overlap(table, f):
    """Integral of |Psi_n(d)|^2 f(d) over the quadrature window, for every bound state."""
    return table.integrate(f)


def splitting_offset(table, excited):
    """Ground/excited splitting at the potential minimum, U_e(d0) - U_g(d0)."""
    d0 = table.potential.position
    return float(excited.energy(d0) - table.potential.energy(d0))


def per_state_coupling(table, profile, excited):
    hbar = table.constants.hbar
    offset = splitting_offset(table, excited)
    beta = per_state_overlap(table, profile)
    detuning = per_state_overlap(
        table, lambda d: (excited.energy(d) - table.potential.energy(d) - offset) / hbar
    )
    return PerStateCoupling(beta=beta, detuning=detuning)


def occupation(table, temperature):
    """Boltzmann weights truncated at n_max; temperature = inf gives equal weights."""
    if not temperature > 0:
        raise ValueError(f"temperature must be strictly positive, got {temperature!r}")
    count = table.state_count
    if math.isinf(temperature):
        return ThermalOccupation(temperature=temperature, weights=np.full(count, 1.0 / count))
    clamped = max(temperature, TEMPERATURE_FLOOR)
    exponent = -(table.energies - table.energies[0]) / (table.constants.k_B * clamped)
    weights = np.exp(exponent - exponent.max())
    return ThermalOccupation(temperature=temperature, weights=weights / weights.sum())


def _check_matching(values, occ):
    if len(values) != len(occ.weights):
        raise ValueError(
            f"per-state table has {len(values)} entries, occupation has {len(occ.weights)}"
        )


def mean_beta(per_state, occ):
    beta = per_state.beta if isinstance(per_state, PerStateCoupling) else np.asarray(per_state)
    _check_matching(beta, occ)
    return float(np.dot(beta, occ.weights))


def mean_detuning(per_state, occ):
    detuning = per_state.detuning if isinstance(per_state, PerStateCoupling) else np.asarray(per_state)
    _check_matching(detuning, occ)
    return float(np.dot(detuning, occ.weights))


def remaining_fraction(depth, temperature, k_B=CONSTANTS.k_B):
    """N/N0 = 1 - exp(-D / (k_B T)), the part of the distribution below the trap depth."""
    if not temperature > 0 or not depth > 0:
        raise ValueError("depth and temperature must be strictly positive")
    return float(-np.expm1(-depth / (k_B * temperature)))


def harmonic_comparison(table, profile):
    """beta_n averaged over harmonic-oscillator states of the same Omega."""
    lower, upper = table.quadrature_window
    densities = lambda d: harmonic_wavefunctions(
        table.trap_frequency, table.mass, table.potential.position, table.state_count, d,
        table.constants,
    ) ** 2
    return integrate_states(densities, profile, lower, upper)


def temperature_sweep(table, per_state, temperatures):
    """Rows (T, mean beta, N/N0, mean detuning) over the given temperatures."""
    rows = []
    for temperature in temperatures:
        occ = occupation(table, temperature)
        rows.append((
            temperature,
            mean_beta(per_state, occ),
            remaining_fraction(table.potential.depth, temperature, table.constants.k_B),
            mean_detuning(per_state, occ),
        ))
    return np.array(rows)


def calibrate_coupling(table, beta_hot, beta_cold, cold_temperature):
    """Solve for (amplitude, decay length) so that mean beta hits both targets.

    beta_hot is the T -> infinity value, beta_cold the value at cold_temperature.
    mean beta is linear in the amplitude, so the inner solve is closed-form and
    the outer bracketing search only has to match the ratio beta_hot/beta_cold.
    """
    if not 0.0 < beta_hot < beta_cold < 0.5:
        raise ValueError(
            f"targets must satisfy 0 < beta_hot < beta_cold < 0.5, got {beta_hot!r}, {beta_cold!r}"
        )
    d0 = table.potential.position
    hot = occupation(table, math.inf)
    cold = occupation(table, cold_temperature)

    def shape(log_decay_length):
        length = math.exp(log_decay_length)
        return per_state_overlap(table, lambda d: np.exp(-(d - d0) / length))

    def ratio_mismatch(log_decay_length):
        overlaps = shape(log_decay_length)
        return np.dot(overlaps, hot.weights) / np.dot(overlaps, cold.weights) - beta_hot / beta_cold

    # The hot/cold ratio has two branches (decay lengths near 1/a and 1/2a).
    # Scan the box and refine the bracket with the longest decay length.
    grid = np.linspace(*(math.log(v) for v in DECAY_LENGTH_BOX), SCAN_POINTS)
    mismatch = np.array([ratio_mismatch(v) for v in grid])
    brackets = np.flatnonzero(np.sign(mismatch[:-1]) != np.sign(mismatch[1:]))
    if brackets.size == 0:
        raise CalibrationError(
            "no decay length in the search box reproduces the target ratio",
            {
                "target_ratio": beta_hot / beta_cold,
                "min_ratio": float(mismatch.min() + beta_hot / beta_cold),
                "max_ratio": float(mismatch.max() + beta_hot / beta_cold),
            },
        )
    start = brackets[-1]
    log_length = brentq(
        ratio_mismatch, grid[start], grid[start + 1], xtol=1e-14, rtol=1e-14, maxiter=200
    )
    overlaps = shape(log_length)
    amplitude = beta_cold / float(np.dot(overlaps, cold.weights))
    if not AMPLITUDE_BOX[0] < amplitude < AMPLITUDE_BOX[1]:
        raise CalibrationError(
            "calibrated amplitude leaves the search box",
            {"amplitude": amplitude, "decay_length_m": math.exp(log_length)},
        )

    profile = CouplingProfile(amplitude=amplitude, decay_length=math.exp(log_length), position=d0)
    beta_n = amplitude * overlaps
    recovered_hot = float(np.dot(beta_n, hot.weights))
    recovered_cold = float(np.dot(beta_n, cold.weights))
    residual = max(abs(recovered_hot / beta_hot - 1.0), abs(recovered_cold / beta_cold - 1.0))
    cross_check = float(np.dot(beta_n, occupation(table, CROSS_CHECK_TEMPERATURE).weights))
    logger.info(
        "Calibrated coupling: beta_ref = %.5f, decay length = %.1f nm, residual = %.2e, "
        "beta(100 uK) = %.4f",
        amplitude, profile.decay_length / NANOMETER, residual, cross_check,
    )
    return CouplingCalibration(profile=profile, residual=residual, cross_check=cross_check, per_state=beta_n)
