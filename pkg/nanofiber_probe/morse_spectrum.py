"""
Ground-state Morse potential, excited-state repulsive potential and the
bound states of the radial motion.

Analytic eigenfunctions use the associated-Laguerre construction with
lambda_M = sqrt(2 m D) / (a hbar). The Laguerre recurrence is evaluated in
sign/log-magnitude form because plain factorials overflow near n = 61.
"""
import logging
import math

import attrs
import numpy as np
from scipy.integrate import simpson
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from nanofiber_probe.constants import CONSTANTS, PhysicalConstants
from nanofiber_probe.errors import GridError, NoBoundStatesError, QuadratureError

logger = logging.getLogger(__name__)

# Quadrature window in units of 1/a around the minimum.
QUADRATURE_INNER = 5.0
QUADRATURE_OUTER = 40.0
QUADRATURE_RTOL = 1e-8
_FIRST_LEVEL = 12
_LAST_LEVEL = 17

MIN_ORACLE_POINTS = 2000
DEFAULT_ORACLE_STATES = 64


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError(f"{attribute.name} must be strictly positive, got {value!r}")


def _non_negative(instance, attribute, value):
    if value < 0:
        raise ValueError(f"{attribute.name} must be non-negative, got {value!r}")


@attrs.frozen
class MorsePotential:
    """U(d) = D [exp(-2a(d - d0)) - 2 exp(-a(d - d0))], SI units."""

    depth: float = attrs.field(validator=_positive)
    stiffness: float = attrs.field(validator=_positive)
    position: float = attrs.field(validator=_positive)

    def energy(self, d):
        return morse_energy(self, d)

    def force(self, d):
        x = self.stiffness * (np.asarray(d, dtype=float) - self.position)
        return 2.0 * self.depth * self.stiffness * (np.exp(-2.0 * x) - np.exp(-x))


@attrs.frozen
class RepulsivePotential:
    """U_e(d) = A exp(-b(d - d0)); A = 0 is a flat excited state."""

    amplitude: float = attrs.field(validator=_non_negative)
    decay: float = attrs.field(validator=_positive)
    position: float = attrs.field(validator=_positive)

    def energy(self, d):
        return repulsive_energy(self, d)

    def force(self, d):
        y = np.asarray(d, dtype=float) - self.position
        return self.amplitude * self.decay * np.exp(-self.decay * y)


def morse_energy(potential, d):
    x = potential.stiffness * (np.asarray(d, dtype=float) - potential.position)
    return potential.depth * (np.exp(-2.0 * x) - 2.0 * np.exp(-x))


def repulsive_energy(potential, d):
    y = np.asarray(d, dtype=float) - potential.position
    return potential.amplitude * np.exp(-potential.decay * y)


def trap_frequency(potential, mass):
    """Harmonic angular frequency at the minimum, Omega = a sqrt(2 D / m)."""
    if not mass > 0:
        raise ValueError(f"mass must be strictly positive, got {mass!r}")
    return potential.stiffness * math.sqrt(2.0 * potential.depth / mass)


def morse_lambda(potential, mass, constants=CONSTANTS):
    return math.sqrt(2.0 * mass * potential.depth) / (potential.stiffness * constants.hbar)


def bound_state_count(potential, mass, constants=CONSTANTS):
    """Number of levels with n + 1/2 < lambda_M (strictly negative energy)."""
    lam = morse_lambda(potential, mass, constants)
    return max(int(math.ceil(lam - 0.5)), 0)


def _log_laguerre(n, alpha, z):
    """Generalized Laguerre L_n^alpha(z) as (sign, log|L|).

    The three-term recurrence is rescaled after every step so that values of
    order z**n / n! never materialize.
    """
    if n == 0:
        return np.ones_like(z), np.zeros_like(z)
    log_scale = np.zeros_like(z)
    previous = np.ones_like(z)
    current = 1.0 + alpha - z
    for k in range(1, n):
        following = ((2 * k + 1 + alpha - z) * current - (k + alpha) * previous) / (k + 1)
        previous, current = current, following
        scale = np.maximum(np.abs(previous), np.abs(current))
        scale = np.where(scale > 0.0, scale, 1.0)
        previous = previous / scale
        current = current / scale
        log_scale += np.log(scale)
    with np.errstate(divide="ignore"):
        return np.sign(current), log_scale + np.log(np.abs(current))


def morse_wavefunctions(potential, lam, states, d):
    """Rows of Psi_n(d) for every n in states, normalized over d."""
    d = np.asarray(d, dtype=float)
    x = potential.stiffness * (d - potential.position)
    log_z = math.log(2.0 * lam) - x
    z = np.exp(log_z)
    rows = np.empty((len(states), d.size))
    for row, n in enumerate(states):
        alpha = 2.0 * lam - 2.0 * n - 1.0
        log_norm = 0.5 * (
            math.log(potential.stiffness * alpha) + gammaln(n + 1) - gammaln(2.0 * lam - n)
        )
        sign, log_laguerre = _log_laguerre(n, alpha, z)
        log_magnitude = log_norm + (lam - n - 0.5) * log_z - 0.5 * z + log_laguerre
        rows[row] = sign * np.exp(log_magnitude)
    return rows.reshape((len(states),) + d.shape)


def harmonic_wavefunctions(omega, mass, center, n_states, d, constants=CONSTANTS):
    """Hermite functions of the oscillator with the same Omega, via the stable recurrence."""
    length = math.sqrt(constants.hbar / (mass * omega))
    xi = (np.asarray(d, dtype=float) - center) / length
    rows = np.empty((n_states,) + xi.shape)
    rows[0] = np.pi**-0.25 * np.exp(-0.5 * xi**2)
    if n_states > 1:
        rows[1] = math.sqrt(2.0) * xi * rows[0]
    for k in range(1, n_states - 1):
        rows[k + 1] = math.sqrt(2.0 / (k + 1)) * xi * rows[k] - math.sqrt(k / (k + 1)) * rows[k - 1]
    return rows / math.sqrt(length)


def integrate_states(density, f, lower, upper, rtol=QUADRATURE_RTOL, cache=None):
    """Composite Simpson of density_n(d) * f(d) over [lower, upper] for all n.

    The grid is halved until two successive levels agree to rtol relative to
    the largest overlap. density(d) returns an (n_states, points) array.
    """
    previous = None
    achieved = math.inf
    for level in range(_FIRST_LEVEL, _LAST_LEVEL + 1):
        if cache is not None and level in cache:
            d, weights = cache[level]
        else:
            d = np.linspace(lower, upper, 2**level + 1)
            weights = density(d)
            if cache is not None:
                cache[level] = (d, weights)
        values = simpson(weights * np.broadcast_to(f(d), d.shape), x=d, axis=-1)
        if previous is not None:
            scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
            achieved = float(np.max(np.abs(values - previous))) / scale
            if achieved <= rtol:
                return values
        previous = values
    raise QuadratureError("overlap quadrature did not converge", achieved)


@attrs.frozen
class BoundStateTable:
    """Bound states of a MorsePotential; immutable once built."""

    potential: MorsePotential
    mass: float
    constants: PhysicalConstants
    morse_lambda: float
    trap_frequency: float
    n_max: int
    energies: np.ndarray = attrs.field(eq=False, repr=False)
    _densities: dict = attrs.field(init=False, factory=dict, eq=False, repr=False)
    mean_distances: np.ndarray = attrs.field(init=False, eq=False, repr=False)

    @mean_distances.default
    def _mean_distances(self):
        return self.integrate(lambda d: d)

    @property
    def state_count(self):
        return self.n_max + 1

    @property
    def quadrature_window(self):
        a = self.potential.stiffness
        d0 = self.potential.position
        return d0 - QUADRATURE_INNER / a, d0 + QUADRATURE_OUTER / a

    def wavefunctions(self, d):
        return morse_wavefunctions(self.potential, self.morse_lambda, range(self.state_count), d)

    def integrate(self, f, rtol=QUADRATURE_RTOL):
        lower, upper = self.quadrature_window
        return integrate_states(
            lambda d: self.wavefunctions(d) ** 2, f, lower, upper, rtol, cache=self._densities
        )


def build_bound_states(potential, mass, constants=CONSTANTS):
    lam = morse_lambda(potential, mass, constants)
    count = bound_state_count(potential, mass, constants)
    if count == 0:
        raise NoBoundStatesError(
            f"potential supports no bound state: lambda_M = {lam:.4f} must exceed 1/2"
        )
    omega = trap_frequency(potential, mass)
    quantum = constants.hbar * omega
    half = np.arange(count) + 0.5
    energies = -potential.depth + quantum * half - quantum**2 * half**2 / (4.0 * potential.depth)
    energies.setflags(write=False)
    logger.info(
        "Built %d bound states (lambda_M = %.4f, Omega/2pi = %.2f kHz)",
        count, lam, omega / (2.0 * math.pi) / 1e3,
    )
    return BoundStateTable(
        potential=potential,
        mass=mass,
        constants=constants,
        morse_lambda=lam,
        trap_frequency=omega,
        n_max=count - 1,
        energies=energies,
    )


def wavefunction(table, n, d):
    if not 0 <= n <= table.n_max:
        raise ValueError(f"state index {n} outside [0, {table.n_max}]")
    return morse_wavefunctions(table.potential, table.morse_lambda, [n], d)[0]


def classical_orbit(potential, mass, energy, phase):
    """Closed-form Morse trajectory at energy -D <= E < 0 as (d, p) at orbit phase.

    With eps = -E/D and c = sqrt(1 - eps), exp(-a(d - d0)) = eps / (1 - c cos phase)
    and the phase advances at Omega sqrt(eps), so a uniform phase is a
    uniform-in-time sample of the orbit.
    """
    eps = -np.asarray(energy, dtype=float) / potential.depth
    if np.any(eps <= 0.0) or np.any(eps > 1.0 + 1e-12):
        raise ValueError("orbit energy must lie in [-D, 0)")
    eps = np.minimum(eps, 1.0)
    c = np.sqrt(1.0 - eps)
    q = 1.0 - c * np.cos(phase)
    d = potential.position + np.log(q / eps) / potential.stiffness
    omega = trap_frequency(potential, mass) * np.sqrt(eps)
    p = mass * c * omega * np.sin(phase) / (potential.stiffness * q)
    return d, p


def orbit_turning_points(potential, energy):
    eps = -energy / potential.depth
    c = math.sqrt(max(1.0 - eps, 0.0))
    a = potential.stiffness
    return (
        potential.position + math.log((1.0 - c) / eps) / a,
        potential.position + math.log((1.0 + c) / eps) / a,
    )


@attrs.frozen
class OracleGrid:
    d_min: float
    d_max: float
    points: int


@attrs.frozen
class OracleResult:
    positions: np.ndarray = attrs.field(eq=False, repr=False)
    energies: np.ndarray = attrs.field(eq=False)
    vectors: np.ndarray = attrs.field(eq=False, repr=False)

    @property
    def bound(self):
        return self.energies < 0.0


def diagonalize_oracle(potential, mass, grid, stiffness, max_states=DEFAULT_ORACLE_STATES,
                       constants=CONSTANTS):
    """Lowest eigenpairs of -hbar^2/2m d^2/dd^2 + U(d) by second-order finite differences.

    potential is any vectorized callable U(d) in J. Eigenvectors are columns,
    normalized so that sum(psi**2) * dx = 1.
    """
    if grid.points < MIN_ORACLE_POINTS:
        raise GridError(f"oracle needs at least {MIN_ORACLE_POINTS} points, got {grid.points}")
    d = np.linspace(grid.d_min, grid.d_max, grid.points)
    dx = d[1] - d[0]
    if dx > 1.0 / (10.0 * stiffness):
        raise GridError(f"grid spacing {dx:.3e} m exceeds 1/(10 a) = {1.0 / (10.0 * stiffness):.3e} m")

    kinetic = constants.hbar**2 / (2.0 * mass * dx**2)
    diagonal = 2.0 * kinetic + np.asarray(potential(d), dtype=float)
    off_diagonal = np.full(grid.points - 1, -kinetic)
    count = min(max_states, grid.points)
    energies, vectors = eigh_tridiagonal(
        diagonal, off_diagonal, select="i", select_range=(0, count - 1)
    )
    vectors = vectors / np.sqrt(np.sum(vectors**2, axis=0) * dx)
    logger.debug("Oracle: %d points, %d eigenpairs, %d bound", grid.points, count, int(np.sum(energies < 0)))
    return OracleResult(positions=d, energies=energies, vectors=vectors)
