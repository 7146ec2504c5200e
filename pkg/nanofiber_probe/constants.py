"""
Physical constants and cesium D2-line data.

Everything inside the library is SI. Temperatures in K stand in for energies
only at the input/output boundary, converted with k_B.
"""
import math

import attrs
import scipy.constants as sc

CESIUM_MASS_U = 132.905451933
CESIUM_LINEWIDTH_HZ = 5.22e6
CESIUM_WAVELENGTH_M = 852e-9

MICROKELVIN = 1e-6
NANOMETER = 1e-9
MICROSECOND = 1e-6
MILLISECOND = 1e-3
PICOWATT = 1e-12


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError(f"{attribute.name} must be strictly positive, got {value!r}")


@attrs.frozen
class PhysicalConstants:
    hbar: float = attrs.field(default=sc.hbar, validator=_positive)
    h: float = attrs.field(default=sc.h, validator=_positive)
    k_B: float = attrs.field(default=sc.k, validator=_positive)
    c: float = attrs.field(default=sc.c, validator=_positive)

    def __attrs_post_init__(self):
        if not math.isclose(self.h, 2.0 * math.pi * self.hbar, rel_tol=1e-12):
            raise ValueError("h and hbar are inconsistent: h must equal 2*pi*hbar")


CONSTANTS = PhysicalConstants()


@attrs.frozen
class AtomSpecies:
    """Effective two-level atom. Derived fields are filled from the raw ones."""

    mass: float = attrs.field(validator=_positive)
    linewidth: float = attrs.field(validator=_positive)
    wavelength: float = attrs.field(validator=_positive)
    constants: PhysicalConstants = attrs.field(factory=PhysicalConstants)
    wavenumber: float = attrs.field(init=False)
    recoil_temperature: float = attrs.field(init=False)
    single_atom_power: float = attrs.field(init=False)

    @wavenumber.default
    def _wavenumber(self):
        return 2.0 * math.pi / self.wavelength

    @recoil_temperature.default
    def _recoil_temperature(self):
        hbar_k = self.constants.hbar * self.wavenumber
        return hbar_k**2 / (2.0 * self.mass * self.constants.k_B)

    @single_atom_power.default
    def _single_atom_power(self):
        # P_Cs = h c Gamma / (2 lambda), the power scattered by one saturated atom
        return self.constants.h * self.constants.c * self.linewidth / (2.0 * self.wavelength)


def cesium_defaults(constants=CONSTANTS):
    return AtomSpecies(
        mass=CESIUM_MASS_U * sc.atomic_mass,
        linewidth=2.0 * math.pi * CESIUM_LINEWIDTH_HZ,
        wavelength=CESIUM_WAVELENGTH_M,
        constants=constants,
    )


def temperature_to_energy(temperature, constants=CONSTANTS):
    return temperature * constants.k_B


def energy_to_temperature(energy, constants=CONSTANTS):
    return energy / constants.k_B


def saturation_power(species, beta):
    """P_sat = h c Gamma / (8 beta lambda) for a guided probe with coupling beta."""
    if not 0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 0.5), got {beta!r}")
    c = species.constants
    return c.h * c.c * species.linewidth / (8.0 * beta * species.wavelength)


def atom_number_from_absorption(max_absorbed_power, species):
    return max_absorbed_power / species.single_atom_power


def optical_depth_weak(beta, atom_number):
    """OD = 4 beta N, valid for beta << 1."""
    return 4.0 * beta * atom_number


def heating_phonons_per_ms(rate, trap_frequency, constants=CONSTANTS):
    """Convert a heating rate in K/s into motional quanta per millisecond."""
    quantum = constants.hbar * trap_frequency
    return rate * constants.k_B / quantum * MILLISECOND
