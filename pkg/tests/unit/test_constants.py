import math

import pytest

from nanofiber_probe.constants import (
    PICOWATT,
    PhysicalConstants,
    atom_number_from_absorption,
    energy_to_temperature,
    heating_phonons_per_ms,
    optical_depth_weak,
    saturation_power,
    temperature_to_energy,
)


def test_single_atom_power(species):
    assert species.single_atom_power == pytest.approx(3.8 * PICOWATT, rel=0.02)


def test_saturation_power_at_measured_coupling(species):
    assert saturation_power(species, 0.011) == pytest.approx(86.9 * PICOWATT, rel=0.005)


def test_saturation_power_rejects_unphysical_coupling(species):
    for beta in (0.0, 0.5, -0.1):
        with pytest.raises(ValueError):
            saturation_power(species, beta)


def test_atom_number_and_optical_depth(species):
    atoms = atom_number_from_absorption(112 * PICOWATT, species)
    assert atoms == pytest.approx(29.3, abs=0.1)
    assert optical_depth_weak(0.011, 29) == pytest.approx(1.276)


def test_recoil_temperature(species):
    assert species.recoil_temperature == pytest.approx(99.25e-9, rel=2e-3)


def test_heating_rate_in_phonons(table):
    phonons = heating_phonons_per_ms(3e-3, table.trap_frequency, table.constants)
    assert phonons == pytest.approx(0.39, abs=0.01)


def test_energy_temperature_conversion():
    energy = temperature_to_energy(1e-6)
    assert energy_to_temperature(energy) == pytest.approx(1e-6)


def test_inconsistent_planck_constants_are_rejected():
    with pytest.raises(ValueError):
        PhysicalConstants(hbar=1.0, h=1.0)
    constants = PhysicalConstants(hbar=1.0, h=2.0 * math.pi)
    assert constants.h == pytest.approx(2.0 * math.pi)
