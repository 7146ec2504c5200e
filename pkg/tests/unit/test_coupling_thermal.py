import math

import numpy as np
import pytest

from nanofiber_probe.constants import MICROKELVIN
from nanofiber_probe.coupling_thermal import (
    CouplingProfile,
    PerStateCoupling,
    beta_of_distance,
    calibrate_coupling,
    harmonic_comparison,
    mean_beta,
    mean_detuning,
    occupation,
    remaining_fraction,
    temperature_sweep,
)
from nanofiber_probe.errors import CalibrationError


def test_occupation_limits(table):
    hot = occupation(table, math.inf)
    assert np.allclose(hot.weights, 1.0 / table.state_count)
    cold = occupation(table, 10e-9)
    assert cold.weights[0] > 0.999
    warm = occupation(table, 100 * MICROKELVIN)
    assert warm.weights.sum() == pytest.approx(1.0)
    assert np.all(np.diff(warm.weights) < 0)


@pytest.mark.parametrize("temperature", [0.0, -1e-6])
def test_occupation_rejects_non_positive_temperature(table, temperature):
    with pytest.raises(ValueError):
        occupation(table, temperature)


def test_remaining_fraction_is_one_half_at_depth_over_ln2(table):
    depth = table.potential.depth
    k_B = table.constants.k_B
    assert remaining_fraction(depth, depth / (k_B * math.log(2.0)), k_B) == pytest.approx(0.5)
    assert remaining_fraction(depth, 1e-6, k_B) == pytest.approx(1.0)


def test_profile_reference_value(ground):
    profile = CouplingProfile(amplitude=0.02, decay_length=165e-9, position=ground.position)
    assert beta_of_distance(profile, ground.position) == pytest.approx(0.02)
    assert profile(ground.position + 165e-9) == pytest.approx(0.02 / math.e)
    with pytest.raises(ValueError):
        CouplingProfile(amplitude=0.5, decay_length=165e-9, position=ground.position)


def test_calibration_reproduces_both_targets(table, calibration):
    assert calibration.residual < 1e-6
    hot = mean_beta(calibration.per_state, occupation(table, math.inf))
    cold = mean_beta(calibration.per_state, occupation(table, 1.0 * MICROKELVIN))
    assert hot == pytest.approx(0.012, rel=0.1)
    assert cold == pytest.approx(0.024, rel=1e-6)
    assert 10e-9 < calibration.profile.decay_length < 1000e-9


def test_calibration_cross_check_at_100uK(calibration):
    assert 0.015 <= calibration.cross_check <= 0.019


def test_calibration_rejects_invalid_targets(table):
    with pytest.raises(ValueError):
        calibrate_coupling(table, 0.024, 0.012, 1.0 * MICROKELVIN)
    with pytest.raises(ValueError):
        calibrate_coupling(table, 0.012, 0.6, 1.0 * MICROKELVIN)


def test_infeasible_calibration_reports_diagnostics(table):
    with pytest.raises(CalibrationError) as excinfo:
        calibrate_coupling(table, 0.001, 0.4, 1.0 * MICROKELVIN)
    assert "target_ratio" in excinfo.value.diagnostics


def test_mean_beta_falls_with_temperature(table, per_state):
    temperatures = np.append(np.logspace(-6, -2, 21), math.inf)
    rows = temperature_sweep(table, per_state, temperatures)
    assert np.all(np.diff(rows[:, 1]) < 0)
    assert np.all(np.diff(rows[:, 2]) <= 0)


def test_mismatched_lengths_are_rejected(table):
    occ = occupation(table, 1e-6)
    short = PerStateCoupling(beta=np.full(3, 0.01), detuning=np.zeros(3))
    with pytest.raises(ValueError):
        mean_beta(short, occ)
    with pytest.raises(ValueError):
        mean_detuning(short, occ)


def test_morse_and_harmonic_coupling_differ_for_high_states(table, calibration):
    morse = calibration.per_state
    assert morse[-1] < 0.1 * morse[0]
    harmonic = harmonic_comparison(table, calibration.profile)
    assert np.all(np.diff(harmonic[40:62]) >= 0)
    assert harmonic[0] == pytest.approx(morse[0], rel=0.05)


def test_ground_state_detuning_is_small_against_linewidth(per_state, species):
    assert abs(per_state.detuning[0]) < 0.1 * species.linewidth


def _extended_weights(table, temperature):
    energies = np.asarray(table.energies, dtype=np.longdouble)
    kT = np.longdouble(table.constants.k_B) * np.longdouble(temperature)
    weights = np.exp(-(energies - energies[0]) / kT)
    return weights / weights.sum()


@pytest.mark.parametrize("temperature_uK", [0.1, 1.0, 10.0, 100.0, 1000.0])
def test_thermal_averages_match_extended_precision(table, per_state, heating, temperature_uK):
    temperature = temperature_uK * MICROKELVIN
    occ = occupation(table, temperature)
    weights = _extended_weights(table, temperature)
    assert np.allclose(occ.weights, weights.astype(float), rtol=1e-10, atol=1e-300)
    beta = np.sum(weights * np.asarray(per_state.beta, dtype=np.longdouble))
    detuning = np.sum(weights * np.asarray(per_state.detuning, dtype=np.longdouble))
    gain = np.sum(weights * (np.asarray(heating.per_state, dtype=np.longdouble) + heating.recoil_temperature))
    assert mean_beta(per_state, occ) == pytest.approx(float(beta), rel=1e-10)
    assert mean_detuning(per_state, occ) == pytest.approx(float(detuning), rel=1e-10, abs=1e-6)
    assert heating.per_temperature(occ) == pytest.approx(float(gain), rel=1e-10)


def test_constant_splitting_gives_constant_mean_detuning(table, per_state):
    constant = PerStateCoupling(beta=per_state.beta, detuning=np.full(table.state_count, 2.5e6))
    for temperature in (1e-7, 1e-5, 1e-3, math.inf):
        assert mean_detuning(constant, occupation(table, temperature)) == pytest.approx(2.5e6, rel=1e-12)
