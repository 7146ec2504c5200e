import math

import attrs
import numpy as np
import pytest

from nanofiber_probe.coupling_thermal import occupation
from nanofiber_probe.heating_mc import (
    MIN_SAMPLES,
    UNIFORM_POSITION,
    build_heating_table,
    draw_scatter_samples,
    excited_dwell_heating,
    heating_rate,
    mean_heating_per_scatter,
    propagate_dwell,
    recoil_heating_rate,
    scattering_rate,
)
from nanofiber_probe.morse_spectrum import RepulsivePotential


def _ground_state_heating(table, excited, species, samples, seed=11, sampling="time_weighted"):
    return excited_dwell_heating(
        table.energies[0], table.potential, excited, table.mass, species.linewidth,
        samples, seed, 0, sampling, table.constants.k_B,
    )


def test_scattering_rate_limits(species):
    gamma = species.linewidth
    assert scattering_rate(1.0, 0.0, gamma) == pytest.approx(gamma / 4)
    assert scattering_rate(1.0, gamma, gamma) < scattering_rate(1.0, 0.0, gamma)
    assert scattering_rate(1e6, 0.0, gamma) == pytest.approx(gamma / 2, rel=1e-5)
    with pytest.raises(ValueError):
        scattering_rate(-0.1, 0.0, gamma)


def test_recoil_only_rate_at_unit_saturation(species):
    assert 0.8 <= recoil_heating_rate(1.0, species) <= 1.2


def test_excited_repulsion_heats_beyond_recoil(table, excited, species):
    result = _ground_state_heating(table, excited, species, 100_000)
    assert result.mean > species.recoil_temperature
    assert result.standard_error < 0.2 * result.mean


def test_flat_excited_state_leaves_only_the_free_drift_bias(table, ground, species):
    # Drifting for tau on a flat potential gains U'' v^2 tau^2 / 2 on average:
    # <tau^2> = 2 / Gamma^2 and m <v^2> = 2 <KE>, with <KE> half the height above the minimum.
    flat = RepulsivePotential(amplitude=0.0, decay=ground.stiffness, position=ground.position)
    result = _ground_state_heating(table, flat, species, 200_000)
    kinetic = 0.5 * (table.energies[0] + ground.depth)
    expected = 2.0 * (table.trap_frequency / species.linewidth) ** 2 * kinetic / table.constants.k_B
    assert 3e-9 < expected < 4.5e-9
    assert abs(result.mean - expected) < 4 * result.standard_error
    assert result.mean < 0.1 * species.recoil_temperature


def test_faster_decay_reduces_dwell_heating(table, excited, species):
    slow = _ground_state_heating(table, excited, species, MIN_SAMPLES)
    fast_species = attrs.evolve(species, linewidth=4 * species.linewidth)
    fast = _ground_state_heating(table, excited, fast_species, MIN_SAMPLES)
    assert fast.mean < 0.5 * slow.mean


def test_standard_error_shrinks_with_samples(table, excited, species):
    small = _ground_state_heating(table, excited, species, 20_000)
    large = _ground_state_heating(table, excited, species, 40_000)
    ratio = (large.standard_error / small.standard_error) ** 2
    assert 0.35 <= ratio <= 0.65


def test_same_seed_same_table(table, excited, species, heating):
    again = build_heating_table(table, excited, species, heating.samples, seed=heating.seed)
    assert np.array_equal(again.per_state, heating.per_state)


def test_table_does_not_depend_on_thread_count(table, excited, species, heating):
    threaded = build_heating_table(table, excited, species, heating.samples, seed=heating.seed, threads=3)
    assert np.array_equal(threaded.per_state, heating.per_state)
    assert np.array_equal(threaded.standard_errors, heating.standard_errors)


def test_zero_dwell_leaves_state_unchanged(excited, species):
    d = np.array([231e-9, 300e-9])
    p = np.array([1e-28, -2e-28])
    d_after, p_after = propagate_dwell(d, p, np.zeros(2), excited, species.mass, 1e-7)
    assert np.array_equal(d_after, d)
    assert np.array_equal(p_after, p)


def test_budget_and_mode_are_checked(table, excited, species):
    args = (table.energies[0], table.potential, excited, table.mass, species.linewidth)
    with pytest.raises(ValueError):
        draw_scatter_samples(*args, MIN_SAMPLES - 1, 0)
    with pytest.raises(ValueError):
        draw_scatter_samples(*args, MIN_SAMPLES, 0, sampling="grid")


def test_uniform_position_sampling_runs(table, excited, species):
    result = _ground_state_heating(table, excited, species, MIN_SAMPLES, sampling=UNIFORM_POSITION)
    assert math.isfinite(result.mean)
    assert result.samples == MIN_SAMPLES


def test_heating_per_scatter_includes_recoil(table, heating):
    occ = occupation(table, 1e-6)
    zero = np.zeros(table.state_count)
    assert mean_heating_per_scatter(zero, 1e-7, occ) == pytest.approx(1e-7)
    assert heating.per_temperature(occ) > heating.recoil_temperature
    with pytest.raises(ValueError):
        mean_heating_per_scatter(np.zeros(3), 1e-7, occ)


def test_heating_rate_checks(probe_context, species):
    with pytest.raises(ValueError):
        heating_rate(0.5, 0.0, probe_context)
    with pytest.warns(RuntimeWarning):
        heating_rate(1.5, 1e-6, probe_context)
    recoil = heating_rate(1.0, 1e-6, probe_context, recoil_only=True)
    assert recoil == pytest.approx(recoil_heating_rate(1.0, species))
    assert heating_rate(1.0, 1e-6, probe_context) > recoil


def test_faster_decay_lowers_heating_of_every_state(table, excited, species, heating):
    fast_species = attrs.evolve(species, linewidth=4 * species.linewidth)
    fast = build_heating_table(table, excited, fast_species, heating.samples, seed=heating.seed)
    noise = 3 * np.hypot(fast.standard_errors, heating.standard_errors)
    assert np.all(fast.per_state < heating.per_state + noise)
    assert np.sum(fast.per_state) < 0.5 * np.sum(heating.per_state)
