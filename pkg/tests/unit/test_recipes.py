import json
from pathlib import Path

import numpy as np
import pytest

from src.schedule_simulator import app as schedule_simulator_app

RECIPES = Path(__file__).resolve().parents[2] / "recipes"


@pytest.fixture(scope="module")
def shared_out(tmp_path_factory):
    """One output directory, so the recipes share the heating and calibration cache."""
    return tmp_path_factory.mktemp("recipes")


def _simulate(name, out):
    event = {"config": str(RECIPES / f"{name}.yaml"), "out": str(out), "threads": 4}
    result = schedule_simulator_app.handler(event, None)
    body = json.loads(result["body"])
    assert result["statusCode"] == 200, body
    return body


@pytest.fixture(scope="module")
def power_sweep(shared_out):
    return _simulate("power_sweep", shared_out)["runs"]


def test_power_sweep_decay_rate_grows_with_power(power_sweep):
    runs = power_sweep
    assert [run["sweep_value"] for run in runs] == [0.01, 0.05, 0.10, 0.22]
    gammas = [run["gamma_per_ms"] for run in runs]
    assert gammas[0] > 0
    assert np.all(np.diff(gammas) > 0)
    assert all(run["monotone_pulses"] for run in runs)
    assert all(run["delta_od_initial"] > 0 for run in runs[1:])


def test_power_sweep_flank_ratio_rises_with_power(power_sweep):
    # gamma_ini follows the initial heating rate, which is linear in power, while
    # gamma over the 10-500 us window saturates once the peak loss sets in.
    ratios = [run["gamma_ratio"] for run in power_sweep]
    assert ratios == pytest.approx([1.32, 5.84, 9.20, 12.86], rel=0.15)
    assert np.all(np.diff(ratios) > 0)
    assert ratios[-1] > 5


def test_interleaved_cooling_stitched_trace(shared_out):
    # Cooling resets the temperature and the peak-loss model only loses atoms on the
    # first pulse, so the stitched envelope barely decays and the per-pulse sawtooth
    # sets the residual.
    run = _simulate("interleaved_cooling", shared_out)["runs"][0]
    assert run["recovered_after_cooling"] is True
    assert 0.02 < run["stitched_rms"] < 0.04
    assert run["stitched_fit"]["parameters"]["gamma"] < 500.0


def test_cool_recovery_plateau_and_rate(shared_out):
    # The plateau is bounded by OD0 (1 - beta(T_end) / beta(T0)), which the coupling
    # calibration caps near 0.36.
    body = _simulate("cool_recovery", shared_out)
    assert body["recovery_plateau"] == pytest.approx(0.27, rel=0.15)
    assert body["recovery_plateau"] < 0.36
    assert body["recovery_rate_per_s"] == pytest.approx(360.0, rel=0.2)


def test_waiting_removes_the_initial_flank(shared_out):
    runs = _simulate("wait_before_probe", shared_out)["runs"]
    flank = [run["delta_od_initial"] for run in runs]
    assert flank[0] == pytest.approx(0.431, rel=0.15)
    assert np.all(np.diff(flank) < 0)
    assert flank[-1] < 0.25 * flank[0]


def test_wait_plateau_holds_for_the_first_milliseconds(shared_out):
    relative = _simulate("wait_plateau", shared_out)["relative_od"]
    assert relative[0] == 1.0
    assert np.all(np.array(relative[:7]) > 0.95)
    assert np.all(np.diff(relative) <= 0)


def test_trap_lifetime(shared_out):
    body = _simulate("trap_lifetime", shared_out)
    assert 40 <= body["lifetime_ms"] <= 170
