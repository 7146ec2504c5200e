"""
Calibrations that close the loop between the simulation and measured observables:
the cooling rate constant from the Delta OD_cool recovery time and the
excited-state repulsion amplitude from the short-probe heating benchmark.
The two-point coupling calibration lives in coupling_thermal.
"""
import logging
import math

import attrs
import numpy as np
from scipy.optimize import brentq

from nanofiber_probe.constants import MICROKELVIN, MICROSECOND, MILLISECOND
from nanofiber_probe.dynamics import (
    Probe,
    cooling_recovery_curve,
    implied_cooling_rate,
    initial_state,
    step_probe,
)
from nanofiber_probe.errors import CalibrationError, FitError
from nanofiber_probe.fitting import fit, model_exp_approach

logger = logging.getLogger(__name__)

TARGET_RECOVERY_RATE = 360.0
COOLING_RATE_BOX = (1.0, 1e5)
COOL_DURATIONS = np.linspace(0.25, 20.0, 80) * MILLISECOND

TARGET_PROBE_TEMPERATURE = 100.0 * MICROKELVIN
BENCHMARK_PROBE = Probe(duration=20.0 * MICROSECOND, power=0.26)
# Excited amplitude in units of the ground depth.
AMPLITUDE_BOX = (0.25, 16.0)
AMPLITUDE_SCAN_POINTS = 13


@attrs.frozen
class CoolingCalibration:
    cooling_rate: float
    recovery_rate: float
    recovery_plateau: float
    implied_rate: float


@attrs.frozen
class AmplitudeCalibration:
    amplitude: float
    final_temperature: float
    beta_ratio: float
    atom_loss: float


def recovery_rate(context, config, probe=BENCHMARK_PROBE, cool_durations=COOL_DURATIONS):
    """Fitted exponential-approach rate and plateau of Delta OD_cool."""
    curve = cooling_recovery_curve(context, config, probe, cool_durations)
    result = fit(model_exp_approach(), cool_durations, curve)
    return result["rate"], result["y_max"]


def _scan_brackets(function, grid):
    values = []
    for point in grid:
        try:
            values.append(function(point))
        except (FitError, ValueError):
            values.append(math.nan)
    values = np.array(values)
    finite = np.isfinite(values[:-1]) & np.isfinite(values[1:])
    brackets = np.flatnonzero(finite & (np.sign(values[:-1]) != np.sign(values[1:])))
    return values, brackets


def calibrate_cooling_rate(context, config, target_rate=TARGET_RECOVERY_RATE,
                           probe=BENCHMARK_PROBE, cool_durations=COOL_DURATIONS):
    """kappa_cool such that the simulated Delta OD_cool curve recovers at target_rate."""

    def mismatch(log_rate):
        trial = attrs.evolve(config, cooling_rate=math.exp(log_rate))
        rate, _ = recovery_rate(context, trial, probe, cool_durations)
        return math.log(rate / target_rate)

    grid = np.linspace(math.log(COOLING_RATE_BOX[0]), math.log(COOLING_RATE_BOX[1]), 21)
    values, brackets = _scan_brackets(mismatch, grid)
    if brackets.size == 0:
        raise CalibrationError(
            "no cooling rate in the search box reproduces the recovery rate",
            {"target_rate_per_s": target_rate, "scan": values.tolist()},
        )
    start = brackets[0]
    log_rate = brentq(mismatch, grid[start], grid[start + 1], xtol=1e-10, rtol=1e-10)
    cooling_rate = math.exp(log_rate)
    calibrated = attrs.evolve(config, cooling_rate=cooling_rate)
    rate, plateau = recovery_rate(context, calibrated, probe, cool_durations)
    heated = step_probe(
        initial_state(context, calibrated), probe.duration, probe.power, context, calibrated
    )
    implied = implied_cooling_rate(cooling_rate, heated.temperature, calibrated.cooling_floor)
    logger.info(
        "Calibrated cooling: kappa = %.1f /s, recovery %.1f /s to %.3f OD, implied %.1f mK/s",
        cooling_rate, rate, plateau, implied / 1e-3,
    )
    return CoolingCalibration(
        cooling_rate=cooling_rate,
        recovery_rate=rate,
        recovery_plateau=plateau,
        implied_rate=implied,
    )


def probe_benchmark(context, config, probe=BENCHMARK_PROBE):
    start = initial_state(context, config)
    end = step_probe(start, probe.duration, probe.power, context, config)
    return end.temperature, end.beta / start.beta, 1.0 - end.atoms / start.atoms


def calibrate_excited_amplitude(context_for, config, depth, target_temperature=TARGET_PROBE_TEMPERATURE,
                                probe=BENCHMARK_PROBE):
    """Excited repulsion amplitude A (J) such that the short probe ends at target_temperature.

    context_for(amplitude) builds a ProbeContext with that excited amplitude;
    the decay constant stays fixed. Monte-Carlo seeds are fixed, so the final
    temperature is a smooth function of A.
    """

    def mismatch(log_ratio):
        context = context_for(math.exp(log_ratio) * depth)
        final, _, _ = probe_benchmark(context, config, probe)
        return math.log(final / target_temperature)

    grid = np.linspace(math.log(AMPLITUDE_BOX[0]), math.log(AMPLITUDE_BOX[1]), AMPLITUDE_SCAN_POINTS)
    values, brackets = _scan_brackets(mismatch, grid)
    if brackets.size == 0:
        raise CalibrationError(
            "no excited amplitude in the search box reaches the target temperature",
            {
                "target_temperature_uK": target_temperature / MICROKELVIN,
                "amplitude_over_depth": np.exp(grid).tolist(),
                "log_mismatch": values.tolist(),
            },
        )
    start = brackets[0]
    log_ratio = brentq(mismatch, grid[start], grid[start + 1], xtol=1e-6, rtol=1e-8)
    amplitude = math.exp(log_ratio) * depth
    final, beta_ratio, loss = probe_benchmark(context_for(amplitude), config, probe)
    logger.info(
        "Calibrated excited amplitude: A = %.3f D, probe ends at %.1f uK "
        "(beta ratio %.3f, loss %.2f%%)",
        math.exp(log_ratio), final / MICROKELVIN, beta_ratio, 100.0 * loss,
    )
    return AmplitudeCalibration(
        amplitude=amplitude,
        final_temperature=final,
        beta_ratio=beta_ratio,
        atom_loss=loss,
    )
