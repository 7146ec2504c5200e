"""
Handler for the `coupling` command.

Sweeps temperature over a log grid (plus T -> infinity as the last row) and
writes the mean coupling, surviving atom fraction and mean detuning.
"""
import json
import logging
import math
from pathlib import Path

import numpy as np

from nanofiber_probe.config import config_from_event
from nanofiber_probe.constants import MICROKELVIN, NANOMETER
from nanofiber_probe.coupling_thermal import (
    CROSS_CHECK_TEMPERATURE,
    mean_beta,
    occupation,
    per_state_coupling,
    temperature_sweep,
)
from nanofiber_probe.errors import ConfigError, DataFileError, ProbeError
from nanofiber_probe.outputs import response, write_summary, write_table
from nanofiber_probe.pipeline import build_excited, build_profile, build_species, build_table

logger = logging.getLogger(__name__)

COLUMNS = ("temperature_uK", "beta_mean", "remaining_fraction", "detuning_MHz")


def handler(event, context):
    """
    Main handler for the coupling command.
    """
    _ = context
    logger.info("Coupling sweeper triggered with event: %s", json.dumps(event))
    try:
        config = config_from_event(event)
        return sweep_coupling(config)
    except (ConfigError, DataFileError, ValueError, TypeError) as e:
        logger.error("Invalid coupling request: %s", e)
        return response(400, {"error": str(e)})
    except ProbeError as e:
        logger.error("Coupling sweep failed: %s", e)
        return response(500, {"error": str(e)})
    except Exception as e:
        logger.exception("Unexpected error in coupling: %s", e)
        return response(500, {"error": f"unexpected error: {e}"})


def sweep_temperatures(config):
    section = config.coupling
    grid = np.logspace(
        math.log10(section.sweep_start_uK), math.log10(section.sweep_stop_uK), section.sweep_points
    ) * MICROKELVIN
    return np.append(grid, math.inf)


def sweep_coupling(config):
    species = build_species(config)
    table = build_table(config, species)
    profile, calibration = build_profile(config, table)
    per_state = per_state_coupling(table, profile, build_excited(config, table))

    rows = temperature_sweep(table, per_state, sweep_temperatures(config))
    rows[:, 0] /= MICROKELVIN
    rows[:, 3] /= 2.0 * math.pi * 1e6

    out = Path(config.output.directory)
    path = write_table(out / "coupling.tsv", COLUMNS, rows)
    k_B = table.constants.k_B
    summary = {
        "beta_inf": rows[-1, 1],
        "beta_cold": mean_beta(per_state, occupation(table, config.coupling.cold_temperature_uK * MICROKELVIN)),
        "beta_100uK": mean_beta(per_state, occupation(table, CROSS_CHECK_TEMPERATURE)),
        "half_loss_temperature_uK": table.potential.depth / (k_B * math.log(2.0)) / MICROKELVIN,
        "coupling": {
            "amplitude": profile.amplitude,
            "decay_length_nm": profile.decay_length / NANOMETER,
            "residual": calibration.residual if calibration is not None else None,
        },
        "files": [str(path)],
    }
    write_summary(out / "coupling_summary.json", summary)
    return response(200, summary)
