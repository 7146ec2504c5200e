"""
Handler for the `spectrum` command.

Builds the Morse bound-state table for the configured trap and writes one row
per state: energy, mean atom-surface distance, coupling and detuning, next to
the coupling the same trap frequency would give in a harmonic trap.
"""
import json
import logging
import math
from pathlib import Path

import numpy as np

from nanofiber_probe.config import config_from_event
from nanofiber_probe.constants import MICROKELVIN, NANOMETER, energy_to_temperature
from nanofiber_probe.coupling_thermal import harmonic_comparison, per_state_coupling
from nanofiber_probe.errors import ConfigError, DataFileError, ProbeError
from nanofiber_probe.outputs import response, write_summary, write_table
from nanofiber_probe.pipeline import build_excited, build_profile, build_species, build_table

logger = logging.getLogger(__name__)

COLUMNS = ("n", "energy_uK", "mean_distance_nm", "beta", "detuning_MHz", "beta_harmonic")


def handler(event, context):
    """
    Main handler for the spectrum command. The event carries the CLI arguments.
    """
    _ = context
    logger.info("Spectrum builder triggered with event: %s", json.dumps(event))
    try:
        config = config_from_event(event)
        return build_spectrum(config)
    except (ConfigError, DataFileError, ValueError, TypeError) as e:
        logger.error("Invalid spectrum request: %s", e)
        return response(400, {"error": str(e)})
    except ProbeError as e:
        logger.error("Spectrum computation failed: %s", e)
        return response(500, {"error": str(e)})
    except Exception as e:
        logger.exception("Unexpected error in spectrum: %s", e)
        return response(500, {"error": f"unexpected error: {e}"})


def spectrum_rows(table, per_state, harmonic):
    return np.column_stack((
        np.arange(table.state_count),
        energy_to_temperature(table.energies, table.constants) / MICROKELVIN,
        table.mean_distances / NANOMETER,
        per_state.beta,
        per_state.detuning / (2.0 * math.pi) / 1e6,
        harmonic,
    ))


def build_spectrum(config):
    species = build_species(config)
    table = build_table(config, species)
    profile, calibration = build_profile(config, table)
    per_state = per_state_coupling(table, profile, build_excited(config, table))
    harmonic = harmonic_comparison(table, profile)

    out = Path(config.output.directory)
    table_path = write_table(out / "spectrum.tsv", COLUMNS, spectrum_rows(table, per_state, harmonic))
    summary = {
        "state_count": table.state_count,
        "n_max": table.n_max,
        "morse_lambda": table.morse_lambda,
        "trap_frequency_kHz": table.trap_frequency / (2.0 * math.pi) / 1e3,
        "coupling": {
            "amplitude": profile.amplitude,
            "decay_length_nm": profile.decay_length / NANOMETER,
            "calibrated": calibration is not None,
        },
        "beta_last_over_first": per_state.beta[-1] / per_state.beta[0],
        "files": [str(table_path)],
    }
    write_summary(out / "spectrum_summary.json", summary)
    logger.info("Spectrum: %d bound states", table.state_count)
    return response(200, summary)
