"""
Handler for the `heating` command.

Runs (or loads from cache) the Monte-Carlo dwell-heating table and writes the
per-state heating next to the thermally averaged heating per scattered photon.
"""
import json
import logging
import math
from pathlib import Path

import numpy as np

from nanofiber_probe.config import config_from_event
from nanofiber_probe.constants import MICROKELVIN, energy_to_temperature
from nanofiber_probe.coupling_thermal import per_state_coupling
from nanofiber_probe.dynamics import build_probe_context
from nanofiber_probe.errors import ConfigError, DataFileError, ProbeError
from nanofiber_probe.heating_mc import heating_rate, recoil_heating_rate
from nanofiber_probe.outputs import ResultCache, response, write_summary, write_table
from nanofiber_probe.pipeline import (
    build_excited,
    build_profile,
    build_species,
    build_table,
    heating_table,
)

logger = logging.getLogger(__name__)

STATE_COLUMNS = ("n", "energy_uK", "heating_nK", "standard_error_nK")
TEMPERATURE_COLUMNS = ("temperature_uK", "heating_per_scatter_nK", "detuning_MHz")
NANOKELVIN = 1e-9


def handler(event, context):
    """
    Main handler for the heating command.
    """
    _ = context
    logger.info("Heating tabulator triggered with event: %s", json.dumps(event))
    try:
        config = config_from_event(event)
        return tabulate_heating(config, threads=event.get("threads") or 1)
    except (ConfigError, DataFileError, ValueError, TypeError) as e:
        logger.error("Invalid heating request: %s", e)
        return response(400, {"error": str(e)})
    except ProbeError as e:
        logger.error("Heating computation failed: %s", e)
        return response(500, {"error": str(e)})
    except Exception as e:
        logger.exception("Unexpected error in heating: %s", e)
        return response(500, {"error": f"unexpected error: {e}"})


def tabulate_heating(config, threads=1):
    out = Path(config.output.directory)
    species = build_species(config)
    table = build_table(config, species)
    profile, _ = build_profile(config, table)
    excited = build_excited(config, table)
    mc = config.monte_carlo
    heating = heating_table(
        table, excited, species, mc.samples, mc.seed, mc.sampling, ResultCache(out / "cache"), threads
    )
    context = build_probe_context(table, per_state_coupling(table, profile, excited), heating, species)

    state_rows = np.column_stack((
        np.arange(table.state_count),
        energy_to_temperature(table.energies, table.constants) / MICROKELVIN,
        heating.per_state / NANOKELVIN,
        heating.standard_errors / NANOKELVIN,
    ))
    temperatures = np.logspace(
        math.log10(config.coupling.sweep_start_uK),
        math.log10(config.coupling.sweep_stop_uK),
        config.coupling.sweep_points,
    ) * MICROKELVIN
    temperature_rows = np.column_stack((
        temperatures / MICROKELVIN,
        np.array([context.heating_per_scatter(t) for t in temperatures]) / NANOKELVIN,
        np.array([context.detuning(t) for t in temperatures]) / (2.0 * math.pi * 1e6),
    ))
    files = [
        write_table(out / "heating_states.tsv", STATE_COLUMNS, state_rows),
        write_table(out / "heating_temperature.tsv", TEMPERATURE_COLUMNS, temperature_rows),
    ]

    initial = config.dynamics.initial_temperature_uK * MICROKELVIN
    summary = {
        "samples": heating.samples,
        "seed": heating.seed,
        "sampling": heating.sampling,
        "recoil_temperature_nK": species.recoil_temperature / NANOKELVIN,
        "ground_state_heating_nK": heating.per_state[0] / NANOKELVIN,
        "recoil_only_rate_K_per_s": recoil_heating_rate(1.0, species),
        "full_rate_at_initial_temperature_K_per_s": heating_rate(1.0, initial, context),
        "files": [str(path) for path in files],
    }
    write_summary(out / "heating_summary.json", summary)
    return response(200, summary)
