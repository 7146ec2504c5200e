"""
Handler for the `calibrate` command.

Runs the two-point coupling calibration, the excited-amplitude calibration
when enabled and the cooling-rate calibration, then writes the calibrated
values as a YAML fragment that can be pasted into a run configuration.
"""
import json
import logging
import math
from pathlib import Path

import attrs
import numpy as np
import yaml

from nanofiber_probe.config import config_from_event
from nanofiber_probe.constants import (
    MICROKELVIN,
    NANOMETER,
    PICOWATT,
    atom_number_from_absorption,
    energy_to_temperature,
    heating_phonons_per_ms,
    optical_depth_weak,
    saturation_power,
)
from nanofiber_probe.errors import CalibrationError, ConfigError, DataFileError, ProbeError
from nanofiber_probe.outputs import response, write_summary, write_table
from nanofiber_probe.pipeline import build_workspace

logger = logging.getLogger(__name__)


def handler(event, context):
    """
    Main handler for the calibrate command.
    """
    _ = context
    logger.info("Coupling calibrator triggered with event: %s", json.dumps(event))
    try:
        config = config_from_event(event)
        return calibrate(config, threads=event.get("threads") or 1)
    except (ConfigError, DataFileError, ValueError, TypeError) as e:
        logger.error("Invalid calibrate request: %s", e)
        return response(400, {"error": str(e)})
    except CalibrationError as e:
        logger.error("Calibration failed: %s %s", e, e.diagnostics)
        return response(500, {"error": str(e), "diagnostics": e.diagnostics})
    except ProbeError as e:
        logger.error("Calibration failed: %s", e)
        return response(500, {"error": str(e)})
    except Exception as e:
        logger.exception("Unexpected error in calibrate: %s", e)
        return response(500, {"error": f"unexpected error: {e}"})


def calibrate(config, threads=1):
    # Always calibrate: drop a fixed profile and force the cooling calibration.
    config = attrs.evolve(
        config,
        coupling=attrs.evolve(config.coupling, amplitude=None, decay_length_nm=None),
        dynamics=attrs.evolve(config.dynamics, calibrate_cooling=True),
    )
    workspace = build_workspace(config, threads=threads)
    calibration = workspace.calibration
    profile = workspace.profile
    cooling = workspace.diagnostics["cooling"]
    constants = workspace.table.constants

    fragment = {
        "coupling": {
            "amplitude": float(profile.amplitude),
            "decay_length_nm": float(profile.decay_length / NANOMETER),
        },
        "dynamics": {"cooling_rate_per_s": float(cooling["cooling_rate"])},
    }
    if config.excited.calibrate:
        fragment["excited"] = {
            "amplitude_uK": float(energy_to_temperature(workspace.excited.amplitude, constants) / MICROKELVIN),
        }

    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    fragment_path = out / "calibration.yaml"
    fragment_path.write_text(yaml.safe_dump(fragment, sort_keys=True), encoding="utf-8")
    beta_path = write_table(
        out / "calibrated_beta.tsv", ("n", "beta"),
        np.column_stack((np.arange(len(calibration.per_state)), calibration.per_state)),
    )
    summary = {
        "beta_ref": profile.amplitude,
        "decay_length_nm": profile.decay_length / NANOMETER,
        "residual": calibration.residual,
        "beta_100uK": calibration.cross_check,
        "cooling": cooling,
        "implied_cooling_rate_mK_per_s": cooling["implied_rate"] / 1e-3,
        "excited_amplitude_over_depth": workspace.excited.amplitude / workspace.table.potential.depth,
        "trap_frequency_kHz": workspace.table.trap_frequency / (2.0 * math.pi) / 1e3,
        "light_matter": light_matter(workspace, cooling["implied_rate"]),
        "files": [str(fragment_path), str(beta_path)],
    }
    write_summary(out / "calibrate_summary.json", summary)
    return response(200, summary)


def light_matter(workspace, implied_cooling_rate):
    """Saturation power, atom number and heating rates in the units they are usually quoted in."""
    coupling = workspace.config.coupling
    species = workspace.species
    omega = workspace.table.trap_frequency
    constants = workspace.table.constants
    atoms = atom_number_from_absorption(coupling.saturated_absorption_pW * PICOWATT, species)
    return {
        "saturation_power_pW": saturation_power(species, coupling.reference_beta) / PICOWATT,
        "saturation_power_hot_pW": saturation_power(species, coupling.beta_hot) / PICOWATT,
        "single_atom_power_pW": species.single_atom_power / PICOWATT,
        "atoms_from_absorption": atoms,
        "weak_coupling_od": optical_depth_weak(coupling.reference_beta, atoms),
        "passive_heating_phonons_per_ms": heating_phonons_per_ms(
            workspace.dynamics.passive_rate, omega, constants
        ),
        "implied_cooling_phonons_per_ms": heating_phonons_per_ms(implied_cooling_rate, omega, constants),
    }
