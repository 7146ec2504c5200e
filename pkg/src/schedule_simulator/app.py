"""
Handler for the `simulate` command.

Runs the configured pulse schedule (once, or once per sweep value), writes the
transmission traces or instant-OD readouts and the requested analysis:
- flank: gamma_ini, gamma and Delta OD_ini of the first probe pulse
- stitched: double-exponential fit to the stitched probe-time trace
- lifetime: exponential fit to the instant OD against waiting time
- cool_recovery: Delta OD_cool against cooling time and its recovery rate
"""
import json
import logging
from pathlib import Path

import attrs
import numpy as np

from nanofiber_probe.config import config_from_event
from nanofiber_probe.constants import MICROKELVIN, MILLISECOND, NANOMETER
from nanofiber_probe.dynamics import (
    Probe,
    TransmissionTrace,
    cooling_recovery_curve,
    run_schedule,
    wait_sweep,
)
from nanofiber_probe.errors import ConfigError, DataFileError, ProbeError
from nanofiber_probe.fitting import (
    INITIAL_WINDOW,
    extract_flank_metrics,
    fit,
    fit_report,
    model_double_exp,
    model_exp_approach,
    model_exp_lifetime,
    rms_residual,
)
from nanofiber_probe.outputs import response, write_summary, write_table
from nanofiber_probe.pipeline import build_schedule, build_workspace

logger = logging.getLogger(__name__)


def handler(event, context):
    """
    Main handler for the simulate command.
    """
    _ = context
    logger.info("Schedule simulator triggered with event: %s", json.dumps(event))
    try:
        config = config_from_event(event)
        check_schedule(config)
        workspace = build_workspace(config, threads=event.get("threads") or 1)
        return simulate(workspace)
    except (ConfigError, DataFileError, ValueError, TypeError) as e:
        logger.error("Invalid simulate request: %s", e)
        return response(400, {"error": str(e)})
    except ProbeError as e:
        logger.error("Simulation failed: %s", e)
        return response(500, {"error": str(e)})
    except Exception as e:
        logger.exception("Unexpected error in simulate: %s", e)
        return response(500, {"error": f"unexpected error: {e}"})


def check_schedule(config):
    """Reject analysis/readout combinations that cannot run."""
    schedule = config.schedule
    analysis = config.fit.analysis
    if not schedule.segments:
        raise ConfigError("schedule.segments is required for simulate", config.source)
    if analysis == "lifetime" and (schedule.readout != "instant_od" or schedule.sweep_target != "wait_ms"):
        raise ConfigError("lifetime analysis needs an instant_od readout swept over wait_ms", config.source)
    if analysis == "cool_recovery" and schedule.sweep_target != "cool_ms":
        raise ConfigError("cool_recovery analysis needs a sweep over cool_ms", config.source)
    if analysis in ("flank", "stitched") and schedule.readout != "trace":
        raise ConfigError(f"{analysis} analysis needs a trace readout", config.source)
    if schedule.readout == "instant_od":
        kinds = [s.kind for s in schedule.segments]
        if kinds not in (["wait"], ["cool"], ["wait", "cool"]) or schedule.repeat != 1:
            raise ConfigError(
                "instant_od readout needs a wait and/or a cool segment, in that order, without repeats",
                config.source,
            )
        if schedule.sweep_values and schedule.sweep_target != "wait_ms":
            raise ConfigError("instant_od readout can only sweep wait_ms", config.source)


def simulate(workspace):
    config = workspace.config
    out = Path(config.output.directory)
    analysis = config.fit.analysis
    summary = {
        "coupling": {
            "amplitude": workspace.profile.amplitude,
            "decay_length_nm": workspace.profile.decay_length / NANOMETER,
        },
        "cooling_rate_per_s": workspace.dynamics.cooling_rate,
        "excited_amplitude_over_depth": workspace.excited.amplitude / workspace.table.potential.depth,
        "diagnostics": workspace.diagnostics,
        "analysis": analysis,
        "files": [],
    }

    if analysis == "cool_recovery":
        summary.update(cool_recovery(workspace, out))
    elif config.schedule.readout == "instant_od":
        summary.update(instant_readout(workspace, out))
    else:
        summary.update(traces(workspace, out))
    write_summary(out / "simulate_summary.json", summary)
    return response(200, summary)


def _sweep_values(config):
    return config.schedule.sweep_values or (None,)


def traces(workspace, out):
    config = workspace.config
    runs = []
    files = []
    for index, value in enumerate(_sweep_values(config)):
        trace = run_schedule(build_schedule(config, value), workspace.dynamics, workspace.context)
        files.append(str(write_table(out / f"simulate_trace_{index:02d}.tsv", TransmissionTrace.COLUMNS, trace.rows())))
        run = {
            "sweep_value": value,
            "initial_atoms": trace.final_state.initial_atoms,
            "final_temperature_uK": trace.final_state.temperature / MICROKELVIN,
            "final_atoms": trace.final_state.atoms,
            "monotone_pulses": all(
                bool(np.all(np.diff(trace.select(k).transmission) >= -1e-12))
                for k in range(trace.pulse_count)
            ),
        }
        if config.fit.analysis == "flank":
            metrics = extract_flank_metrics(trace.select(0))
            run.update({
                "gamma_initial_per_ms": metrics.gamma_initial * MILLISECOND,
                "gamma_per_ms": metrics.gamma * MILLISECOND,
                "gamma_ratio": metrics.ratio,
                "delta_od_initial": metrics.delta_od_initial,
                "od0_long": metrics.od0_long,
            })
        elif config.fit.analysis == "stitched":
            run.update(stitched(trace))
        runs.append(run)
    return {"runs": runs, "files": files, "initial_atoms": runs[0]["initial_atoms"]}


def stitched(trace):
    """Stitched-trace fit and the per-pulse recovery check."""
    model = model_double_exp()
    result = fit(model, trace.probe_time, trace.transmission)
    pulses = [trace.select(k) for k in range(trace.pulse_count)]
    recovered = [
        float(after.transmission[0]) < float(before.transmission[-1])
        for before, after in zip(pulses, pulses[1:])
    ]
    initial_gammas = [
        fit(model, p.probe_time, p.transmission, window=INITIAL_WINDOW)["gamma"]
        for p in pulses if len(p.probe_time) > 2
    ]
    return {
        "stitched_fit": fit_report(result),
        "stitched_rms": rms_residual(model, result, trace.probe_time, trace.transmission),
        "recovered_after_cooling": all(recovered),
        "pulse_gamma_initial_per_ms": float(np.mean(initial_gammas)) * MILLISECOND if initial_gammas else None,
    }


def instant_readout(workspace, out):
    config = workspace.config
    schedule = config.schedule
    durations = {s.kind: s.duration for s in schedule.segments}
    if schedule.sweep_values:
        waits = np.array(schedule.sweep_values) * MILLISECOND
    else:
        waits = np.array([durations.get("wait", 0.0)])
    sweep = wait_sweep(
        workspace.context, workspace.dynamics, waits, durations.get("cool", 0.0),
        fixed_beta=schedule.fixed_beta_readout,
    )
    rows = np.column_stack((
        sweep.waits / MILLISECOND, sweep.optical_depth, sweep.atoms, sweep.peak_temperature / MICROKELVIN,
    ))
    columns = ("wait_ms", "optical_depth", "atoms", "peak_temperature_uK")
    result = {
        "files": [str(write_table(out / "simulate_readout.tsv", columns, rows))],
        "initial_atoms": sweep.states[0].initial_atoms,
        "relative_od": sweep.relative.tolist(),
    }
    if config.fit.analysis == "lifetime":
        lifetime = fit(model_exp_lifetime(), sweep.waits, sweep.optical_depth)
        result["lifetime_fit"] = fit_report(lifetime)
        result["lifetime_ms"] = lifetime["tau"] / MILLISECOND
    return result


def cool_recovery(workspace, out):
    config = workspace.config
    probes = [s for s in config.schedule.segments if s.kind == "probe"]
    if not probes:
        raise ConfigError("cool_recovery analysis needs a probe segment", config.source)
    probe = Probe(probes[0].duration, probes[0].power)
    durations = np.array(config.schedule.sweep_values) * MILLISECOND
    curve = cooling_recovery_curve(workspace.context, workspace.dynamics, probe, durations)
    path = write_table(
        out / "cool_recovery.tsv", ("cool_ms", "delta_od_cool"),
        np.column_stack((durations / MILLISECOND, curve)),
    )
    result = fit(model_exp_approach(), durations, curve)
    return {
        "files": [str(path)],
        "recovery_fit": fit_report(result),
        "recovery_rate_per_s": result["rate"],
        "recovery_plateau": result["y_max"],
        "dynamics": attrs.asdict(workspace.dynamics),
    }
