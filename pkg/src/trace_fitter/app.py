"""
Handler for the `fit` command.

Fits one of the registered models to a delimited data file and writes a fit
report. With flank=True a double-exponential transmission trace is split
into its initial-flank and long-time windows instead.
"""
import json
import logging
import math
from pathlib import Path

from nanofiber_probe.config import config_from_event
from nanofiber_probe.dynamics import TransmissionTrace
from nanofiber_probe.errors import ConfigError, DataFileError, ProbeError
from nanofiber_probe.fitting import MODELS, extract_flank_metrics, fit, fit_report
from nanofiber_probe.outputs import read_series, response, write_summary

logger = logging.getLogger(__name__)


def handler(event, context):
    """
    Main handler for the fit command. Expects 'model' and 'data' in the event.
    """
    _ = context
    logger.info("Trace fitter triggered with event: %s", json.dumps(event))
    try:
        model_name = event.get("model")
        data = event.get("data")
        if not model_name or not data:
            raise ValueError("Input event must include 'model' and 'data'.")
        if model_name not in MODELS:
            raise ValueError(f"unknown model {model_name!r}; expected one of {sorted(MODELS)}")
        config = config_from_event(event)
        return fit_file(config, model_name, data, event)
    except (ConfigError, DataFileError, ValueError, TypeError) as e:
        logger.error("Invalid fit request: %s", e)
        return response(400, {"error": str(e)})
    except ProbeError as e:
        logger.error("Fit failed: %s", e)
        return response(500, {"error": str(e)})
    except Exception as e:
        logger.exception("Unexpected error in fit: %s", e)
        return response(500, {"error": f"unexpected error: {e}"})


def _column(value, default):
    if value is None:
        return default
    return int(value) if str(value).isdigit() else value


def build_model(model_name, config):
    if model_name == "od_spectrum":
        return MODELS[model_name](2.0 * math.pi * config.atom.linewidth_MHz * 1e6)
    return MODELS[model_name]()


def fit_file(config, model_name, data, event):
    x, y, names = read_series(
        data, _column(event.get("x_column"), 0), _column(event.get("y_column"), 1)
    )
    window = event.get("window")
    if window is not None and (len(window) != 2 or window[0] >= window[1]):
        raise ValueError(f"window must be two increasing bounds, got {window!r}")
    out = Path(config.output.directory)

    if event.get("flank"):
        if model_name != "double_exp":
            raise ValueError("flank analysis uses the double_exp model")
        metrics = extract_flank_metrics(TransmissionTrace.from_series(x, y))
        summary = {
            "model": model_name,
            "data": str(data),
            "gamma_initial": metrics.gamma_initial,
            "gamma": metrics.gamma,
            "gamma_ratio": metrics.ratio,
            "delta_od_initial": metrics.delta_od_initial,
            "od0_long": metrics.od0_long,
            "initial_fit": fit_report(metrics.initial_fit),
            "long_fit": fit_report(metrics.long_fit),
        }
    else:
        model = build_model(model_name, config)
        result = fit(model, x, y, window=window)
        summary = fit_report(result, model.notes)
        summary["data"] = str(data)
        summary["columns"] = names

    write_summary(out / f"fit_{model_name}_report.json", summary)
    return response(200, summary)
