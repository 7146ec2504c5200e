#!/usr/bin/env python3
"""
Command-line entry point. Each subcommand builds an event from its arguments,
calls the matching handler and turns the handler's status code into the
process exit code (0 success, 1 usage or configuration error, 2 numerical failure).
"""
import argparse
import json
import logging
import sys

from src.coupling_calibrator import app as coupling_calibrator_app
from src.coupling_sweeper import app as coupling_sweeper_app
from src.heating_tabulator import app as heating_tabulator_app
from src.schedule_simulator import app as schedule_simulator_app
from src.spectrum_builder import app as spectrum_builder_app
from src.trace_fitter import app as trace_fitter_app

logger = logging.getLogger("nanofiber_probe")

HANDLERS = {
    "spectrum": spectrum_builder_app.handler,
    "coupling": coupling_sweeper_app.handler,
    "heating": heating_tabulator_app.handler,
    "simulate": schedule_simulator_app.handler,
    "fit": trace_fitter_app.handler,
    "calibrate": coupling_calibrator_app.handler,
}

EXIT_CODES = {200: 0, 400: 1, 500: 2}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults when omitted)")
    common.add_argument("--seed", type=int, help="Monte-Carlo seed override")
    common.add_argument("--out", help="output directory override")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte-Carlo sampling")
    common.add_argument("--samples", type=int, help="Monte-Carlo samples per state override")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="nanofiber-probe", description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("spectrum", parents=[common], help="bound-state table")
    commands.add_parser("coupling", parents=[common], help="mean coupling against temperature")
    commands.add_parser("heating", parents=[common], help="Monte-Carlo heating tables")
    commands.add_parser("simulate", parents=[common], help="run the configured pulse schedule")
    commands.add_parser("calibrate", parents=[common], help="coupling, excited amplitude and cooling rate")

    fit = commands.add_parser("fit", parents=[common], help="fit a model to a data file")
    fit.add_argument("--model", required=True, help="double_exp, exp_lifetime, saturation_absorption, "
                                                    "od_spectrum or exp_approach")
    fit.add_argument("--data", required=True, help="delimited data file")
    fit.add_argument("--window", nargs=2, type=float, metavar=("LOW", "HIGH"),
                     help="fit only points with LOW <= x <= HIGH")
    fit.add_argument("--x-column", help="abscissa column, by index or name")
    fit.add_argument("--y-column", help="ordinate column, by index or name")
    fit.add_argument("--flank", action="store_true", help="initial-flank analysis of a transmission trace")
    return parser


def build_event(args):
    event = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "verbose") and value is not None and value is not False
    }
    if "window" in event:
        event["window"] = list(event["window"])
    return event


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    result = HANDLERS[args.command](build_event(args), None)
    status = result["statusCode"]
    body = json.loads(result["body"])
    if status == 200:
        logger.info("%s finished: %s", args.command, ", ".join(body.get("files", [])) or "no files")
    else:
        logger.error("%s failed: %s", args.command, body.get("error"))
    return EXIT_CODES.get(status, 2)


if __name__ == "__main__":
    sys.exit(main())
