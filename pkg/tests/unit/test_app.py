import json

import numpy as np

import app
from nanofiber_probe.constants import MICROSECOND
from nanofiber_probe.dynamics import double_exp_transmission
from nanofiber_probe.outputs import write_table


def test_spectrum_command_succeeds(tmp_path, fixed_coupling_config):
    code = app.main(["spectrum", "--config", str(fixed_coupling_config), "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "spectrum_summary.json").read_text())
    assert summary["state_count"] == 62


def test_fit_command(tmp_path):
    t = np.arange(600) * MICROSECOND
    data = write_table(tmp_path / "trace.tsv", ("t", "y"), np.column_stack((t, double_exp_transmission(1.0, 4000.0, t))))
    code = app.main([
        "fit", "--model", "double_exp", "--data", str(data), "--out", str(tmp_path),
        "--window", "0", "0.0005",
    ])
    assert code == 0
    report = json.loads((tmp_path / "fit_double_exp_report.json").read_text())
    assert report["window"] == [0.0, 0.0005]


def test_configuration_errors_exit_with_one(tmp_path):
    assert app.main(["spectrum", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert app.main(["teleport"]) == 1
    assert app.main(["fit", "--data", "x.tsv"]) == 1


def test_numerical_failures_exit_with_two(tmp_path, infeasible_config):
    assert app.main(["coupling", "--config", str(infeasible_config), "--out", str(tmp_path)]) == 2


def test_build_event_drops_unset_options():
    args = app.build_parser().parse_args(["heating", "--seed", "4", "--threads", "2"])
    assert app.build_event(args) == {"seed": 4, "threads": 2}


def test_unexpected_errors_exit_with_two(tmp_path, fixed_coupling_config):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory\n")
    code = app.main(["spectrum", "--config", str(fixed_coupling_config), "--out", str(blocker / "out")])
    assert code == 2
