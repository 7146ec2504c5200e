import json

import numpy as np
import pytest

from src.spectrum_builder import app as spectrum_builder_app


def _run(tmp_path, **event):
    event.setdefault("out", str(tmp_path / "out"))
    result = spectrum_builder_app.handler(event, None)
    return result["statusCode"], json.loads(result["body"])


def test_calibrated_spectrum(tmp_path):
    status, body = _run(tmp_path)
    assert status == 200
    assert body["state_count"] == 62
    assert body["coupling"]["calibrated"] is True
    assert body["beta_last_over_first"] < 0.1
    rows = np.loadtxt(tmp_path / "out" / "spectrum.tsv")
    assert rows.shape == (62, 6)
    assert np.all(np.diff(rows[:, 1]) > 0)
    assert np.all(rows[:, 1] < 0)
    assert (tmp_path / "out" / "spectrum_summary.json").exists()


def test_fixed_coupling_skips_calibration(tmp_path, fixed_coupling_config):
    status, body = _run(tmp_path, config=str(fixed_coupling_config))
    assert status == 200
    assert body["coupling"]["calibrated"] is False
    assert body["coupling"]["decay_length_nm"] == pytest.approx(165.0)


def test_unknown_key_is_a_bad_request(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("trap:\n  depth: 240\n")
    status, body = _run(tmp_path, config=str(path))
    assert status == 400
    assert f"{path}:2:" in body["error"]


def test_trap_without_bound_states_is_a_bad_request(tmp_path):
    path = tmp_path / "shallow.yaml"
    path.write_text("trap:\n  depth_uK: 0.001\n")
    status, body = _run(tmp_path, config=str(path))
    assert status == 400
    assert "no bound state" in body["error"]


def test_infeasible_calibration_is_a_numerical_failure(tmp_path, infeasible_config):
    status, body = _run(tmp_path, config=str(infeasible_config))
    assert status == 500
    assert "decay length" in body["error"]


def test_unwritable_output_is_a_server_error(tmp_path, fixed_coupling_config, caplog):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory\n")
    status, body = _run(tmp_path, config=str(fixed_coupling_config), out=str(blocker / "out"))
    assert status == 500
    assert body["error"].startswith("unexpected error:")
    assert "Unexpected error in spectrum" in caplog.text
