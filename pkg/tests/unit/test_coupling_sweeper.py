import json
import math

import numpy as np
import pytest

from src.coupling_sweeper import app as coupling_sweeper_app


def test_coupling_sweep(tmp_path, fixed_coupling_config):
    event = {"config": str(fixed_coupling_config), "out": str(tmp_path)}
    result = coupling_sweeper_app.handler(event, None)
    assert result["statusCode"] == 200
    body = json.loads(result["body"])

    rows = np.loadtxt(tmp_path / "coupling.tsv")
    assert rows.shape == (62, 4)
    assert math.isinf(rows[-1, 0])
    assert np.all(np.diff(rows[:, 1]) <= 1e-15)
    assert rows[0, 1] > rows[30, 1] > rows[-1, 1]
    assert np.all(np.diff(rows[:, 2]) <= 0)
    assert rows[-1, 2] == 0.0
    assert body["beta_inf"] == pytest.approx(rows[-1, 1])
    assert body["beta_cold"] > body["beta_100uK"] > body["beta_inf"]
    assert body["half_loss_temperature_uK"] == pytest.approx(240.0 / math.log(2.0))
    assert body["coupling"]["residual"] is None


def test_missing_config_file_is_a_bad_request(tmp_path):
    result = coupling_sweeper_app.handler({"config": str(tmp_path / "nope.yaml"), "out": str(tmp_path)}, None)
    assert result["statusCode"] == 400
