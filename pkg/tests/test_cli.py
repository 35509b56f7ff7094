import json
import math

import numpy as np
import pytest

import rotometry
from model_definitions import (
    all_parameter_names, get_all_models, get_model, resolve_model_params,
)
from errors import ConfigError


def _run(tmp_path, argv, name="out"):
    path = tmp_path / name
    code = rotometry.main(argv + ["--output", str(path)])
    return code, (path.read_text() if path.exists() else "")


def _split_csv(text):
    comments = [line for line in text.splitlines() if line.startswith("#")]
    rows = [line.split(",") for line in text.splitlines() if line and not line.startswith("#")]
    return comments, rows


def _error_line(err):
    lines = [line for line in err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


# --- Registry ---

def test_registry_lists_every_model():
    names = {model["name"] for model in get_all_models()}
    assert names == {"three-site", "pancake", "ring"}
    assert {"N", "J", "U", "phi", "g", "A", "omega", "b", "modes"} <= set(all_parameter_names())


def test_resolve_model_params_defaults_and_errors():
    params, resolved = resolve_model_params("ring", {"N": "2", "g": "tg", "modes": "6"})
    assert params.num_particles == 2
    assert (params.k_min, params.k_max) == (-2, 3)
    assert params.omega == pytest.approx(math.pi)
    assert resolved["g"] == "tg"

    params, resolved = resolve_model_params("pancake", {"N": 2, "omega": "critical"})
    assert params.omega == pytest.approx(1 - 2 * 0.5 / (8 * math.pi))
    assert resolved["omega"] == "critical"

    with pytest.raises(ConfigError):
        resolve_model_params("ring", {"N": 1, "J": 1.0})
    with pytest.raises(ConfigError):
        resolve_model_params("ring", {})
    with pytest.raises(ConfigError):
        resolve_model_params("pancake", {"N": "two"})
    with pytest.raises(ConfigError):
        resolve_model_params("torus", {"N": 1})
    assert get_model("torus") is None


# --- spectrum ---

def test_spectrum_three_site_csv(tmp_path):
    code, text = _run(tmp_path, ["spectrum", "--model", "three-site", "--N", "3",
                                 "--phi", "0:6.283185307179586:21", "--k", "2"])
    assert code == 0
    comments, rows = _split_csv(text)
    assert comments[0] == f"# tool: {rotometry.TOOL_NAME} {rotometry.TOOL_VERSION}"
    assert comments[1].startswith("# config: {")
    assert "# unit: J" in comments
    assert "# param: phi" in comments
    assert rows[0] == ["param", "E0", "E1"]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    assert data.shape == (21, 3)
    gaps = data[:, 2] - data[:, 1]
    assert int(np.argmin(gaps)) == 10
    assert data[10, 0] == pytest.approx(math.pi)


def test_spectrum_single_point(tmp_path):
    code, text = _run(tmp_path, ["spectrum", "--model", "ring", "--N", "1", "--b", "0.1", "--k", "2"])
    assert code == 0
    _, rows = _split_csv(text)
    assert len(rows) == 2
    values = [float(v) for v in rows[1]]
    assert values[0] == pytest.approx(math.pi)
    assert values[1] == pytest.approx(0.25)


def test_spectrum_output_independent_of_threads(tmp_path, monkeypatch):
    argv = ["spectrum", "--model", "three-site", "--N", "3", "--phi", "0:6.2832:31", "--k", "3"]
    monkeypatch.setenv("ROTOMETRY_THREADS", "1")
    assert _run(tmp_path, argv, "one")[0] == 0
    monkeypatch.setenv("ROTOMETRY_THREADS", "4")
    assert _run(tmp_path, argv, "four")[0] == 0
    assert (tmp_path / "one").read_bytes() == (tmp_path / "four").read_bytes()


def test_config_file_precedence(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"model": "ring", "N": 1, "b": 0.05, "omega": 3.0, "k": 2}))

    code, text = _run(tmp_path, ["spectrum", "--config", str(config), "--format", "json"], "file")
    assert code == 0
    payload = json.loads(text)
    assert payload["config"]["b"] == 0.05
    assert payload["config"]["k"] == 2
    assert "output" not in payload["config"]

    code, text = _run(tmp_path, ["spectrum", "--config", str(config), "--format", "json",
                                 "--b", "0.1"], "flag")
    assert code == 0
    payload = json.loads(text)
    assert payload["config"]["b"] == 0.1
    assert payload["unit"] == "E0"
    assert len(payload["levels"][0]) == 2


def test_unknown_config_key(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"model": "ring", "N": 1, "temperature": 1.0}))
    assert rotometry.main(["spectrum", "--config", str(config)]) == 2
    assert _error_line(capsys.readouterr().err)["error"] == "ConfigError"


# --- Exit codes ---

def test_foreign_parameter_is_a_config_error(capsys):
    assert rotometry.main(["spectrum", "--model", "ring", "--N", "1", "--J", "1"]) == 2
    payload = _error_line(capsys.readouterr().err)
    assert payload["error"] == "ConfigError"
    assert payload["exit_code"] == 2


def test_bad_flag_type_exits_with_two():
    assert rotometry.main(["spectrum", "--model", "ring", "--N", "1", "--k", "abc"]) == 2


def test_dimension_cap_exits_with_two(capsys):
    assert rotometry.main(["spectrum", "--model", "ring", "--N", "10", "--modes", "30"]) == 2
    assert _error_line(capsys.readouterr().err)["error"] == "DimensionCapError"


def test_bracket_error_exits_with_three(capsys):
    code = rotometry.main(["anticrossing", "--model", "ring", "--N", "1", "--b", "0.05",
                           "--bracket", "0.5:1.5"])
    assert code == 3
    assert _error_line(capsys.readouterr().err)["error"] == "BracketError"


# --- Other commands ---

def test_anticrossing_json(tmp_path):
    code, text = _run(tmp_path, ["anticrossing", "--model", "ring", "--N", "1", "--b", "0.05"])
    assert code == 0
    payload = json.loads(text)
    assert payload["location"] == pytest.approx(math.pi, abs=1e-6)
    assert payload["converged"] is True
    assert payload["degenerate"] is False
    assert payload["critical_reference"] == pytest.approx(math.pi)


@pytest.mark.parametrize("basis", ["site", "flow"])
def test_groundstate_three_site(tmp_path, basis):
    code, text = _run(tmp_path, ["groundstate", "--model", "three-site", "--N", "3",
                                 "--phi", "critical", "--basis", basis])
    assert code == 0
    payload = json.loads(text)
    weights = payload["flow_extreme_weights"]
    assert weights["alpha"] == pytest.approx(weights["beta"], abs=1e-8)
    assert 0 < payload["noon_overlap"] <= 1 + 1e-12
    assert sum(payload["natural_occupations"]) == pytest.approx(3.0)
    assert payload["quasi_momentum_weights"]["0"] == pytest.approx(1.0, abs=1e-8)


def test_groundstate_ring(tmp_path):
    code, text = _run(tmp_path, ["groundstate", "--model", "ring", "--N", "2", "--b", "0.05",
                                 "--g", "1", "--omega", "critical"])
    assert code == 0
    payload = json.loads(text)
    assert payload["sector_weights"]["0"] == pytest.approx(payload["sector_weights"]["2"], abs=1e-8)
    assert sum(payload["momentum_distribution"].values()) == pytest.approx(2.0)


def test_groundstate_rejects_csv(capsys):
    assert rotometry.main(["groundstate", "--model", "ring", "--N", "1", "--format", "csv"]) == 2


def test_qfi_csv(tmp_path):
    code, text = _run(tmp_path, ["qfi", "--state", "noon", "--state", "unentangled",
                                 "--atoms", "10", "--loss", "0:0.5:51"])
    assert code == 0
    comments, rows = _split_csv(text)
    assert "# state: noon" in comments
    assert "# state: unentangled" in comments
    assert rows[0] == ["loss", "FQ", "deltaphi_min"]
    assert float(rows[1][1]) == pytest.approx(100.0, abs=1e-9)
    assert float(rows[1][2]) == pytest.approx(0.1, abs=1e-12)
    crossover = [c for c in comments if c.startswith("# crossover_noon_unentangled:")]
    assert len(crossover) == 1
    assert float(crossover[0].split(":")[1]) == pytest.approx(1 - 10 ** (-1 / 9), abs=0.01)


def test_qfi_ground_state_json(tmp_path):
    code, text = _run(tmp_path, ["qfi", "--state", "ground", "--model", "ring", "--N", "2",
                                 "--b", "0.05", "--g", "1", "--loss", "0:0.2:3", "--format", "json"])
    assert code == 0
    curve = json.loads(text)["curves"][0]
    assert curve["state"] == "ground"
    assert curve["generator"] == "L"
    assert curve["qfi"][0] > curve["qfi"][-1] > 0


def test_protocol_csv(tmp_path):
    code, text = _run(tmp_path, ["protocol", "--model", "ring", "--N", "1", "--b", "0.05",
                                 "--hold", "0:10:11"])
    assert code == 0
    comments, rows = _split_csv(text)
    assert rows[0] == ["hold_time", "p_non_rotating", "p_rotating", "p_other"]
    assert len(rows) == 12
    assert any(c.startswith("# critical_value:") for c in comments)
    assert any(c.startswith("# fringe_frequency:") for c in comments)


def test_protocol_reports_adiabaticity_violation(tmp_path):
    code, text = _run(tmp_path, ["protocol", "--model", "ring", "--N", "1", "--b", "0.05",
                                 "--hold", "0:1:2", "--ramp-up", "simulated", "--ramp-duration", "1"])
    assert code == 0
    comments, _ = _split_csv(text)
    assert any(c.startswith("# warning: AdiabaticityWarning") for c in comments)
    assert any("violated=true" in c for c in comments)


def test_states_csv(tmp_path):
    code, text = _run(tmp_path, ["states", "--atoms", "4"])
    assert code == 0
    comments, rows = _split_csv(text)
    for kind in ("noon", "bat", "unentangled"):
        assert f"# state: {kind}" in comments
    assert rows[0] == ["index", "n_a", "n_b", "amplitude", "probability"]
    assert len(rows) == 3 * 6


def test_states_rejects_odd_bat(capsys):
    assert rotometry.main(["states", "--state", "bat", "--atoms", "9"]) == 2


def test_sagnac_json(tmp_path):
    code, text = _run(tmp_path, ["sagnac", "--area", "2.0"])
    assert code == 0
    payload = json.loads(text)
    assert payload["atom_photon_ratio"] == pytest.approx(5.09e10, rel=0.01)
    assert payload["deltaphi"] > 0
    assert payload["unit"] == "rad"
