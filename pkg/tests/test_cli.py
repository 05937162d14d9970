import csv
import json
import os

import numpy as np
import pytest

from radau_mpc.cli import EXIT_CONFIG, EXIT_OK, OUT_ENV, main
from radau_mpc.config import ConfigError, load_config, parse_config

from conftest import CONFIG_DIR, bundled_run_configs, config_doc


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _small_ex1():
    doc = config_doc("ex1_full_Ts1.0")
    doc["mpc_parameters"]["file_name"] = "small"
    return doc


@pytest.mark.parametrize("name", bundled_run_configs() + ["ex1_sweep_tp"])
def test_bundled_configs_round_trip(name):
    cfg = load_config(os.path.join(CONFIG_DIR, name + ".json"))
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_config_errors_are_collected():
    doc = _small_ex1()
    doc["mpc_parameters"].update(p=1, m=2)
    doc["mesh_parameters"]["dt_segment"] = -1
    doc["extra"] = 1
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    text = " ".join(info.value.errors)
    assert "mpc_parameters" in text and "mesh_parameters" in text and "extra" in text


def test_non_dividing_ts_rejected():
    doc = _small_ex1()
    doc["mpc_parameters"]["Ts"] = 0.3
    with pytest.raises(ConfigError, match="does not divide"):
        parse_config(doc)


def test_bad_json_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unknown_problem_exits_2(tmp_path):
    doc = _small_ex1()
    doc["functions"]["problem"] = "ex9"
    assert main(["run", "--config", _write(tmp_path, doc)]) == EXIT_CONFIG


def test_run_writes_agreeing_json_and_csv(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", _write(tmp_path, _small_ex1()), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "small.json").read_text())
    with open(out / "small.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "xi1", "xi2", "u1", "cumulative_lagrange_cost"]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    s = doc["samples"]
    assert np.array_equal(data[:, 0], s["time"])
    assert np.array_equal(data[:, 1:3], s["states"])
    assert np.array_equal(data[:, 3:4], s["controls"])
    assert np.array_equal(data[:, 4], s["cumulative_lagrange_cost"])
    assert doc["summary"]["total_cost"] == pytest.approx(s["cumulative_lagrange_cost"][-1])
    assert parse_config(doc["config"]) == parse_config(_small_ex1())


def test_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    path = _write(tmp_path, _small_ex1())
    assert main(["run", "--config", path]) == EXIT_OK
    assert (tmp_path / "env" / "small.json").exists()
    doc = _small_ex1()
    doc["output_dir"] = str(tmp_path / "cfg")
    assert main(["run", "--config", _write(tmp_path, doc, "b.json")]) == EXIT_OK
    assert (tmp_path / "cfg" / "small.json").exists()


def test_compare_summary(tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", _write(tmp_path, _small_ex1()), "--out", str(out)]) == EXIT_OK
    m = json.loads((out / "small_compare.json").read_text())
    for key in ("max_control_error", "l2_control_error", "terminal_state_error", "objective_gap"):
        assert np.isfinite(m[key])
    assert m["objective_gap"] == pytest.approx(m["objective_mpc"] - m["objective_analytic"])


def test_compare_without_analytic_exits_2(tmp_path):
    path = os.path.join(CONFIG_DIR, "suspension_pulse.json")
    assert main(["compare", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG


def _sweep_doc():
    doc = _small_ex1()
    doc["sweep"] = {"Ts": [1.0, 0.3, 0.5], "mode": "p-sweep", "t_p": [1.0, 2.0]}
    return doc


@pytest.mark.parametrize("workers", [1, 2])
def test_sweep_grid_shape(tmp_path, workers):
    out = tmp_path / f"sw{workers}"
    assert main(["sweep", "--config", _write(tmp_path, _sweep_doc()), "--out", str(out),
                 "--workers", str(workers)]) == EXIT_OK
    with open(out / "sweep_objective.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 3 and all(len(r) == 1 + 2 for r in rows)
    assert rows[2][1:] == ["skipped", "skipped"]
    diag = json.loads((out / "sweep_diagnostics.json").read_text())
    assert [c["status"] for c in diag["cells"]] == ["ok", "ok", "skipped", "skipped", "ok", "ok"]
    assert np.isfinite([float(rows[1][1]), float(rows[3][2])]).all()


def test_sweep_serial_and_parallel_agree(tmp_path):
    for w in (1, 2):
        main(["sweep", "--config", _write(tmp_path, _sweep_doc()), "--out", str(tmp_path / f"o{w}"),
              "--workers", str(w)])
    a = (tmp_path / "o1" / "sweep_objective.csv").read_text()
    b = (tmp_path / "o2" / "sweep_objective.csv").read_text()
    assert a == b


def test_m_sweep_rejects_m_above_p(tmp_path):
    doc = _small_ex1()
    doc["sweep"] = {"Ts": [0.5], "mode": "m-sweep", "m": [1, 2, 6], "p": 4}
    out = tmp_path / "m"
    assert main(["sweep", "--config", _write(tmp_path, doc), "--out", str(out)]) == EXIT_OK
    diag = json.loads((out / "sweep_diagnostics.json").read_text())
    assert [c["status"] for c in diag["cells"]] == ["ok", "ok", "rejected"]


def test_sweep_section_required(tmp_path):
    assert main(["sweep", "--config", _write(tmp_path, _small_ex1())]) == EXIT_CONFIG
