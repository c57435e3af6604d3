import json
import os
import subprocess
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from cccp.cli import CSV_COLUMNS, default_config, main
from cccp.io import solution_z

HERE = Path(__file__).parent


def data_file(name):
    return str(resources.files("cccp") / "data" / name)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def solve_to(tmp_path, name, *extra):
    out = tmp_path / "result.json"
    code = main(["solve", data_file(name), "--out", str(out), *extra])
    return code, json.loads(out.read_text())


def test_individual_matches_golden(tmp_path):
    golden = json.loads((HERE / "data" / "golden_individual.json").read_text())
    code, res = solve_to(tmp_path, "example_individual.json")
    assert code == 0
    assert res["diagnostics"]["status"] == "Optimal"
    assert abs(res["objective"] - golden["objective"]) <= 1e-6
    np.testing.assert_allclose(res["solution"]["z_re"], golden["z_re"], atol=1e-6)
    np.testing.assert_allclose(res["solution"]["z_im"], golden["z_im"], atol=1e-6)


def test_joint_bounds_ordered(tmp_path):
    code, res = solve_to(tmp_path, "example_joint.json")
    assert code == 0
    b = res["bounds"]
    assert b["lower"] <= b["upper"]
    assert abs(b["gap"] - (b["upper"] - b["lower"])) <= 1e-12
    assert res["method"] == "joint-bounds"
    assert len(res["solution"]["y"]) == 2


@pytest.mark.parametrize("method", ["joint-lower", "joint-upper", "joint-grid"])
def test_joint_methods(tmp_path, method):
    code, res = solve_to(tmp_path, "example_joint.json", "--method", method)
    assert code == 0
    assert res["objective"] is not None
    assert abs(sum(res["solution"]["y"]) - 1.0) <= 1e-7


def write_problem(tmp_path, mutate):
    doc = json.loads(Path(data_file("example_individual.json")).read_text())
    mutate(doc)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_bad_level_reports_field_path(tmp_path, capsys):
    path = write_problem(tmp_path, lambda d: d["rows"][0].__setitem__("p", 1.2))
    code, _, err = run(["solve", path], capsys)
    assert code == 1
    assert "rows[0].p" in err


def test_missing_field_and_bad_json(tmp_path, capsys):
    path = write_problem(tmp_path, lambda d: d["rows"][1].pop("p"))
    code, _, err = run(["solve", path], capsys)
    assert code == 1 and "rows[1].p" in err
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert run(["solve", str(bad)], capsys)[0] == 1
    assert run(["solve", str(tmp_path / "missing.json")], capsys)[0] == 1


def test_method_kind_mismatch(capsys):
    code, _, err = run(["solve", data_file("example_individual.json"), "--method", "joint-grid"], capsys)
    assert code == 1


def test_infeasible_exit_code(tmp_path, capsys):
    def squeeze(d):
        d["rows"][0]["b"]["mean_re"] = -50.0
    code, out, _ = run(["solve", write_problem(tmp_path, squeeze)], capsys)
    assert code == 2
    assert json.loads(out)["solution"] is None


def test_result_round_trips_through_validate(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["solve", data_file("example_individual.json"), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    again = json.loads(json.dumps(res))
    assert again == res
    z = solution_z(res["solution"])
    assert z.dtype == complex and z.shape == (1,)
    code, text, _ = run(["validate", data_file("example_individual.json"), "--solution", str(out),
                         "--samples", "100000"], capsys)
    rep = json.loads(text)
    assert code == 0 and rep["passed"]
    assert all(r["probability"] >= r["target"] - 0.01 for r in rep["rows"])


def test_validate_joint_and_mismatch(tmp_path, capsys):
    out = tmp_path / "j.json"
    main(["solve", data_file("example_joint.json"), "--out", str(out)])
    code, text, _ = run(["validate", data_file("example_joint.json"), "--solution", str(out)], capsys)
    rep = json.loads(text)
    assert code == 0 and rep["joint"]["probability"] >= 0.9 - 0.01
    # two-dimensional solution against a one-dimensional problem
    code, _, err = run(["validate", data_file("example_individual.json"), "--solution", str(out)], capsys)
    assert code == 1 and "z_re" in err


def test_validate_below_target(tmp_path, capsys):
    out = tmp_path / "far.json"
    out.write_text(json.dumps({"solution": {"z_re": [3.0], "z_im": [3.0]}}))
    code, text, _ = run(["validate", data_file("example_individual.json"), "--solution", str(out),
                         "--samples", "10000"], capsys)
    assert code == 2 and not json.loads(text)["passed"]


def test_solve_with_validation_block(tmp_path):
    code, res = solve_to(tmp_path, "example_joint.json", "--validate-samples", "20000")
    assert code == 0
    assert res["validation"]["count"] == 20000
    assert res["validation"]["joint"] is not None


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CCCP_SEED", "17")
    code, res = solve_to(tmp_path, "example_individual.json")
    assert res["seed"] == 17
    monkeypatch.setenv("CCCP_SEED", "x")
    assert main(["solve", data_file("example_individual.json")]) == 1


def test_default_configs():
    fig1 = default_config("fig1")
    assert (fig1["sensors"], fig1["snapshots"], fig1["p"], fig1["inr_db"]) == (8, 100, 0.95, [5, 20, 40])
    assert fig1["runs"] == 200
    assert fig1["mismatch_variance_per_sensor"] == 0.3
    assert [i["doa_deg"] for i in fig1["interferers"]] == [30, 50] and fig1["doa_deg"] == 3
    fig2 = default_config("fig2")
    assert (fig2["alpha"], fig2["inr_db"], fig2["runs"]) == (0.7, [20], 100)


@pytest.mark.parametrize("experiment", ["fig1", "fig2"])
def test_beamform_smoke_and_bytes(tmp_path, experiment):
    outs = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        d.mkdir()
        t0 = time.perf_counter()
        assert main(["beamform", "--experiment", experiment, "--runs", "2", "--out", str(d)]) == 0
        assert time.perf_counter() - t0 < 60
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    csvs = [n for n in outs[0] if n.endswith(".csv")]
    assert len(csvs) == (3 if experiment == "fig1" else 1)
    header = outs[0][csvs[0]].decode().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    manifest = json.loads(outs[0][f"{experiment}_manifest.json"])
    assert manifest["files"] == sorted(csvs, key=lambda n: float(n.split("inr")[1][:-6]))


def test_beamform_seed_env_changes_output(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    conf = default_config("fig1")
    conf.update(inr_db=[20], snr_db=[0.0, 10.0], runs=2)
    cfg.write_text(json.dumps(conf))
    texts = []
    for seed in ("1", "2"):
        monkeypatch.setenv("CCCP_SEED", seed)
        d = tmp_path / seed
        d.mkdir()
        assert main(["beamform", "--config", str(cfg), "--out", str(d)]) == 0
        texts.append((d / "fig1_inr20db.csv").read_text())
        assert json.loads((d / "fig1_manifest.json").read_text())["seed"] == int(seed)
    assert texts[0] != texts[1]


def test_beamform_bad_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sensors": 1}))
    assert run(["beamform", "--config", str(cfg), "--out", str(tmp_path)], capsys)[0] == 1
    cfg.write_text(json.dumps({"runs": 1}))
    assert run(["beamform", "--experiment", "fig2", "--config", str(cfg), "--out", str(tmp_path)], capsys)[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cccp", "--version"], capture_output=True, text=True,
                          env={**os.environ, "PYTHONPATH": str(HERE.parent / "src")})
    assert proc.returncode == 0 and proc.stdout.startswith("cccp ")
