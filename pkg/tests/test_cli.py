import csv
import io
import json

import pytest

from steplike.cli import main

STEP = {"v_minus": 1, "v_plus": 0, "breakpoints": [0], "values": []}
BARRIER = {"v_minus": 4, "v_plus": 0, "breakpoints": [0, 1], "values": [8]}


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, doc in (("step", STEP), ("barrier", BARRIER)):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        out[name] = str(p)
    return out


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_identities_on_pure_step(files, capsys):
    code, out, _ = run(capsys, "identities", "--potential", files["step"])
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and rep["max_residual"] <= 1e-12
    assert set(rep["residuals"]) == {"pp", "pm", "mp", "mm"}


def test_count_on_pure_step(files, capsys):
    code, out, _ = run(capsys, "count", "--potential", files["step"], "--rmax", "20")
    rep = json.loads(out)
    assert code == 0 and rep["predicted_slope"] == 0.0 and rep["fitted_slope"] == 0.0


def test_empty_region(files, capsys):
    code, out, _ = run(capsys, "resonances", "--potential", files["barrier"], "--sheet", "mm",
                       "--rect", "-3", "-2", "1", "2")
    assert code == 0
    assert list(csv.DictReader(io.StringIO(out))) == []


def test_resonances_byte_identical_reruns(files, tmp_path, capsys):
    args = ["resonances", "--potential", files["barrier"], "--rect", "0", "200", "-30", "-0.5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.read_text())))
    assert rows and {r["s_plus"] + r["s_minus"] for r in rows} <= {"-1-1", "-11", "1-1"}
    assert len(rows[0]["re_z"].replace("-", "").replace(".", "").split("e")[0]) >= 15


def test_json_resonances_and_scatter(files, capsys):
    code, out, _ = run(capsys, "resonances", "--potential", files["barrier"], "--sheet", "mm",
                       "--rect", "0", "100", "-20", "-0.5", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["resonances"] and doc["unresolved"] == []
    code, out, _ = run(capsys, "scatter", "--potential", files["step"], "--z", "2", "0.5")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert float(rows[0]["re_T_minus"]) == pytest.approx(1.171573, abs=1e-6)
    assert float(rows[1]["im_R_minus"]) == pytest.approx(-1.0, abs=1e-12)


def test_identity_seed_reproducible(files, capsys):
    outs = [run(capsys, "identities", "--potential", files["barrier"], "--seed", "7", "--n", "10")[1]
            for _ in range(2)]
    assert outs[0] == outs[1]
    other = run(capsys, "identities", "--potential", files["barrier"], "--seed", "8", "--n", "10")[1]
    assert other != outs[0]


def test_config_file_and_override(files, tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"potential": "step.json", "rmax": 10, "sheet": ["mm"]}))
    code, out, _ = run(capsys, "count", "--config", str(cfg))
    assert code == 0 and json.loads(out)["certified_radius"] == 10.0
    code, out, _ = run(capsys, "count", "--config", str(cfg), "--rmax", "12")
    assert json.loads(out)["certified_radius"] == 12.0


def test_config_schema_violation(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"rmax": -1}))
    code, _, err = run(capsys, "count", "--config", str(cfg))
    assert code == 2 and json.loads(err)["error"] == "invalid_input"
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert run(capsys, "count", "--config", str(cfg))[0] == 2


def test_missing_and_invalid_potential(files, tmp_path, capsys):
    code, _, err = run(capsys, "scatter", "--potential", str(tmp_path / "nope.json"), "--z", "2")
    assert code == 2 and json.loads(err)["field"] == "potential"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"v_minus": 0, "v_plus": 1, "breakpoints": [0], "values": []}))
    code, _, err = run(capsys, "scatter", "--potential", str(bad), "--z", "2")
    assert code == 2 and json.loads(err)["error"] == "invalid_potential"


def test_indicator_and_inverse_check(files, capsys):
    code, out, _ = run(capsys, "indicator", "--potential", files["barrier"], "--phi", "1.5707963267948966")
    doc = json.loads(out)
    assert code == 0 and doc["hull_length"] == 1.0 and len(doc["estimates"]) == 1
    code, out, _ = run(capsys, "inverse-check", "--potential", files["barrier"], "--zrange", "5", "50", "200")
    doc = json.loads(out)
    assert code == 0 and doc["recovery"]["max_abs_error"] < 1e-10
    assert doc["normalization"]["case"] is None
