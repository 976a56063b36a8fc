import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from sfkit import io as sio
from sfkit.cli import main

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


def run(args, tmp, env=None):
    res = CliRunner().invoke(main, args + ["--out", str(tmp), "--deterministic"], env=env)
    manifest = json.loads((Path(tmp) / "manifest.json").read_text())
    return res.exit_code, manifest


def test_help_lists_subcommands():
    res = CliRunner().invoke(main, ["--help"])
    assert res.exit_code == 0
    for name in ("minkowski", "envelope", "solve", "sf", "caratheodory", "concentration", "constraints", "figure1"):
        assert name in res.output


def test_envelope_command(tmp_path):
    code, man = run(["envelope", "--in", str(DATA / "sqrt_abs.json"), "--rho-k", "2"], tmp_path)
    assert code == 0 and man["passed"]
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["rho"] == pytest.approx(0.25)
    header, rows = sio.read_csv(tmp_path / "envelope.csv")
    assert header == ["x0", "f", "envelope", "gap"] and len(rows) == 201
    assert sorted(man["outputs"]) == ["envelope.csv", "manifest.json", "report.json"]


def test_minkowski_single_set_identity(tmp_path):
    sets = tmp_path / "one.json"
    sets.write_text(json.dumps({"label": "a", "dim": 2, "points": [[0, 0], [1, 0], [0, 1]]}))
    code, man = run(["minkowski", "--in", str(sets)], tmp_path / "out")
    assert code == 0 and man["checks"]["single_set_identity"]


def test_solve_convex_instance_gap_zero(tmp_path):
    from instances import convex_problem

    path = tmp_path / "p.json"
    path.write_text(json.dumps(convex_problem(np.random.default_rng(0)).to_json()))
    code, man = run(["solve", "--in", str(path), "--verify"], tmp_path / "out")
    cert = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert code == 0 and cert["bound"] == 0.0


def test_solve_approx(tmp_path):
    code, man = run(["solve", "--in", str(DATA / "problem.json"), "--cert", "approx", "--gamma", "0.5"], tmp_path)
    assert code == 0
    header, rows = sio.read_csv(tmp_path / "summary.csv")
    assert rows[0][0] == "approx"


def test_sf_and_caratheodory(tmp_path):
    assert run(["sf", "--family", str(DATA / "family.json")], tmp_path / "a")[0] == 0
    assert run(["sf", "--family", str(DATA / "family.json"), "--approx", "--eps", "0.5"], tmp_path / "b")[0] == 0
    for mode in ("exact", "fw", "sample"):
        code, _ = run(["caratheodory", "--mode", mode, "--atoms", str(DATA / "atoms.json"),
                       "--weights", str(DATA / "weights.json")], tmp_path / mode)
        assert code == 0
    out = json.loads((tmp_path / "exact" / "result.json").read_text())
    assert out["m"] <= 5 and set(out) >= {"indices", "weights", "error", "m"}


def test_concentration_two_cluster(tmp_path):
    code, man = run(["concentration", "--pop", str(DATA / "pop.json"), "--m", "80", "--eps", "0.1",
                     "--trials", "2000"], tmp_path)
    assert code == 0
    header, rows = sio.read_csv(tmp_path / "concentration.csv")
    assert header == ["N", "m", "epsilon", "bound_hs", "bound_bs", "empirical", "sigma_m"]


def test_constraints_generated_program(tmp_path):
    code, man = run(["constraints", "--k", "2", "--trials", "50"], tmp_path)
    assert "lp.json" in man["outputs"] and code in (0, 1)


def test_figure1_single_panel(tmp_path):
    code, man = run(["figure1", "--n", "1", "--samples", "64"], tmp_path)
    assert code == 0
    header, rows = sio.read_csv(tmp_path / "dH.csv")
    assert header == ["n", "d_H"] and rows[0][0] == "1"
    svg = (tmp_path / "panel_n1.svg").read_text()
    assert svg.startswith("<svg") and "generated" not in svg


def test_figure1_user_sets(tmp_path):
    code, man = run(["figure1", "--sets", str(DATA / "sets.json")], tmp_path)
    assert code == 0 and "panel_avg.svg" in man["outputs"]


def test_parse_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, man = run(["envelope", "--in", str(bad)], tmp_path / "out")
    assert code == 2 and man["exit_code"] == 2 and "InputError" in man["error"]
    code, man = run(["envelope", "--in", str(tmp_path / "missing.json")], tmp_path / "out2")
    assert code == 2
    bad.write_text(json.dumps({"grid": [1, 0], "values": [0, 0]}))
    assert run(["envelope", "--in", str(bad)], tmp_path / "out3")[0] == 2


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    res = CliRunner().invoke(main, ["envelope", "--in", str(DATA / "sqrt_abs.json"), "--out", str(blocker / "sub")])
    assert res.exit_code == 3


def test_check_failure_exit_code(tmp_path):
    # worst-case k-subset slack exceeds the bound for k = 3 on this program
    code, man = run(["constraints", "--lp", str(DATA / "lp.json"), "--k", "3", "--exhaustive"], tmp_path)
    assert code == 1 and man["checks"] == {"slack_le_bound_k=3": False}
    header, rows = sio.read_csv(tmp_path / "constraints.csv")
    assert rows[0][header.index("some_subset_ok")] == "1"


def test_seed_from_environment(tmp_path):
    _, man = run(["figure1", "--n", "1", "--samples", "16"], tmp_path, env={"SFKIT_SEED": "42"})
    assert man["config"]["seed"] == 42


def test_deterministic_outputs(tmp_path):
    args = ["concentration", "--pop", str(DATA / "pop.json"), "--m", "50", "--trials", "1000", "--seed", "9"]
    run(args, tmp_path / "a")
    run(args, tmp_path / "b")
    for name in ("concentration.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_csv_format(tmp_path):
    path = sio.write_csv(tmp_path / "x.csv", ["a", "b"], [[1, 0.1], {"a": True, "b": None}])
    assert path.read_bytes() == b"a,b\n1,0.1\n1,\n"


def test_atomic_write_leaves_no_temp_files(tmp_path):
    sio.write_json(tmp_path / "o.json", {"v": np.float64(1.5), "a": np.arange(2)})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["o.json"]
    assert json.loads((tmp_path / "o.json").read_text()) == {"a": [0, 1], "v": 1.5}


def test_schemas_validate_sample_data(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    schemas = ROOT / "schemas"
    pairs = {"sqrt_abs": "sampled_function", "problem": "problem", "family": "family", "pop": "population",
             "lp": "distance_program"}
    for data, schema in pairs.items():
        jsonschema.validate(json.loads((DATA / f"{data}.json").read_text()),
                            json.loads((schemas / f"{schema}.json").read_text()))
    _, man = run(["envelope", "--in", str(DATA / "sqrt_abs.json")], tmp_path)
    jsonschema.validate(man, json.loads((schemas / "manifest.json").read_text()))
