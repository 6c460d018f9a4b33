import csv
import json

import numpy as np
import pytest

from ctmsruc.cli import main
from ctmsruc.fleet import Fleet, SampleDay, save_fleet, write_sample_days
from ctmsruc.scenario import save_tree
from uc_cases import gen, tiny_instance


def constant_days(values, H=2):
    minutes = np.arange(0, 60 * H, 5)
    return [SampleDay(f"c{k}", np.column_stack([minutes, np.full(minutes.size, float(v))]))
            for k, v in enumerate(values)]


@pytest.fixture
def tiny_workdir(tmp_path):
    """Workdir holding tiny chain trees for both profiles, a one-unit fleet and test days."""
    save_tree(tiny_instance(3, 2)[0], tmp_path / "tree_ct.json")
    save_tree(tiny_instance(1, 1)[0], tmp_path / "tree_dt.json")
    save_fleet(tiny_instance()[1], tmp_path / "fleet.toml")
    write_sample_days(constant_days([50, 50, 50]), tmp_path / "test_days.csv")
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_fit_writes_both_profiles(tmp_path):
    load = tmp_path / "load.csv"
    assert run("synth", "--out", load, "--days", 10, "--hours", 6) == 0
    assert run("fit", "--load", load, "--workdir", tmp_path / "w", "--hours", 6) == 0
    ct = json.loads((tmp_path / "w" / "splines_ct.json").read_text())
    dt = json.loads((tmp_path / "w" / "splines_dt.json").read_text())
    assert len(ct["splines"]) == len(dt["splines"]) == 10
    assert np.array(ct["splines"][0]["coeffs"]).shape == (6, 4)
    assert np.array(dt["splines"][0]["coeffs"]).shape == (6, 2)
    split = json.loads((tmp_path / "w" / "split.json").read_text())
    assert len(split["train"]) == 7 and len(split["test"]) == 3


def test_fit_constant_day(tmp_path):
    write_sample_days(constant_days([42.0, 42.0]), tmp_path / "load.csv")
    assert run("fit", "--load", tmp_path / "load.csv", "--workdir", tmp_path, "--hours", 2) == 0
    rec = json.loads((tmp_path / "splines_ct.json").read_text())["splines"][0]
    np.testing.assert_allclose(rec["coeffs"], 42.0, atol=1e-9)
    assert rec["residual"] <= 1e-9


def test_tree_chain_and_zero_band(tmp_path):
    write_sample_days(constant_days([30.0] * 5, H=3), tmp_path / "load.csv")
    assert run("fit", "--load", tmp_path / "load.csv", "--workdir", tmp_path, "--hours", 3) == 0
    assert run("tree", "--workdir", tmp_path, "--hours", 3, "--stages", "1") == 0
    tree = json.loads((tmp_path / "tree_ct.json").read_text())
    assert tree["stage_counts"] == [1, 1, 1]
    assert all(np.allclose(n["eps"], 0) for n in tree["nodes"][1:])
    assert (tmp_path / "tree_ct.svg").read_text().lstrip().startswith("<?xml")


def test_solve_tiny(tiny_workdir):
    w = tiny_workdir
    assert run("solve", "--workdir", w, "--fleet", w / "fleet.toml", "--gap", 0, "--rho", 0, "--hours", 2) == 0
    for label in ("ct", "dt"):
        doc = json.loads((w / f"solution_{label}.json").read_text())
        assert doc["objective"] == pytest.approx(1010)
        assert doc["status"] == "optimal-within-gap"
        assert set(doc["census"]) == set("bcdefgh")
        assert (w / f"model_{label}.mps").exists()


def test_export_only(tiny_workdir):
    w = tiny_workdir
    assert run("solve", "--workdir", w, "--fleet", w / "fleet.toml", "--export-only") == 0
    assert (w / "model_ct.mps").exists() and (w / "model_dt.mps").exists()
    assert not (w / "solution_ct.json").exists()


def test_infeasible_exit_code(tiny_workdir):
    w = tiny_workdir
    save_fleet(Fleet((gen("small", p_max=20.0),)), w / "small.toml")
    assert run("solve", "--workdir", w, "--fleet", w / "small.toml", "--gap", 0) == 2
    assert json.loads((w / "solution_ct.json").read_text())["status"] == "infeasible"


def test_eval_centroid_days(tiny_workdir, capsys):
    w = tiny_workdir
    common = ("--workdir", w, "--fleet", w / "fleet.toml", "--gap", 0, "--rho", 0, "--hours", 2)
    assert run("solve", *common) == 0
    assert run("eval", *common) == 0
    out = capsys.readouterr().out
    assert "infeasibility_rate" in out
    rows = {r[0]: r[1:] for r in csv.reader(open(w / "comparison.csv"))}
    assert rows["infeasibility_rate"] == ["0.0000", "0.0000"]
    for label in ("ct", "dt"):
        rep = json.loads((w / f"report_{label}.json").read_text())
        assert rep["total_testing"] == rep["mean_testing"] + rep["reserve_cost"]
        assert rep["days"][0]["realized_cost"] == pytest.approx(1010)
    for name in ("costs.svg", "band_ct.svg", "band_dt.svg", "bands/band_ct_c0.csv"):
        assert (w / name).exists()


def test_eval_empty_tests(tiny_workdir):
    w = tiny_workdir
    common = ("--workdir", w, "--fleet", w / "fleet.toml", "--gap", 0, "--hours", 2)
    assert run("solve", *common) == 0
    (w / "empty.csv").write_text("day_id,minute,mw\n")
    assert run("eval", *common, "--tests", w / "empty.csv") == 3


def test_input_errors(tmp_path, capsys):
    assert run("fit", "--load", tmp_path / "nope.csv", "--workdir", tmp_path) == 3
    (tmp_path / "bad.csv").write_text("day,minute\n")
    assert run("fit", "--load", tmp_path / "bad.csv", "--workdir", tmp_path) == 3
    assert run("tree", "--workdir", tmp_path / "empty") == 3
    assert run("fit", "--degree", 1, "--continuity", 2, "--workdir", tmp_path) == 3
    assert "error:" in capsys.readouterr().err


def test_reproducible_outputs(tmp_path):
    load = tmp_path / "load.csv"
    assert run("synth", "--out", load, "--days", 8, "--hours", 3, "--seed", 4) == 0
    fleet = tmp_path / "fleet.toml"
    save_fleet(Fleet((gen("a", p_max=400, energy=10, commit=5, res_up=1, res_down=1),
                      gen("b", p_max=400, energy=20, commit=1, res_up=2, res_down=2))), fleet)
    outputs = []
    for k in range(2):
        w = tmp_path / f"w{k}"
        args = ("--load", load, "--fleet", fleet, "--workdir", w, "--hours", 3, "--stages", "1,2",
                "--reproducible", "--gap", 0)
        assert run("run", *args) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(w.iterdir()) if p.suffix in (".json", ".csv", ".mps")})
    assert outputs[0] == outputs[1]
    assert "created" not in json.loads(outputs[0]["solution_ct.json"])
