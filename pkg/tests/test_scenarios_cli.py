import json
import subprocess
import sys
import time

import numpy as np
import pytest

from polysweep.cli import main, run
from polysweep.errors import ConfigError
from polysweep.scenarios import load_scenario, lookup, registry, scenario_from_dict
from polysweep.sweeping import read_trajectory, verify_feasible


CONFIG = {
    "id": "file_box",
    "dims": {"n": 2, "m": 2},
    "horizon": {"T": 1.0, "tau": 0.0, "k": 20},
    "x0": [1.0, 1.0],
    "mode": "fixed_u",
    "cost": {"terminal": {"kind": "quadratic_half", "center": [0.0, 0.0]},
             "l3": [{"on": "bdot", "kind": "quadratic", "weight": 0.5}]},
    "controls": {"u_init": [[1.0, 0.0], [0.0, 1.0]], "b_init": [1.0, 1.0], "fixed_u": True},
    "solver": {"max_iter": 100, "seed": 3},
}


# --- registry ---------------------------------------------------------------


def test_registry_contents():
    ids = [e.id for e in registry()]
    assert len(ids) >= 7 and len(set(ids)) == len(ids)
    for need in ("ex7_3", "ex7_4", "ex7_5", "ex7_6", "play_stop", "elasto_toy", "degenerate_2_3"):
        assert need in ids
    for e in registry():
        assert e.build().id == e.id
        assert e.reference.source


def test_lookup_pushing_problem():
    sc = lookup("ex7_3").build()
    assert (sc.n, sc.m, sc.T) == (1, 1, 1.0) and sc.x0.tolist() == [0.0]
    assert sc.cost.terminal.value(np.array([[0.0]])) == pytest.approx(0.5)
    assert sc.cost.l3[0].value(np.array([[2.0]]), np.zeros(1)) == pytest.approx(2.0)


def test_lookup_planar_box():
    sc = lookup("ex7_6").build()
    assert (sc.n, sc.m) == (2, 2) and sc.x0.tolist() == [1.0, 1.0]
    assert sc.cost.terminal.value(np.array([[1.0, 1.0]])) == pytest.approx(1.0)


def test_lookup_missing():
    assert lookup("missing") is None


# --- configuration files ----------------------------------------------------------


def test_json_and_toml_configs_agree(tmp_path):
    pj = tmp_path / "box.json"
    pj.write_text(json.dumps(CONFIG))
    pt = tmp_path / "box.toml"
    pt.write_text("""
id = "file_box"
x0 = [1.0, 1.0]
mode = "fixed_u"
[dims]
n = 2
m = 2
[horizon]
T = 1.0
k = 20
[cost.terminal]
kind = "quadratic_half"
center = [0.0, 0.0]
[[cost.l3]]
on = "bdot"
weight = 0.5
[controls]
u_init = [[1.0, 0.0], [0.0, 1.0]]
b_init = [1.0, 1.0]
""")
    a, b = load_scenario(pj), load_scenario(pt)
    assert a.k == b.k == 20
    assert np.array_equal(a.controls().u_nodes, b.controls().u_nodes)
    assert a.solver.seed == 3


@pytest.mark.parametrize("bad", [{}, {"dims": {"n": 1, "m": 1}, "x0": [0.0]},
                                 {**CONFIG, "cost": {"l1": [{"kind": "abs"}]}}])
def test_bad_configs(bad):
    with pytest.raises(ConfigError):
        scenario_from_dict(bad)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.json")
    p = tmp_path / "broken.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_scenario(p)


# --- run ---------------------------------------------------------------------------


def test_run_optimize_pushing(tmp_path):
    rep = run("ex7_3", "optimize", k=200, out=tmp_path)
    assert rep.cost <= 0.26
    assert rep.gap == pytest.approx(rep.cost - 0.25)
    assert rep.exit_code == 0
    for name in ("trajectory.csv", "trace.csv", "report.json"):
        assert (tmp_path / name).exists()


def test_run_set_jump_reports_discontinuity(tmp_path):
    rep = run("degenerate_2_3", "simulate", k=50, out=tmp_path)
    assert rep.error["error"] == "DiscontinuityDetected"
    assert rep.exit_code == 2
    assert json.loads((tmp_path / "report.json").read_text())["error"] is not None


def test_run_play_stop_feasible(tmp_path):
    rep = run("play_stop", "simulate", k=100, out=tmp_path)
    assert rep.verdict is True
    x, ctrl = read_trajectory(tmp_path / "trajectory.csv")
    assert ctrl.b_nodes[:, 0] - 0.2 == pytest.approx(0.3 * np.sin(ctrl.mesh.nodes), abs=1e-12)
    assert verify_feasible(x, ctrl)


def test_run_certify_writes_certificate(tmp_path):
    rep = run("ex7_4", "certify", k=40, out=tmp_path)
    assert rep.verdict["verdict"] == "supported"
    assert (tmp_path / "certificate.csv").exists()
    again = run("ex7_4", "certify", k=40, out=tmp_path / "again",
                trajectory=str(tmp_path / "trajectory.csv"),
                certificate=str(tmp_path / "certificate.csv"))
    assert again.verdict["max_residual"] <= 1e-12


def test_run_scenario_file(tmp_path):
    p = tmp_path / "box.json"
    p.write_text(json.dumps(CONFIG))
    rep = run(str(p), "simulate", out=tmp_path / "out")
    assert rep.id == "file_box" and rep.exit_code == 0


def test_run_unknown_subcommand():
    with pytest.raises(ConfigError):
        run("ex7_3", "plot")


def test_csv_round_trip(tmp_path):
    run("elasto_toy", "simulate", k=60, out=tmp_path)
    x, ctrl = read_trajectory(tmp_path / "trajectory.csv")
    sc = lookup("elasto_toy").build(k=60)
    ref = sc.controls(60)
    rel = np.abs(ctrl.b_nodes - ref.b_nodes) / np.maximum(np.abs(ref.b_nodes), 1e-300)
    assert rel.max() <= 1e-15


# --- command line ---------------------------------------------------------------------


def test_main_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--id", "ex7_3", "--k", "20", "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--id", "degenerate_2_3", "--out", str(tmp_path / "b")]) == 2
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["error"] == \
        "DiscontinuityDetected"
    assert main(["simulate", "--id", "nope"]) == 4
    assert main(["simulate", "--id", "ex7_3", "--param", "colour=blue"]) == 4


def test_reports_reproducible(tmp_path):
    args = ["optimize", "--id", "ex7_6", "--k", "30", "--seed", "1"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    for name in ("report.json", "trace.csv", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "polysweep.cli", "certify", "--id", "ex7_5",
                           "--k", "30", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["verdict"]["verdict"] == "not optimal"


@pytest.mark.parametrize("entry", [e.id for e in registry()])
def test_default_subcommand_runtime(entry, tmp_path):
    e = lookup(entry)
    t0 = time.perf_counter()
    rep = run(e, e.default_subcommand, out=tmp_path)
    assert time.perf_counter() - t0 < 30.0
    assert rep.exit_code in (0, 2)
