import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from qgraph import cli
from qgraph.continuation import NewtonError
from qgraph.discretize import make_system
from qgraph.graphs import build_dumbbell, build_interval, graph_to_json


def _rows(path):
    return list(csv.DictReader(open(path)))


def test_spectrum_dumbbell(tmp_path):
    out = tmp_path / "spectrum.csv"
    assert cli.main(["spectrum", "--L", "2", "--kmax", "2.5", "--out", str(out)]) == 0
    rows = _rows(out)
    loops = [r for r in rows if r["family"] == "loop-localized"]
    assert [float(r["lambda"]) for r in loops] == [1.0, 4.0]
    assert all(r["multiplicity"] == "2" for r in loops)
    man = json.loads((tmp_path / "spectrum.manifest.json").read_text())
    assert man["tool"] == "qgraph" and man["subcommand"] == "spectrum"
    assert man["outputs"] == [str(out)]
    assert man["parameters"]["kmax"] == 2.5


def test_spectrum_from_graph_file(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    gf = tmp_path / "g.json"
    gf.write_text(graph_to_json(build_interval(math.pi)))
    assert cli.main(["spectrum", "--graph-file", str(gf), "--kmax", "3.2"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [round(float(r["lambda"]), 2) for r in rows] == [0.0, 1.0, 4.0, 9.0]
    assert (tmp_path / "qgraph-spectrum.manifest.json").exists()


@pytest.mark.parametrize("argv", [
    ["continue", "--L", "2", "--lambda-window", "0:-1", "--out", "x.csv"],
    ["continue", "--L", "2", "--lambda-window", "nonsense", "--out", "x.csv"],
    ["spectrum", "--L", "-2", "--kmax", "1"],
    ["spectrum", "--L", "2", "--kmax", "0"],
    ["enumerate", "--lambda", "-1", "--L", "2", "--mode", "complete"],
    ["classify", "--branch", "missing.csv", "--index", "0"],
    ["render", "--branch", "missing.csv", "--out", "x.svg"],
])
def test_invalid_configuration_exit_code(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2


def test_usage_errors_exit_2(capsys):
    assert cli.main(["spectrum"]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_thread_variable_validated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("QGRAPH_THREADS", "0")
    assert cli.main(["bowtie", "--events"]) == 2
    monkeypatch.setenv("QGRAPH_THREADS", "two")
    assert cli.main(["bowtie", "--events"]) == 2


def test_window_accepts_negative_values():
    argv = cli._join_negative(["continue", "--lambda-window", "-3:0"])
    assert argv == ["continue", "--lambda-window=-3:0"]
    assert cli.parse_window("-3:-1") == (-3.0, -1.0)


@pytest.fixture(scope="module")
def continued(tmp_path_factory):
    d = tmp_path_factory.mktemp("cont")
    out = d / "branch.csv"
    code = cli.main(["continue", "--L", "2", "--lambda-window", "-0.6:0", "--solutions",
                     str(d / "sol"), "--out", str(out), "--plot"])
    return code, d, out


def test_continue_outputs(continued):
    code, d, out = continued
    assert code == 0
    rows = _rows(out)
    bps = [r for r in rows if "branch_point" in r["tags"]]
    assert len(bps) == 3
    man = json.loads((d / "branch.manifest.json").read_text())
    assert (d / "branch.svg").exists() and (d / "branch_start.svg").exists()
    assert len(list((d / "sol").glob("point_*.csv"))) == len(rows)
    assert set(man["outputs"]) >= {str(out), str(d / "branch.svg")}


def test_solution_csv_round_trip(continued):
    _, d, out = continued
    rows = _rows(out)
    i = next(k for k, r in enumerate(rows) if "branch_point" in r["tags"])
    g = build_dumbbell(2.0)
    sys = make_system(g, 0.05)
    phi = cli._read_solution(d / "sol" / f"point_{i:05d}.csv", g, sys.intervals)
    assert np.max(np.abs(sys.residual(phi, float(rows[i]["lambda"])))) <= 1e-10


def test_classify_from_branch(continued, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _, d, out = continued
    rows = _rows(out)
    idx = [k for k, r in enumerate(rows) if "branch_point" in r["tags"]]
    assert cli.main(["classify", "--branch", str(out), "--index", str(idx[0])]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "pitchfork"
    assert doc["lambda0"] == pytest.approx(-0.029285, abs=1e-5)
    assert (tmp_path / "qgraph-classify.manifest.json").exists()
    assert cli.main(["classify", "--branch", str(out), "--index", str(idx[1]),
                     "--out", str(d / "c.json")]) == 0
    assert json.loads((d / "c.json").read_text())["kind"] == "transcritical"
    assert (d / "c.manifest.json").exists()


def test_numerical_failure_exit_3(tmp_path):
    out = tmp_path / "b.csv"
    assert cli.main(["continue", "--L", "2", "--lambda-window", "-0.3:0", "--stencil", "one-sided",
                     "--out", str(out)]) == 0
    rows = _rows(out)
    i = next(k for k, r in enumerate(rows) if "branch_point" in r["tags"])
    assert cli.main(["classify", "--branch", str(out), "--index", str(i),
                     "--out", str(tmp_path / "c.json")]) == 3
    diag = json.loads((tmp_path / "qgraph-classify.diagnostic.json").read_text())
    assert diag["error"] in ("NewtonError", "ConvergenceError")


def test_failure_mapping(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)

    def boom(args, cfg):
        raise NewtonError("singular")

    monkeypatch.setitem(cli.COMMANDS, "bowtie", boom)
    assert cli.main(["bowtie"]) == 3
    assert (tmp_path / "qgraph-bowtie.diagnostic.json").exists()


def test_bowtie_events_stdout(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["bowtie", "--events"]) == 0
    ev = json.loads(capsys.readouterr().out)
    kinds = {(e["kind"], round(e["omega"], 9), round(e["Q"], 9)) for e in ev}
    assert ("pitchfork", -0.5, 2.5) in kinds and ("transcritical", -2.5, 12.5) in kinds


def test_bowtie_outputs_and_render(tmp_path):
    d = tmp_path / "bt"
    assert cli.main(["bowtie", "--events", "--samples", "50", "--out", str(d), "--plot"]) == 0
    assert {p.name for p in d.iterdir()} == {"branches.csv", "events.json", "bowtie.svg", "manifest.json"}
    svg = tmp_path / "r.svg"
    assert cli.main(["render", "--branch", str(d / "branches.csv"), "--out", str(svg)]) == 0
    assert svg.read_text().count("<polyline") == 7


def test_enumerate_complete(tmp_path):
    d = tmp_path / "en"
    assert cli.main(["enumerate", "--lambda", "-1", "--L", "2", "--mode", "complete", "--out", str(d)]) == 0
    man = json.loads((d / "manifest.json").read_text())
    assert man["solutions"] and man["schedule"]
    assert all(s["fd_residual"] <= 1e-8 for s in man["solutions"])
    assert len(list(d.glob("triple_*.csv"))) == len(man["solutions"])


def test_enumerate_is_deterministic_across_threads(tmp_path, monkeypatch):
    docs = []
    for n in ("1", "3"):
        monkeypatch.setenv("QGRAPH_THREADS", n)
        d = tmp_path / f"t{n}"
        assert cli.main(["enumerate", "--lambda", "0.5", "--L", "2", "--mode", "complete", "--out", str(d)]) == 0
        docs.append(json.loads((d / "manifest.json").read_text())["solutions"])
    assert docs[0] == docs[1]
