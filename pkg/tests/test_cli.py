import csv
import io

import numpy as np
import pytest

from factorprune.cli import main
from factorprune.exact import exact_moments
from factorprune.graph import FactorGraph, read_graph, write_graph
from factorprune.ising import ExperimentRecord


@pytest.fixture
def graph_file(tmp_path):
    g = FactorGraph.from_factors(3, [(0.5, (0,), (0, 1)), (-0.3, (1,), (0, 1)), (0.2, (2,), (0, 1)),
                                     (1.2, (0, 1), (1, 0, 0, 1)), (-0.8, (1, 2), (0, 1, 1, 0))])
    path = tmp_path / "g.fg"
    write_graph(g, path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, list(csv.DictReader(io.StringIO(out))), err


def test_infer_exact(capsys, graph_file):
    code, rows, _ = run(capsys, "infer", "--graph", graph_file, "--engine", "exact", "--precision", "full")
    assert code == 0
    ref = exact_moments(read_graph(graph_file), range(5))
    vars_ = [float(r["value"]) for r in rows if r["kind"] == "var"]
    facs = {int(r["id"]): float(r["value"]) for r in rows if r["kind"] == "factor"}
    np.testing.assert_array_equal(vars_, ref.var_marginals)
    assert facs == ref.mu


def test_prune_bp(capsys, graph_file):
    code, rows, _ = run(capsys, "prune", "--graph", graph_file, "--scheme", "min-joint", "--gamma", "0.01",
                        "--engine", "bp")
    assert code == 0 and len(rows) == 1
    row = rows[0]
    for key in ("n_added", "size_fraction", "predicted_d1", "seed_time", "score_time", "final_time"):
        assert row[key] != ""
    assert row["exact_kl"] == ""


def test_prune_exact_reports_kl_and_bounds(capsys, graph_file):
    code, rows, _ = run(capsys, "prune", "--graph", graph_file, "--scheme", "min-div", "--budget", "4",
                        "--engine", "exact")
    row = rows[0]
    assert code == 0 and row["n_added"] == "1"
    assert float(row["bound_tight"]) >= float(row["exact_kl"]) - 1e-12
    assert float(row["bound_loose"]) >= float(row["bound_tight"])


def test_bound(capsys, graph_file):
    code, rows, _ = run(capsys, "bound", "--graph", graph_file, "--subset", "0,1,2,3")
    row = {k: float(v) for k, v in rows[0].items()}
    assert code == 0
    # one factor left out: tight bound is exact and the witness attains it
    assert row["tight"] == pytest.approx(row["exact_kl"], abs=1e-9)
    assert row["witness_divergence"] == pytest.approx(row["tight"], abs=1e-9)


def test_precision_full_round_trips(capsys, graph_file):
    _, rows, _ = run(capsys, "infer", "--graph", graph_file, "--engine", "exact", "--precision", "full")
    _, short, _ = run(capsys, "infer", "--graph", graph_file, "--engine", "exact")
    ref = exact_moments(read_graph(graph_file), range(5)).var_marginals
    assert [float(r["value"]) for r in rows[:3]] == list(ref)
    np.testing.assert_allclose([float(r["value"]) for r in short[:3]], ref, rtol=1e-9)


@pytest.mark.parametrize("argv", [
    ["prune", "--scheme", "min-joint", "--epsilon", "0.1"],
    ["prune", "--scheme", "min-joint"],
    ["prune", "--scheme", "min-joint", "--gamma", "0.1", "--budget", "3"],
    ["infer", "--damping", "1.5"],
])
def test_usage_errors(capsys, graph_file, argv):
    code, _, err = run(capsys, *argv, "--graph", graph_file)
    assert code == 1 and err


def test_input_errors(capsys, tmp_path):
    assert run(capsys, "infer", "--graph", tmp_path / "missing.fg")[0] == 2
    bad = tmp_path / "bad.fg"
    bad.write_text("fgv1\nvars 2\nfactor 1 2 0 1 100\n")
    code, _, err = run(capsys, "infer", "--graph", bad)
    assert code == 2 and "line 3" in err


def test_cap_violation(capsys, graph_file):
    code, _, err = run(capsys, "infer", "--graph", graph_file, "--engine", "exact", "--max-vars", "2")
    assert code == 3 and "cap" in err


def test_help_documents_format_and_budget(capsys):
    assert main(["prune", "--help"]) == 0
    out = capsys.readouterr().out
    assert "fgv1" in out and "counts the seed" in out


def test_ising_csv(capsys, tmp_path):
    out = tmp_path / "res.csv"
    code = main(["ising", "--size", "6", "--alphas", "1,5", "--instances", "2", "--scheme", "min-div",
                 "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    assert header == ExperimentRecord.field_names()
    assert len(rows) == 2 and rows[0][2] == rows[1][2]
