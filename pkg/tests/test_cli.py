import json
import subprocess
import sys

import numpy as np
import pytest

from jnlab.cli import _emit_reports, load_config, main
from jnlab.report import CheckReport


def run(*argv):
    return main(list(argv))


def test_gen_grid_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert run("gen", "random-uniform", "--dim", "2", "--depth", "4",
               "--seed", "5", "--out", str(a)) == 0
    assert run("gen", "random-uniform", "--dim", "2", "--depth", "4",
               "--seed", "5", "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_space_and_values(tmp_path):
    sp = tmp_path / "s.csv"
    vals = tmp_path / "v.csv"
    assert run("gen", "tree-graph", "--m", "15", "--seed", "3",
               "--out", str(sp)) == 0
    assert run("gen", "log-distance", "--space", str(sp),
               "--out", str(vals)) == 0
    from jnlab.metric import space_from_csv, values_from_csv
    s = space_from_csv(sp)
    f = values_from_csv(vals)
    assert s.m == 15 and f.shape == (15,)


def test_gen_requires_out():
    assert run("gen", "constant") == 2


def test_gen_unknown_kind(tmp_path):
    assert run("gen", "sawtooth", "--out", str(tmp_path / "x.csv")) == 2


def test_config_precedence(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("depth = 3\nseed = 9\n# comment\ndim = 1\n")
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    c = tmp_path / "c.csv"
    run("gen", "random-uniform", "--config", str(conf), "--out", str(a))
    run("gen", "random-uniform", "--depth", "3", "--seed", "9", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    # flag beats config
    run("gen", "random-uniform", "--config", str(conf), "--seed", "10",
        "--out", str(c))
    assert a.read_bytes() != c.read_bytes()


def test_config_rejects_unknown_key(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("depht = 3\n")
    with pytest.raises(ValueError):
        load_config(str(conf))
    assert run("gen", "constant", "--config", str(conf),
               "--out", str(tmp_path / "x.csv")) == 2


def test_config_reports_line_numbers(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("depth = 3\nnonsense\n")
    with pytest.raises(ValueError, match=":2:"):
        load_config(str(conf))


def test_analyze_step_hand_numbers(tmp_path):
    out = tmp_path / "a.json"
    assert run("analyze", "step", "--depth", "1", "--p", "2",
               "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert data["jnp"]["norm"] == 0.5
    assert data["bmo"] == 0.5
    assert data["average"] == 0.5


def test_analyze_constant_all_zero(tmp_path):
    out = tmp_path / "a.json"
    assert run("analyze", "constant", "--depth", "4", "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert data["bmo"] == 0.0
    assert data["jnp"]["value"] == 0.0
    assert data["weak_lp"] == 0.0


def test_analyze_grid_file_round_trip(tmp_path):
    grid = tmp_path / "g.csv"
    out = tmp_path / "a.json"
    run("gen", "random-martingale", "--depth", "5", "--seed", "2",
        "--out", str(grid))
    assert run("analyze", str(grid), "--p", "2", "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert data["jnp"]["value"] > 0


def test_analyze_notlp_csv(tmp_path):
    out = tmp_path / "terms.csv"
    assert run("analyze", "notlp", "--p", "2", "--terms", "6",
               "--depth", "12", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "j,term,partial"
    assert len(lines) == 7
    last = lines[-1].split(",")
    assert int(last[0]) == 5
    assert float(last[2]) > float(lines[1].split(",")[2])


def test_analyze_space(tmp_path):
    out = tmp_path / "a.json"
    assert run("analyze", "--space", "line", "--m", "14",
               "--values-kind", "log-distance", "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert data["doubling"] == 3.0
    assert data["jnp_lower"]["value"] > 0
    assert data["m"] == 14


def test_analyze_needs_a_source():
    assert run("analyze") == 2


def test_analyze_curve(tmp_path):
    out = tmp_path / "a.json"
    curve = tmp_path / "curve.csv"
    assert run("analyze", "log-singularity", "--depth", "8", "--out", str(out),
               "--curve-out", str(curve)) == 0
    lines = curve.read_text().splitlines()
    assert lines[0] == "lambda,measure"
    vals = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_cz_dyadic_json(tmp_path):
    out = tmp_path / "cz.json"
    assert run("cz", "random-uniform", "--depth", "6", "--seed", "1",
               "--lam", "0.7", "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert data["lambda"] == 0.7
    assert data["n_cubes"] == len(data["cubes"])
    for cube in data["cubes"]:
        assert 0.7 < cube["average"] <= 2 * 0.7


def test_cz_metric_csv(tmp_path):
    out = tmp_path / "cz.csv"
    code = run("cz", "--space", "grid2d", "--side", "4",
               "--values-kind", "distance", "--lam", "3.4",
               "--format", "csv", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "center,radius,average,average5,measure"
    assert len(lines) > 1
    for line in lines[1:]:
        fields = line.split(",")
        int(fields[0])
        for x in fields[1:]:
            assert float(x) == float(x)  # plain decimal, no repr wrappers


def test_cz_dyadic_csv_rows_parse(tmp_path):
    out = tmp_path / "cz.csv"
    assert run("cz", "random-uniform", "--depth", "5", "--seed", "1",
               "--lam", "0.7", "--format", "csv", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "depth,index,average,measure"
    assert len(lines) > 1
    for line in lines[1:]:
        depth, index, avg, measure = line.split(",")
        int(depth)
        assert all(part.isdigit() for part in index.split(";"))
        assert 0.7 < float(avg) <= 1.4
        assert 0 < float(measure) < 1


def test_cz_requires_lam():
    assert run("cz", "step", "--depth", "3") == 2


def test_cz_lam_below_average():
    assert run("cz", "constant", "--depth", "3", "--lam", "0.5") == 2


def test_verify_jn_dyadic(tmp_path):
    out = tmp_path / "r.json"
    assert run("verify", "jn-dyadic", "step", "--depth", "4", "--p", "2",
               "--n-lambda", "25", "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert len(data) == 25
    assert all(r["pass"] for r in data)


def test_verify_good_lambda(tmp_path):
    out = tmp_path / "r.json"
    assert run("verify", "good-lambda", "random-uniform", "--depth", "4",
               "--seed", "3", "--p", "2", "--lam", "2.0",
               "--out", str(out)) == 0


def test_verify_mainresult_deterministic(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    args = ("verify", "mainresult", "--space", "random-cloud", "--m", "18",
            "--seed", "4", "--values-kind", "random-values", "--p", "2",
            "--n-lambda", "10")
    assert run(*args, "--out", str(a)) == 0
    assert run(*args, "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_verify_csv_format(tmp_path):
    out = tmp_path / "r.csv"
    assert run("verify", "bmo", "--space", "line", "--m", "16",
               "--values-kind", "log-distance", "--format", "csv",
               "--n-lambda", "12", "--out", str(out)) == 0
    assert out.read_text().splitlines()[0] == "lambda,lhs,rhs"


def test_verify_toiterate_requires_lam():
    assert run("verify", "toiterate", "--space", "line", "--m", "10",
               "--values-kind", "log-distance") == 2


def test_emit_reports_exit_code_on_failure(tmp_path, capsys):
    bad = CheckReport(claim="x", lhs=2.0, rhs=1.0, constant=1.0)
    good = CheckReport(claim="x", lhs=0.0, rhs=1.0, constant=1.0)
    cfg = {"out": str(tmp_path / "r.json"), "format": "json"}
    assert _emit_reports([good, bad], cfg) == 1
    assert "FAIL: 1 of 2" in capsys.readouterr().err
    assert _emit_reports([good], cfg) == 0


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "jnlab.cli", "analyze", "step",
                          "--depth", "1", "--p", "2"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["bmo"] == 0.5
