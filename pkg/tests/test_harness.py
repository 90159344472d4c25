import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ricciopt import benchmarks as bm
from ricciopt.cli import main
from ricciopt.config import load_config, parse_config, parse_value
from ricciopt.errors import InvalidInputError
from ricciopt.report import RunReport, emit_report, load_report, sanitize, to_json, write_csv


@pytest.fixture(scope="module")
def q1_compare():
    return bm.compare_baselines(bm.Q1())


def test_parse_values():
    assert parse_value("3") == 3 and parse_value("2.5") == 2.5
    assert parse_value("true") is True and parse_value("none") is None
    assert parse_value("1,2, 3") == [1, 2, 3] and parse_value("rk4") == "rk4"


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# Q1 variant\nsize = 16\nintegrator = euler  # cheaper\n\nstop-on = loss\n")
    assert load_config(p) == {"size": 16, "integrator": "euler", "stop_on": "loss"}
    with pytest.raises(InvalidInputError):
        parse_config("size 16")
    with pytest.raises(InvalidInputError):
        load_config(tmp_path / "missing.cfg")


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        bm.BenchmarkSpec.from_dict({"bogus": 1})
    with pytest.raises(InvalidInputError):
        bm.BenchmarkSpec(generator="torus").validate()
    with pytest.raises(InvalidInputError):
        bm.BenchmarkSpec(loss="hinge").validate()


@pytest.mark.parametrize("generator", bm.GENERATORS)
def test_generators(generator):
    spec = bm.BenchmarkSpec(generator=generator, size=16, chords=3, seed=2)
    graph, metric, theta0, loss = bm.build(spec)
    assert graph.vertex_count == 16 and theta0.shape == (16,)
    assert np.all(metric.g >= spec.g_floor)
    if generator == "random-regular":
        assert np.all(graph.degree == 4)


def test_empty_series_csv(tmp_path):
    p = tmp_path / "r.csv"
    write_csv(RunReport(), p)
    assert p.read_text().count("\n") == 1


def test_sanitize_flags_nonfinite():
    flags = []
    out = sanitize({"a": [1.0, math.inf], "b": np.float64(math.nan), "c": np.int64(3)}, "$", flags)
    assert out == {"a": [1.0, None], "b": None, "c": 3}
    assert flags == ["$.a[1]", "$.b"]


def test_json_round_trip_is_byte_identical(tmp_path):
    rep, _, _ = bm.run_benchmark(bm.Q1(max_steps=5))
    rep.totals["undefined"] = math.nan
    emit_report(rep, tmp_path, ("json",), serial=True, stem="q")
    text = (tmp_path / "q.json").read_text()
    again = to_json(load_report(tmp_path / "q.json"), include_timing=False)
    assert again == text
    assert json.loads(text)["nonfinite"] == ["$.totals.undefined"]


def test_q1_report_files(tmp_path):
    rep, _, _ = bm.run_benchmark(bm.Q1(), out_dir=tmp_path)
    steps = rep.totals["steps"]
    assert len(json.loads((tmp_path / "Q1.json").read_text())["series"]["step"]) == steps + 1
    assert len((tmp_path / "Q1.csv").read_text().splitlines()) == steps + 2
    dat = [x for x in (tmp_path / "Q1.dat").read_text().splitlines() if not x.startswith("#")]
    assert len(dat) == steps + 1
    assert "wall_time" not in json.loads((tmp_path / "Q1.json").read_text())
    assert len(json.loads((tmp_path / "Q1.timing.json").read_text())["wall_time"]) == steps + 1


def test_well_conditioned_quadratic_converges_monotonically():
    rep, _, _ = bm.run_benchmark(bm.Q1(condition=1.0))
    assert rep.status == "converged"
    assert np.all(np.diff(rep.column("loss")) <= 0)


def test_zero_budget_snapshot_only():
    rep, _, _ = bm.run_benchmark(bm.Q1(max_steps=0))
    assert len(rep) == 1 and rep.totals["steps"] == 0


def test_t1_golden_counts():
    rep, graph, metric = bm.run_benchmark(bm.T1())
    t = rep.totals
    # frozen from the reference pipeline
    assert (t["b1_initial"], t["b1_final"]) == (9, 24)
    assert (t["b0_initial"], t["b0_final"]) == (1, 1)
    assert t["surgeries"] == 67 and t["inserted_edges"] == 15
    assert t["R_TS"] == pytest.approx(-1.5)
    assert t["R_TS_excluding_inserted"] == 0.0
    kinds = [e["kind"] for e in rep.events]
    assert kinds.count("neckpinch") == 62 and kinds.count("collapse") == 5
    assert np.all(rep.column("min_g") >= 1e-6)
    np.testing.assert_array_equal(rep.column("b1"), rep.column("edges") - 32 + rep.column("b0"))


def test_compare_structure(q1_compare):
    rows = {r["method"]: r for r in q1_compare["rows"]}
    assert set(rows) == {"geometric", "plain-gd", "decoupled-flow", "fixed-lr-geometric"}
    assert rows["plain-gd"]["speedup"] == 1.0
    assert all(r["converged"] for r in rows.values())
    # coupled versus beta = 0 flow: both present, different step-size traces
    a, b = rows["geometric"]["report"].column("eta"), rows["decoupled-flow"]["report"].column("eta")
    assert a.size != b.size or not np.array_equal(a, b)
    assert q1_compare["reference_speedup"] == 2.1


def test_compare_golden_steps(q1_compare):
    rows = {r["method"]: r for r in q1_compare["rows"]}
    # frozen from the reference pipeline
    assert rows["geometric"]["steps"] == 458
    assert rows["plain-gd"]["steps"] == 916
    assert rows["geometric"]["speedup"] == pytest.approx(2.0, abs=1e-12)


def test_plain_gd_below_stability_limit_converges():
    for cond in (1.0, 10.0, 50.0):
        res = bm.compare_baselines(bm.Q1(condition=cond, size=12), baselines=("plain-gd",))
        plain = next(r for r in res["rows"] if r["method"] == "plain-gd")
        assert res["eta0"] < 2.0 / cond
        assert plain["converged"]


def test_scaling_single_size(tmp_path):
    res = bm.scaling_study([200], repeats=2)
    assert math.isnan(res["slope"]) and len(res["rows"]) == 1
    bm.write_scaling_plotdata(res, tmp_path / "s.dat")
    text = (tmp_path / "s.dat").read_text()
    assert "reference_geometric 1000000 400.0" in text and "reference_geometric 1000 8.0" in text
    with pytest.raises(InvalidInputError):
        bm.scaling_study([200, 100])


def run_cli(args, tmp_path):
    return main(args + ["--out", str(tmp_path)])


def test_cli_optimize_serial_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run_cli(["optimize", "--benchmark", "Q1", "--serial", "--steps", "40"], tmp_path / d) == 0
    assert (tmp_path / "a" / "Q1.json").read_bytes() == (tmp_path / "b" / "Q1.json").read_bytes()


def test_cli_config_graph_and_subcommands(tmp_path):
    g = tmp_path / "tri.graph"
    g.write_text("V 4 1 1\nv 0 0.0 0.5\nv 1 1.0 -0.5\nv 2 2.0 0.2\nv 3 3.0 0.1\ne 0 1\ne 1 2\ne 0 2\ne 2 3\n")
    cfg = tmp_path / "c.cfg"
    cfg.write_text("loss = synthetic-embedding\nsize = 4\nmax_steps = 5\n")
    assert run_cli(["curvature", "--graph", str(g)], tmp_path / "k") == 0
    assert len((tmp_path / "k" / "curvature.csv").read_text().splitlines()) == 5
    assert run_cli(["flow", "--graph", str(g), "--steps", "3"], tmp_path / "f") == 0
    assert len((tmp_path / "f" / "trace.csv").read_text().splitlines()) == 4
    assert run_cli(["optimize", "--graph", str(g), "--config", str(cfg), "--format", "csv"], tmp_path / "o") == 0
    assert (tmp_path / "o" / "Q1.csv").exists() and not (tmp_path / "o" / "Q1.json").exists()


def test_cli_report_reemit(tmp_path):
    assert run_cli(["optimize", "--benchmark", "Q1", "--steps", "3", "--serial"], tmp_path / "a") == 0
    assert main(["report", "--input", str(tmp_path / "a" / "Q1.json"), "--out", str(tmp_path / "b"),
                 "--format", "csv"]) == 0
    assert (tmp_path / "b" / "Q1.csv").read_text() == (tmp_path / "a" / "Q1.csv").read_text()


def test_cli_exit_codes(tmp_path, capsys):
    assert run_cli(["optimize", "--set", "bogus=1"], tmp_path) == 3
    assert run_cli(["optimize", "--graph", str(tmp_path / "missing.graph")], tmp_path) == 3
    code = run_cli(["optimize", "--steps", "50", "--set", "eta_max=1000", "--set", "C_n=1e-6",
                    "--set", "theta_scale=1"], tmp_path)
    assert code == 2
    assert "diverged" in capsys.readouterr().out


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ricciopt.cli", "compare", "--benchmark", "Q1", "--set", "size=8",
                          "--serial", "--out", str(tmp_path)], capture_output=True, text=True, timeout=300)
    assert out.returncode == 0, out.stderr
    body = json.loads((tmp_path / "compare.json").read_text())
    assert {r["method"] for r in body["rows"]} >= {"geometric", "plain-gd"}
