"""Command-line entry point.

Subcommands: ``curvature``, ``flow``, ``optimize``, ``compare``, ``scale``
and ``report``.  Exit status is 0 on success, 2 when a run diverges and 3
on invalid input.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

from . import benchmarks as bm
from .config import load_config, parse_value
from .curvature import curvature_field, curvature_norm, write_curvature_csv
from .errors import (
    BoundaryError,
    DivergenceError,
    FlowBlowupError,
    InvalidInputError,
    SupportSizeError,
    TransportConvergenceError,
    UndefinedRateError,
)
from .flow import evolve
from .graph import write_graph
from .report import emit_report, load_report, sanitize

EXIT_OK, EXIT_DIVERGED, EXIT_INVALID = 0, 2, 3


def _formats(values):
    out = []
    for v in values or ["json,csv,plotdata"]:
        out.extend(x.strip() for x in v.split(",") if x.strip())
    bad = set(out) - {"json", "csv", "plotdata"}
    if bad:
        raise InvalidInputError(f"unknown format(s): {', '.join(sorted(bad))}")
    return tuple(dict.fromkeys(out))


def _common(p):
    p.add_argument("--graph", help="graph file (overrides the generator)")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--benchmark", default=None, choices=sorted(bm.NAMED), help="named benchmark to start from")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="step budget")
    p.add_argument("--eps", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--integrator", choices=["euler", "rk4"])
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--format", action="append", help="json, csv, plotdata (comma separated or repeated)")
    p.add_argument("--oracle-transport", action="store_true", help="exact LP transport where supports allow")
    p.add_argument("--serial", action="store_true", help="bit-exact mode: timings kept out of the JSON report")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any benchmark key")


def build_spec(args, default="Q1"):
    name = args.benchmark or default
    spec = bm.NAMED[name]() if name else bm.BenchmarkSpec()
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for item in args.set:
        if "=" not in item:
            raise InvalidInputError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip().replace("-", "_")] = parse_value(v)
    flags = {"graph_file": args.graph, "seed": args.seed, "max_steps": args.steps, "eps": args.eps,
             "beta": args.beta, "kappa": args.kappa, "dt": args.dt, "integrator": args.integrator}
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.oracle_transport:
        values["oracle_transport"] = True
    known = {f.name for f in dataclasses.fields(bm.BenchmarkSpec)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidInputError(f"unknown configuration keys: {', '.join(unknown)}")
    spec = dataclasses.replace(spec, **values)
    return spec.validate()


def cmd_curvature(args):
    spec = build_spec(args, default=None)
    graph, metric, _, _ = bm.build(spec)
    field = curvature_field(graph, metric, options=spec.flow_config().curvature_options())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_curvature_csv(out / "curvature.csv", graph, metric, field)
    summary = {
        "vertices": graph.vertex_count,
        "edges": graph.edge_count,
        "kappa_min": float(field.kappa.min()) if field.kappa.size else None,
        "kappa_max": float(field.kappa.max()) if field.kappa.size else None,
        "ric_l2": curvature_norm(field, metric, 2.0, 0),
        "grad_ric_max": curvature_norm(field, metric, math.inf, 1),
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_flow(args):
    spec = build_spec(args, default=None)
    graph, metric, _, loss = bm.build(spec)
    cfg = dataclasses.replace(spec.flow_config(), steps=args.steps if args.steps is not None else 100)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metric, trace = evolve(graph, metric, cfg, loss, trace_path=out / "trace.csv")
    write_graph(out / "final.graph", graph, metric)
    last = trace.rows[-1] if trace.rows else {}
    print(json.dumps({"steps": len(trace), **{k: last[k] for k in ("min_g", "max_g", "R")}} if last else {"steps": 0},
                     sort_keys=True))
    return EXIT_OK


def cmd_optimize(args):
    spec = build_spec(args)
    report, _, _ = bm.run_benchmark(spec, args.out, _formats(args.format), serial=args.serial)
    print(json.dumps({"name": spec.name, "status": report.status, "steps": report.totals["steps"],
                      "final_loss": report.totals["final_loss"]}, sort_keys=True))
    return EXIT_DIVERGED if report.status == "diverged" else EXIT_OK


COMPARE_COLUMNS = ("method", "status", "steps", "speedup", "final_loss", "final_V", "eta_first", "eta_last",
                   "wall_time")


def cmd_compare(args):
    spec = build_spec(args)
    res = bm.compare_baselines(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{c: r[c] for c in COMPARE_COLUMNS} for r in res["rows"]]
    if args.serial:
        for r in rows:
            r.pop("wall_time")
    body = {"eta0": res["eta0"], "L_estimate": res["L_estimate"], "reference_speedup": res["reference_speedup"],
            "rows": rows}
    (out / "compare.json").write_text(json.dumps(sanitize(body), sort_keys=True, indent=1) + "\n")
    with open(out / "compare.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        cols = [c for c in COMPARE_COLUMNS if c in rows[0]]
        wr.writerow(cols)
        for r in rows:
            wr.writerow([r[c] for c in cols])
    for r in rows:
        print(f"{r['method']:<20} {r['status']:<10} steps={r['steps']:<6} speedup={r['speedup']:.3f}")
    return EXIT_OK


def cmd_scale(args):
    spec = build_spec(args, default=None)
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    res = bm.scaling_study(sizes, dataclasses.replace(spec, name="scale"), repeats=args.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scaling.json").write_text(json.dumps(sanitize(res), sort_keys=True, indent=1) + "\n")
    bm.write_scaling_plotdata(res, out / "scaling.dat")
    for r in res["rows"]:
        flag = "  (rerun: noisy timing)" if r["rerun"] else ""
        print(f"N={r['size']:<8} median={r['median']:.4f}s iqr={r['iqr']:.4f}s{flag}")
    print(f"slope={res['slope']:.3f}")
    return EXIT_OK


def cmd_report(args):
    rep = load_report(args.input)
    stem = Path(args.input).stem
    emit_report(rep, args.out, _formats(args.format), serial=args.serial, stem=stem)
    return EXIT_OK


def make_parser():
    ap = argparse.ArgumentParser(prog="ricciopt", description="Curvature-coupled optimization on weighted graphs")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("curvature", cmd_curvature, "curvature of every edge, written as CSV"),
        ("flow", cmd_flow, "evolve the metric and write the trace"),
        ("optimize", cmd_optimize, "run a benchmark and write the report"),
        ("compare", cmd_compare, "compare against baseline optimizers"),
        ("scale", cmd_scale, "per-step time versus graph size"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.set_defaults(func=fn)
        if name == "scale":
            p.add_argument("--sizes", default="1000,10000,100000")
            p.add_argument("--repeats", type=int, default=5)
    p = sub.add_parser("report", help="re-emit a saved JSON report in other formats")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--format", action="append")
    p.add_argument("--serial", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (DivergenceError, FlowBlowupError, TransportConvergenceError) as exc:
        print(f"ricciopt: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InvalidInputError, BoundaryError, SupportSizeError, UndefinedRateError, ValueError, OSError) as exc:
        print(f"ricciopt: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
