"""Benchmark problems, baseline comparisons and the scaling study."""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from . import diagnostics as diag
from .errors import InvalidInputError
from .flow import FlowConfig
from .graph import DEFAULT_G_FLOOR, ParameterGraph, read_graph
from .losses import QuadraticLoss, RosenbrockSum, SyntheticEmbedding
from .optimizer import (
    C2_DEFAULT,
    Budget,
    OptimizerConfig,
    _probe,
    init_state,
    initial_metric,
    meta_step,
    run,
)
from .report import emit_report
from .surgery import SurgeryConfig
from .topology import betti, betti_excluding, simplification_rate

GENERATORS = ("cycle", "grid", "random-regular", "noisy-ring-with-chords")
LOSSES = ("quadratic", "rosenbrock-sum", "synthetic-embedding")

# reference timing curves (vertex count, seconds per epoch) drawn as overlays
REFERENCE_STANDARD = ((1e3, 12.0), (1e4, 45.0), (1e5, 210.0), (1e6, 950.0))
REFERENCE_GEOMETRIC = ((1e3, 8.0), (1e4, 28.0), (1e5, 110.0), (1e6, 400.0))
REFERENCE_SPEEDUP = 2.1
REFERENCE_SIMPLIFICATION = 0.63


@dataclass
class BenchmarkSpec:
    """Flat description of one benchmark run.

    ``graph_file`` overrides the generator; its ``theta`` column is then the
    starting point.  ``beta=None`` means ``0.1 * sqrt(n)``.
    """

    name: str = "custom"
    generator: str = "cycle"
    graph_file: str | None = None
    size: int = 32
    degree: int = 4
    chords: int = 8
    noise: float = 0.05
    loss: str = "quadratic"
    condition: float = 100.0
    seed: int = 0
    theta_scale: float = 0.01
    eps: float = 1e-6
    max_steps: int = 10_000
    # flow
    beta: float | None = None
    dt: float = 1e-3
    integrator: str = "rk4"
    alpha: float = 0.5
    g_floor: float = DEFAULT_G_FLOOR
    n: float | None = None
    oracle_transport: bool = False
    hop: bool = False
    curvature_every: int = 1
    # surgery
    kappa: float = 1.5
    bn_gamma: float = 1.0
    bn_beta: float = 1.0
    bn_eps: float = 1e-5
    surgery: bool = True
    # optimizer
    C_n: float = C2_DEFAULT
    eta_max: float = 1.0
    coupling: str = "diagonal"
    curvature_mode: str = "ollivier"
    metric_init: str = "weights"
    stop_on: str = "loss"
    lipschitz_warmup: int = 50
    # diagnostics
    p_drop: float = 0.1
    G_N: float = 1.0
    hbar: float = 1.0
    eps_quantum: float = 0.01
    rho: float = 0.1

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise InvalidInputError(f"unknown benchmark keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        if self.graph_file is None and self.generator not in GENERATORS:
            raise InvalidInputError(f"unknown generator {self.generator!r}")
        if self.loss not in LOSSES:
            raise InvalidInputError(f"unknown loss {self.loss!r}")
        if self.size < 3:
            raise InvalidInputError("size must be >= 3")
        if self.max_steps < 0 or not self.eps > 0:
            raise InvalidInputError("need max_steps >= 0 and eps > 0")
        self.flow_config().validate()
        self.surgery_config().validate()
        self.optimizer_config().validate()
        return self

    def flow_config(self):
        return FlowConfig(beta=self.beta, dt=self.dt, integrator=self.integrator, g_floor=self.g_floor,
                          alpha=self.alpha, n=self.n, oracle=self.oracle_transport, hop=self.hop,
                          curvature_every=self.curvature_every)

    def surgery_config(self):
        return SurgeryConfig(self.kappa, self.bn_gamma, self.bn_beta, self.bn_eps)

    def optimizer_config(self, **overrides):
        cfg = OptimizerConfig(flow=self.flow_config(), C_n=self.C_n, eta_max=self.eta_max,
                              coupling=self.coupling, curvature_mode=self.curvature_mode,
                              surgery_enabled=self.surgery, metric_init=self.metric_init,
                              stop_on=self.stop_on, lipschitz_warmup=self.lipschitz_warmup)
        return dataclasses.replace(cfg, **overrides)

    def holo_config(self, graph):
        return diag.HoloConfig(self.p_drop, tuple(range(graph.vertex_count // 2)), self.G_N, self.hbar,
                               self.eps_quantum)


def Q1(**kw):
    """Ill-conditioned quadratic on a 32-cycle."""
    base = dict(name="Q1", generator="cycle", size=32, loss="quadratic", condition=100.0, dt=1e-3, seed=0)
    base.update(kw)
    return BenchmarkSpec(**base)


def T1(**kw):
    """Noisy 32-ring with 8 random chords, pulled toward random targets.

    Runs until the Lyapunov value drops below ``eps`` so the metric keeps
    flowing (and surgeries keep firing) after the loss has converged.
    """
    base = dict(name="T1", generator="noisy-ring-with-chords", size=32, chords=8, seed=7,
                loss="synthetic-embedding", theta_scale=1.0, max_steps=300, dt=1e-2,
                stop_on="lyapunov", eps=1e-3)
    base.update(kw)
    return BenchmarkSpec(**base)


NAMED = {"Q1": Q1, "T1": T1}


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _circle(n, radius=1.0):
    ang = 2.0 * np.pi * np.arange(n) / n
    return radius * np.c_[np.cos(ang), np.sin(ang)]


def cycle_graph(n):
    return ParameterGraph(_circle(n), np.zeros(n), [(i, (i + 1) % n) for i in range(n)], 2)


def grid_graph(rows, cols=None):
    cols = rows if cols is None else cols
    idx = np.arange(rows * cols).reshape(rows, cols)
    edges = [(idx[r, c], idx[r, c + 1]) for r in range(rows) for c in range(cols - 1)]
    edges += [(idx[r, c], idx[r + 1, c]) for r in range(rows - 1) for c in range(cols)]
    coords = np.c_[np.repeat(np.arange(rows), cols), np.tile(np.arange(cols), rows)].astype(float)
    return ParameterGraph(coords, np.zeros(rows * cols), edges, 2)


def random_regular_graph(n, degree, seed):
    G = nx.random_regular_graph(degree, n, seed=int(seed))
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    return ParameterGraph(coords, np.zeros(n), np.array(list(G.edges()), dtype=np.int64).reshape(-1, 2), 2)


def noisy_ring_graph(n, chords, noise, seed):
    rng = np.random.default_rng(seed)
    coords = _circle(n) + noise * rng.normal(size=(n, 2))
    edges = {(i, (i + 1) % n) if i < (i + 1) % n else ((i + 1) % n, i) for i in range(n)}
    added = 0
    while added < chords:
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        key = (min(a, b), max(a, b))
        if key in edges:
            continue
        edges.add(key)
        added += 1
    return ParameterGraph(coords, np.zeros(n), sorted(edges), 2)


def build_graph(spec: BenchmarkSpec):
    if spec.graph_file is not None:
        graph, metric = read_graph(spec.graph_file, g_floor=spec.g_floor)
        return graph, metric
    if spec.generator == "cycle":
        graph = cycle_graph(spec.size)
    elif spec.generator == "grid":
        side = int(round(math.sqrt(spec.size)))
        graph = grid_graph(side, max(1, spec.size // side))
    elif spec.generator == "random-regular":
        graph = random_regular_graph(spec.size, spec.degree, spec.seed)
    else:
        graph = noisy_ring_graph(spec.size, spec.chords, spec.noise, spec.seed)
    return graph, None


def build_loss(spec: BenchmarkSpec, V):
    rng = np.random.default_rng(spec.seed + 1)
    if spec.loss == "quadratic":
        return QuadraticLoss(V, spec.condition)
    if spec.loss == "rosenbrock-sum":
        return RosenbrockSum()
    return SyntheticEmbedding(rng.normal(size=V))


def build(spec: BenchmarkSpec):
    """``(graph, metric, theta0, loss)`` for a spec; bit-identical for a fixed seed."""
    spec.validate()
    graph, metric = build_graph(spec)
    if spec.graph_file is not None:
        theta0 = np.array(graph.theta)
    else:
        theta0 = spec.theta_scale * np.random.default_rng(spec.seed).normal(size=graph.vertex_count)
        graph = graph.with_theta(theta0)
    if metric is None:
        metric = initial_metric(graph, spec.optimizer_config())
    return graph, metric, theta0, build_loss(spec, graph.vertex_count)


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

def _diagnostics(spec, graph, metric, metric0, loss, state):
    holo = spec.holo_config(graph)
    out = {}
    eb = diag.entanglement_bound(graph, metric, holo)
    out.update(s_ent=eb.s_ent, area=eb.area, bound=eb.bound, rho_E=eb.rho_E, entanglement_ok=eb.satisfied)
    out["D_g"] = diag.geometric_distortion(graph, metric, metric0) if metric0.g.size == metric.g.size else math.nan
    theta = state.theta
    if theta.size <= 64:
        lam_min = diag.smallest_hessian_eigenvalue(loss, theta)
    else:
        lam_min = float(np.min(diag.finite_difference_hessian(loss, theta, diagonal=True)))
    rb = diag.robustness_bound(state.lr.L_lip, spec.rho, lam_min)
    out.update(lambda_min=lam_min, robustness_bound=rb, robustness_unbounded=not math.isfinite(rb))
    out["t_coh"] = diag.decoherence_time(state.field, metric, holo)
    th = diag.hawking_temperature(loss, theta)
    out.update(T_H=th.value, T_H_det_sign=th.det_sign, T_H_diagonal=th.diagonal_approx)
    return out


def run_benchmark(spec: BenchmarkSpec, out_dir=None, formats=("json", "csv", "plotdata"), serial=True,
                  optimizer_overrides=None):
    """Build, optimise, diagnose and optionally write the report.

    Returns ``(report, graph, metric)``.
    """
    graph, metric0, theta0, loss = build(spec)
    cfg = spec.optimizer_config(**(optimizer_overrides or {}))
    report, graph_t, metric_t, state = run(graph, metric0, theta0, loss, cfg,
                                           Budget(spec.max_steps, spec.eps), spec.surgery_config())
    report.spec = spec.to_dict()
    if optimizer_overrides:
        report.spec["overrides"] = {k: v for k, v in sorted(optimizer_overrides.items()) if k != "flow"}
    snap0, snap_t = betti(graph), betti(graph_t)
    snap_wo = betti_excluding(graph_t, state.inserted)
    report.totals.update(
        b0_initial=snap0.b0, b0_final=snap_t.b0,
        R_TS=simplification_rate(snap0, snap_t),
        R_TS_excluding_inserted=simplification_rate(snap0, snap_wo),
        R_TS_reference=REFERENCE_SIMPLIFICATION,
        converged=report.status == "converged",
    )
    report.diagnostics = _diagnostics(spec, graph_t, metric_t, metric0, loss, state)
    if out_dir is not None:
        emit_report(report, out_dir, formats, serial=serial, stem=spec.name)
    return report, graph_t, metric_t


def estimate_lipschitz(loss, theta, iters=50, h=1e-5):
    """Largest Hessian eigenvalue magnitude by power iteration on finite differences."""
    theta = np.asarray(theta, dtype=float)
    grad = loss.grad(theta)
    v = grad.copy() if np.any(grad) else np.ones_like(theta)
    est = 0.0
    for _ in range(iters):
        e, v = _probe(loss, theta, grad, v, h)
        est = max(est, e)
    return max(est, 1e-8)


BASELINES = ("plain-gd", "decoupled-flow", "fixed-lr-geometric")


def compare_baselines(spec: BenchmarkSpec, baselines=BASELINES):
    """Steps to ``loss <= eps`` for the geometric optimizer and each baseline.

    ``speedup`` of a method is ``steps(plain-gd) / steps(method)``.  The
    plain and fixed-rate methods use ``eta0 = 2 / (C_n L)`` with ``L`` from
    a power-iteration estimate at the starting point.
    """
    spec = dataclasses.replace(spec, stop_on="loss")
    graph, _, theta0, loss = build(spec)
    L = estimate_lipschitz(loss, theta0)
    eta0 = 2.0 / (spec.C_n * L)
    methods = {"geometric": {}}
    for b in baselines:
        if b == "plain-gd":
            methods[b] = dict(fixed_lr=eta0, coupling="none", flow_enabled=False, surgery_enabled=False)
        elif b == "decoupled-flow":
            methods[b] = dict(flow=dataclasses.replace(spec.flow_config(), beta=0.0))
        elif b == "fixed-lr-geometric":
            methods[b] = dict(fixed_lr=eta0)
        else:
            raise InvalidInputError(f"unknown baseline {b!r}")
    rows = []
    for name, ov in methods.items():
        t0 = time.perf_counter()
        report, _, _ = run_benchmark(spec, optimizer_overrides=ov)
        eta = report.column("eta")[1:]
        rows.append({
            "method": name,
            "status": report.status,
            "converged": report.status == "converged",
            "steps": int(report.totals["steps"]),
            "final_loss": report.totals["final_loss"],
            "final_V": report.totals["final_V"],
            "eta_first": float(eta[0]) if eta.size else math.nan,
            "eta_last": float(eta[-1]) if eta.size else math.nan,
            "wall_time": time.perf_counter() - t0,
            "report": report,
        })
    plain = next((r for r in rows if r["method"] == "plain-gd"), None)
    for r in rows:
        if plain is not None and plain["converged"] and r["converged"] and r["steps"] > 0:
            r["speedup"] = plain["steps"] / r["steps"]
        else:
            r["speedup"] = math.nan
    return {"eta0": eta0, "L_estimate": L, "reference_speedup": REFERENCE_SPEEDUP, "rows": rows}


def scaling_study(sizes, template: BenchmarkSpec | None = None, repeats=5, warmup=1):
    """Median wall time of one Euler meta-step on random-regular graphs.

    Returns a dict with per-size rows (median, IQR, coefficient of
    variation, ``rerun`` marker when CV > 50%) and the fitted log-log slope
    (``nan`` for a single size).
    """
    base = template or BenchmarkSpec(name="scale", generator="random-regular", degree=4, loss="quadratic")
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidInputError("sizes must be increasing")
    rows = []
    for N in sizes:
        spec = dataclasses.replace(base, generator="random-regular", size=N, integrator="euler")
        graph, metric, theta0, loss = build(spec)
        cfg = spec.optimizer_config()
        st = init_state(graph, metric, theta0, loss, cfg)
        times = []
        for k in range(warmup + repeats):
            t0 = time.perf_counter()
            st, metric, graph = meta_step(graph, metric, st, loss, cfg, spec.surgery_config())
            if k >= warmup:
                times.append(time.perf_counter() - t0)
        t = np.asarray(times)
        q1, med, q3 = np.percentile(t, [25, 50, 75])
        cv = float(t.std() / t.mean()) if t.mean() > 0 else 0.0
        rows.append({"size": N, "edges": graph.edge_count, "median": float(med), "iqr": float(q3 - q1),
                     "cv": cv, "rerun": cv > 0.5, "samples": t.tolist()})
    slope = math.nan
    if len(rows) >= 2:
        slope = float(np.polyfit(np.log([r["size"] for r in rows]), np.log([r["median"] for r in rows]), 1)[0])
    return {"rows": rows, "slope": slope}


def write_scaling_plotdata(result, path):
    """Measured medians plus the two reference curves, whitespace separated."""
    lines = ["# series size seconds"]
    for r in result["rows"]:
        lines.append(f"measured {r['size']} {r['median']!r}")
    for name, pts in (("reference_standard", REFERENCE_STANDARD), ("reference_geometric", REFERENCE_GEOMETRIC)):
        for s, v in pts:
            lines.append(f"{name} {int(s)} {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")
