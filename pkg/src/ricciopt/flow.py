"""Loss-coupled discrete Ricci flow on the per-edge metric.

The right-hand side for edge ``e = (i, j)`` is::

    -2 kappa_e g_e + beta G_e + (R - beta Gbar) g_e / n

with ``G_e = w_e (dL_j - dL_i)^2``, ``R`` the volume-weighted mean vertex
curvature and ``Gbar`` the ``g``-weighted mean of ``G``.  After every step
the metric is clamped to ``g_floor``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .curvature import CurvatureField, CurvatureOptions, curvature_field, curvature_norm, default_norm_p
from .errors import FlowBlowupError, InvalidInputError
from .graph import DEFAULT_G_FLOOR, MetricState, default_beta

TRACE_COLUMNS = ("step", "t", "loss", "ric_l2", "grad_ric_lp", "min_g", "max_g", "R")


@dataclass
class FlowConfig:
    """Flow parameters.

    ``beta=None`` means ``0.1 * sqrt(n)``; ``n=None`` means the graph's
    intrinsic dimension.  ``curvature_every`` > 1 reuses a curvature field
    for that many steps (Euler only).
    """

    beta: float | None = None
    dt: float = 1e-3
    integrator: str = "euler"
    g_floor: float = DEFAULT_G_FLOOR
    alpha: float = 0.5
    steps: int = 100
    n: float | None = None
    oracle: bool = False
    hop: bool = False
    curvature_every: int = 1
    backend: str = "auto"

    def validate(self):
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if not self.g_floor > 0:
            raise InvalidInputError("g_floor must be positive")
        if self.beta is not None and not self.beta >= 0:
            raise InvalidInputError("beta must be nonnegative")
        if self.integrator not in ("euler", "rk4"):
            raise InvalidInputError(f"unknown integrator {self.integrator!r}")
        if self.steps < 0:
            raise InvalidInputError("steps must be >= 0")
        if self.n is not None and not self.n > 0:
            raise InvalidInputError("n must be positive")
        if self.curvature_every < 1:
            raise InvalidInputError("curvature_every must be >= 1")
        return self

    def dim(self, graph):
        return graph.intrinsic_dim if self.n is None else self.n

    def coupling(self, graph):
        return default_beta(self.dim(graph)) if self.beta is None else float(self.beta)

    def curvature_options(self):
        return CurvatureOptions(alpha=self.alpha, oracle=self.oracle, hop=self.hop, backend=self.backend)


def scalar_curvature(field, metric):
    """Volume-weighted mean of the vertex curvature."""
    tot = metric.vol.sum()
    return float(np.dot(field.ric_vertex, metric.vol) / tot) if tot > 0 else 0.0


def flow_rhs(graph, metric, field, loss_grad, cfg: FlowConfig):
    """Time derivative of ``g`` on every edge."""
    n = cfg.dim(graph)
    beta = cfg.coupling(graph)
    g = metric.g
    out = -2.0 * field.ric_edge_tensor
    R = scalar_curvature(field, metric)
    if beta != 0.0 and loss_grad is not None:
        dl = np.asarray(loss_grad, dtype=float)
        e = graph.edges
        # overflow shows up as a non-finite rhs, which the caller reports
        with np.errstate(over="ignore", invalid="ignore"):
            G = metric.w * (dl[e[:, 1]] - dl[e[:, 0]]) ** 2
            Gbar = float(np.dot(G, g) / g.sum()) if g.size else 0.0
            out = out + beta * G + ((R - beta * Gbar) / n) * g
    else:
        out = out + (R / n) * g
    return out


def _check(rhs, step=None):
    bad = np.flatnonzero(~np.isfinite(rhs))
    if bad.size:
        raise FlowBlowupError(int(bad[0]), step)


def _clamped(graph, metric, g):
    return MetricState.build(graph, np.maximum(g, metric.g_floor), metric.g_floor)


def flow_step(graph, metric, cfg: FlowConfig, loss=None, field=None, loss_grad=None, step=None):
    """Advance the metric by one time step.

    Parameters
    ----------
    loss : LossOracle, optional
        Supplies the gradient at ``graph.theta`` when ``loss_grad`` is not
        given.  ``None`` means zero gradient.
    field : CurvatureField, optional
        Curvature of ``metric``; computed when missing.

    Raises
    ------
    FlowBlowupError
        If any right-hand side value is not finite.
    """
    if loss_grad is None and loss is not None:
        loss_grad = loss.value_and_grad(graph.theta)[1]
    opts = cfg.curvature_options()
    if field is None:
        field = curvature_field(graph, metric, options=opts)
    dt = cfg.dt
    k1 = flow_rhs(graph, metric, field, loss_grad, cfg)
    _check(k1, step)
    if cfg.integrator == "euler":
        return _clamped(graph, metric, metric.g + dt * k1)

    # classical RK4; intermediate stages are also clamped so curvature stays defined
    def stage(g_stage):
        m = _clamped(graph, metric, g_stage)
        k = flow_rhs(graph, m, curvature_field(graph, m, options=opts), loss_grad, cfg)
        _check(k, step)
        return k

    k2 = stage(metric.g + 0.5 * dt * k1)
    k3 = stage(metric.g + 0.5 * dt * k2)
    k4 = stage(metric.g + dt * k3)
    return _clamped(graph, metric, metric.g + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))


@dataclass
class FlowTrace:
    """Per-step record of an :func:`evolve` run."""

    rows: list = dc_field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(TRACE_COLUMNS)
            for r in self.rows:
                wr.writerow([r["step"]] + [repr(float(r[c])) for c in TRACE_COLUMNS[1:]])


def trace_row(step, t, loss_value, field, metric, p):
    return {
        "step": int(step),
        "t": float(t),
        "loss": float(loss_value),
        "ric_l2": curvature_norm(field, metric, 2.0, 0),
        "grad_ric_lp": curvature_norm(field, metric, p, 1),
        "min_g": float(metric.g.min()) if metric.g.size else math.nan,
        "max_g": float(metric.g.max()) if metric.g.size else math.nan,
        "R": scalar_curvature(field, metric),
    }


def evolve(graph, metric, cfg: FlowConfig, loss=None, trace_path=None):
    """Run ``cfg.steps`` flow steps; returns ``(metric, trace)``.

    The trace has one row per completed step, describing the state after
    that step.
    """
    cfg.validate()
    opts = cfg.curvature_options()
    loss_value, loss_grad = (0.0, None) if loss is None else loss.value_and_grad(graph.theta)
    p = default_norm_p(cfg.dim(graph))
    trace = FlowTrace()
    field = curvature_field(graph, metric, options=opts) if cfg.steps else None
    reuse = cfg.curvature_every if cfg.integrator == "euler" else 1
    for s in range(1, cfg.steps + 1):
        metric = flow_step(graph, metric, cfg, field=field, loss_grad=loss_grad, step=s)
        if s % reuse == 0 or s == cfg.steps:
            field = curvature_field(graph, metric, options=opts)
        else:
            # keep kappa, refresh everything that depends on g
            field = CurvatureField.from_kappa(graph, metric, field.kappa, field.w1, field.distance)
        trace.rows.append(trace_row(s, s * cfg.dt, loss_value, field, metric, p))
    if trace_path is not None:
        trace.write_csv(trace_path)
    return metric, trace
