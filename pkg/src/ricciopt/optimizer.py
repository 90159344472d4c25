"""Curvature-aware meta-optimizer.

Each step takes a gradient step whose size comes from a curvature-dependent
critical learning rate, couples the gradient with the vertex curvature,
possibly performs one surgery, and advances the metric by one flow step.
A Lyapunov value ``sum_i ric_i^2 vol_i + beta * loss`` is tracked.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field
from typing import NamedTuple

import numpy as np

from . import surgery as surg
from .curvature import curvature_field, curvature_norm, default_norm_p
from .diagnostics import finite_difference_hessian
from .errors import DivergenceError, FlowBlowupError, InvalidInputError
from .flow import FlowConfig, flow_step
from .graph import init_weights, theta_metric
from .report import RunReport
from .topology import betti, betti_bound

C2_DEFAULT = 4.0 * math.pi


@dataclass
class LrState:
    """Inputs of the critical learning rate."""

    C_n: float = C2_DEFAULT
    L_lip: float = 1.0
    L0: float = 0.0
    eta_max: float = 1.0


class CriticalLr(NamedTuple):
    eta: float
    clamped: bool
    capped: bool


def critical_lr_flags(state: LrState, beta, n):
    """Critical learning rate plus flags for discriminant clamping and the cap.

    ``2 / (C L^(2/n)) * (1 + sqrt(1 - 4 beta L0 / (C^2 L^(4/n))))`` with a
    negative discriminant replaced by zero, then capped at ``eta_max``.
    """
    if not (state.C_n > 0 and state.L_lip > 0 and state.eta_max > 0):
        raise InvalidInputError("C_n, L_lip and eta_max must be positive")
    C, L = state.C_n, state.L_lip
    disc = 1.0 - 4.0 * beta * state.L0 / (C * C * L ** (4.0 / n))
    clamped = disc < 0
    eta = 2.0 / (C * L ** (2.0 / n)) * (1.0 + math.sqrt(max(disc, 0.0)))
    capped = eta > state.eta_max
    return CriticalLr(min(eta, state.eta_max), clamped, capped)


def critical_lr(state: LrState, beta, n):
    return critical_lr_flags(state, beta, n).eta


def optimal_lr(eta_c, grad_ric_norm):
    """``eta_c / (1 + sqrt(norm))``."""
    if grad_ric_norm < 0:
        raise InvalidInputError("norm must be nonnegative")
    return eta_c / (1.0 + math.sqrt(grad_ric_norm))


def lyapunov(field, metric, loss_value, beta):
    return float(np.sum(field.ric_vertex ** 2 * metric.vol)) + beta * float(loss_value)


@dataclass
class OptimizerConfig:
    """Meta-optimizer settings.

    Attributes
    ----------
    coupling : {"diagonal", "laplacian", "none"}
        How curvature multiplies the gradient: ``ric_i * grad_i``, the
        edge form ``sum_j kappa_ij w_ij (grad_j - grad_i)``, or not at all.
    curvature_mode : {"ollivier", "hessian"}
        Source of the per-vertex curvature in the coupling.  ``"hessian"``
        uses finite-difference second derivatives of the loss.
    fixed_lr : float, optional
        Skip the critical/optimal learning-rate formulas.
    flow_enabled, surgery_enabled : bool
        Switch off the metric flow or the surgeries.
    stop_on : {"either", "loss", "lyapunov"}
        Stopping test used by :func:`run`.
    """

    flow: FlowConfig = dc_field(default_factory=FlowConfig)
    C_n: float = C2_DEFAULT
    eta_max: float = 1.0
    coupling: str = "diagonal"
    curvature_mode: str = "ollivier"
    norm_p: float | None = None
    lipschitz_floor: float = 1e-8
    lipschitz_warmup: int = 50
    probe_step: float = 1e-5
    fixed_lr: float | None = None
    flow_enabled: bool = True
    surgery_enabled: bool = True
    metric_init: str = "weights"
    stop_on: str = "either"

    def validate(self):
        self.flow.validate()
        if self.coupling not in ("diagonal", "laplacian", "none"):
            raise InvalidInputError(f"unknown coupling {self.coupling!r}")
        if self.curvature_mode not in ("ollivier", "hessian"):
            raise InvalidInputError(f"unknown curvature mode {self.curvature_mode!r}")
        if self.stop_on not in ("either", "loss", "lyapunov"):
            raise InvalidInputError(f"unknown stopping rule {self.stop_on!r}")
        if self.fixed_lr is not None and not self.fixed_lr > 0:
            raise InvalidInputError("fixed_lr must be positive")
        return self

    def p(self, graph):
        return self.norm_p if self.norm_p is not None else default_norm_p(self.flow.dim(graph))


@dataclass
class OptimizerState:
    """Mutable optimizer state; the cached loss, gradient and curvature belong to ``theta``."""

    theta: np.ndarray
    step: int
    lyapunov_history: list
    last_grad: np.ndarray
    events: list
    loss_value: float
    lr: LrState
    field: object = None
    eta: float = 0.0
    eta_c: float = 0.0
    clamped: bool = False
    probe: np.ndarray | None = None
    inserted: list = dc_field(default_factory=list)


def initial_metric(graph, cfg: OptimizerConfig, beta_w=None):
    """Starting metric from edge weights or from ``theta`` squared."""
    if cfg.metric_init == "theta":
        return theta_metric(graph, g_floor=cfg.flow.g_floor)
    if cfg.metric_init != "weights":
        raise InvalidInputError(f"unknown metric init {cfg.metric_init!r}")
    bw = cfg.flow.coupling(graph) if beta_w is None else beta_w
    return init_weights(graph, bw if bw > 0 else 0.1 * math.sqrt(cfg.flow.dim(graph)), cfg.flow.g_floor)


def _probe(loss, theta, grad, v, h):
    """One power-iteration step on the Hessian by forward differences."""
    nv = np.linalg.norm(v)
    if not nv > 0:
        return 0.0, v
    v = v / nv
    scale = h * max(1.0, float(np.linalg.norm(theta)))
    hv = (loss.grad(theta + scale * v) - grad) / scale
    est = float(np.linalg.norm(hv))
    if not math.isfinite(est):
        return 0.0, v
    return est, (hv if est > 0 else v)


def init_state(graph, metric, theta0, loss, cfg: OptimizerConfig):
    """Evaluate everything the first step needs."""
    cfg.validate()
    theta = np.array(theta0, dtype=float).reshape(-1)
    if theta.size != graph.vertex_count or not np.all(np.isfinite(theta)):
        raise InvalidInputError("theta0 must be finite with one entry per vertex")
    value, grad = loss.value_and_grad(theta)
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        raise InvalidInputError("loss is not finite at theta0")
    field = curvature_field(graph, metric, options=cfg.flow.curvature_options())
    beta = cfg.flow.coupling(graph)
    v0 = grad.copy() if np.any(grad) else np.ones_like(theta)
    st = OptimizerState(
        theta=theta,
        step=0,
        lyapunov_history=[lyapunov(field, metric, value, beta)],
        last_grad=np.asarray(grad, dtype=float),
        events=[],
        loss_value=float(value),
        lr=LrState(cfg.C_n, cfg.lipschitz_floor, float(value), cfg.eta_max),
        field=field,
        probe=v0,
    )
    return st


def _coupled_direction(graph, metric, st: OptimizerState, loss, cfg: OptimizerConfig):
    grad = st.last_grad
    if cfg.coupling == "none":
        return grad.copy()
    if cfg.curvature_mode == "hessian":
        ric = finite_difference_hessian(loss, st.theta, diagonal=True)
    else:
        ric = st.field.ric_vertex
    if cfg.coupling == "diagonal":
        return grad + ric * grad
    e = graph.edges
    flux = st.field.kappa * metric.w * (grad[e[:, 1]] - grad[e[:, 0]])
    lap = np.zeros_like(grad)
    np.add.at(lap, e[:, 0], flux)
    np.add.at(lap, e[:, 1], -flux)
    return grad + lap


def meta_step(graph, metric, opt: OptimizerState, loss, cfg: OptimizerConfig, surgery_cfg=None):
    """One optimizer step; returns ``(opt, metric, graph)``.

    ``opt`` is updated in place and returned.  On a non-finite trial point
    the learning rate is halved once; a second failure raises
    :class:`DivergenceError` with the untouched state attached.
    """
    scfg = surgery_cfg or surg.SurgeryConfig()
    n = cfg.flow.dim(graph)
    beta = cfg.flow.coupling(graph)
    p = cfg.p(graph)
    step = opt.step + 1
    field = opt.field

    norm1 = curvature_norm(field, metric, p, 1)
    if cfg.surgery_enabled and norm1 > scfg.kappa_thresh:
        graph, metric, ev = surg.detect_and_apply(graph, metric, field, opt.loss_value, scfg, step)
        if ev is not None:
            if scfg.record:
                opt.events.append(ev)
            opt.inserted.extend(ev.inserted)
            field = curvature_field(graph, metric, options=cfg.flow.curvature_options())
            norm1 = curvature_norm(field, metric, p, 1)
    opt.field = field

    if opt.step < cfg.lipschitz_warmup and opt.probe is not None:
        est, opt.probe = _probe(loss, opt.theta, opt.last_grad, opt.probe, cfg.probe_step)
        opt.lr.L_lip = max(opt.lr.L_lip, est, cfg.lipschitz_floor)

    if cfg.fixed_lr is not None:
        eta_c, clamped = cfg.fixed_lr, False
        eta = cfg.fixed_lr
    else:
        crit = critical_lr_flags(opt.lr, beta, n)
        eta_c, clamped = crit.eta, crit.clamped
        eta = optimal_lr(eta_c, norm1)

    direction = _coupled_direction(graph, metric, opt, loss, cfg)
    for attempt in range(2):
        theta_new = opt.theta - eta * direction
        if np.all(np.isfinite(theta_new)):
            value, grad = loss.value_and_grad(theta_new)
            if math.isfinite(value) and np.all(np.isfinite(grad)):
                break
        if attempt == 1:
            raise DivergenceError(f"non-finite state at step {step} after halving the learning rate", state=opt)
        eta *= 0.5

    dtheta = np.linalg.norm(theta_new - opt.theta)
    if dtheta > 0:
        sec = float(np.linalg.norm(grad - opt.last_grad) / dtheta)
        if math.isfinite(sec):
            opt.lr.L_lip = max(opt.lr.L_lip, sec)

    graph = graph.with_theta(theta_new)
    if cfg.flow_enabled:
        try:
            metric = flow_step(graph, metric, cfg.flow, field=field, loss_grad=grad, step=step)
        except FlowBlowupError as exc:
            raise DivergenceError(str(exc), state=opt) from exc
        field = curvature_field(graph, metric, options=cfg.flow.curvature_options())

    opt.theta = theta_new
    opt.last_grad = np.asarray(grad, dtype=float)
    opt.loss_value = float(value)
    opt.field = field
    opt.eta, opt.eta_c, opt.clamped = eta, eta_c, clamped
    opt.step = step
    opt.lyapunov_history.append(lyapunov(field, metric, value, beta))
    return opt, metric, graph


@dataclass
class Budget:
    max_steps: int = 10_000
    eps: float = 1e-6


def _row(step, opt, graph, metric, snap0, p):
    snap = betti_bound(snap0, opt.field, metric, betti(graph))
    return {
        "step": step,
        "loss": opt.loss_value,
        "V": opt.lyapunov_history[-1],
        "eta": opt.eta,
        "eta_c": opt.eta_c,
        "ric_l2": curvature_norm(opt.field, metric, 2.0, 0),
        "grad_ric_lp": curvature_norm(opt.field, metric, p, 1),
        "b0": snap.b0,
        "b1": snap.b1,
        "betti_sum": snap.betti_sum,
        "bound_rhs": snap.bound_rhs,
        "bound_ok": int(snap.bound_satisfied),
        "min_g": float(metric.g.min()) if metric.g.size else math.nan,
        "max_g": float(metric.g.max()) if metric.g.size else math.nan,
        "edges": graph.edge_count,
        "L_lip": opt.lr.L_lip,
    }


def _done(opt, cfg, eps):
    v_ok = opt.lyapunov_history[-1] <= eps
    l_ok = opt.loss_value <= eps
    return {"either": v_ok or l_ok, "loss": l_ok, "lyapunov": v_ok}[cfg.stop_on]


def decay_rate(values):
    """Least-squares exponential rate ``r`` in ``V ~ exp(-r k)`` over positive entries."""
    v = np.asarray(values, dtype=float)
    k = np.arange(v.size)
    ok = v > 0
    if ok.sum() < 2:
        return math.nan
    slope = np.polyfit(k[ok], np.log(v[ok]), 1)[0]
    return float(-slope)


def run(graph, metric, theta0, loss, cfg: OptimizerConfig, budget: Budget, surgery_cfg=None):
    """Iterate :func:`meta_step` until converged or out of steps.

    Returns ``(report, graph, metric, state)``.  A divergence ends the run
    with ``report.status == "diverged"``; the report keeps the last good
    state.
    """
    if budget.max_steps < 0 or not budget.eps > 0:
        raise InvalidInputError("budget needs max_steps >= 0 and eps > 0")
    graph = graph.with_theta(theta0)
    opt = init_state(graph, metric, theta0, loss, cfg)
    p = cfg.p(graph)
    snap0 = betti(graph)
    report = RunReport()
    report.append(_row(0, opt, graph, metric, snap0, p), 0.0)
    status = "max_steps"
    if _done(opt, cfg, budget.eps):
        status = "converged"
    else:
        for _ in range(budget.max_steps):
            t0 = time.perf_counter()
            try:
                opt, metric, graph = meta_step(graph, metric, opt, loss, cfg, surgery_cfg)
            except DivergenceError as exc:
                status = "diverged"
                report.totals["divergence"] = str(exc)
                break
            report.append(_row(opt.step, opt, graph, metric, snap0, p), time.perf_counter() - t0)
            if _done(opt, cfg, budget.eps):
                status = "converged"
                break
    report.status = status
    snap_t = betti(graph)
    report.totals.update(
        steps=opt.step,
        final_loss=opt.loss_value,
        final_V=opt.lyapunov_history[-1],
        V0=opt.lyapunov_history[0],
        decay_rate=decay_rate(opt.lyapunov_history),
        surgeries=len(opt.events),
        inserted_edges=len(opt.inserted),
        b1_initial=snap0.b1,
        b1_final=snap_t.b1,
    )
    report.events = [ev.to_dict() for ev in opt.events]
    return report, graph, metric, opt
