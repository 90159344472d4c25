"""Singularity detection and the three metric surgeries.

``detect`` picks at most one operation with a fixed priority:

1. neckpinch when the largest curvature gradient exceeds ``kappa_thresh``;
2. collapse when the smallest metric value is below ``1 / kappa_thresh``;
3. conical when the volume-weighted L2 curvature norm exceeds ``kappa_thresh``.

No operation ever removes a vertex or an edge.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .curvature import curvature_norm
from .errors import InvalidInputError
from .graph import MetricState

NONE, NECKPINCH, COLLAPSE, CONICAL = "none", "neckpinch", "collapse", "conical"
# keeps exp(-lambda * loss) finite when a direct call passes lambda < 0
_MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class SurgeryConfig:
    kappa_thresh: float = 1.5
    bn_gamma: float = 1.0
    bn_beta: float = 1.0
    bn_eps: float = 1e-5
    record: bool = True

    def validate(self):
        if not self.kappa_thresh > 0:
            raise InvalidInputError("kappa_thresh must be positive")
        if not self.bn_eps > 0:
            raise InvalidInputError("bn_eps must be positive")
        return self


@dataclass(frozen=True)
class SurgeryEvent:
    """Audit record of one surgery.

    ``pre_norm``/``post_norm`` are the minimum metric value for collapse and
    the Euclidean norm of ``g`` otherwise.  ``inserted`` lists edges added
    by a neckpinch.
    """

    step: int
    kind: str
    location: object
    lambda_or_alpha: float
    pre_norm: float
    post_norm: float
    inserted: tuple = dc_field(default=())
    noop: bool = False

    def to_dict(self):
        d = asdict(self)
        d["inserted"] = [list(p) for p in self.inserted]
        if isinstance(self.location, tuple):
            d["location"] = list(self.location)
        for k in ("lambda_or_alpha", "pre_norm", "post_norm"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


def write_events(path, events):
    """JSON lines, one event per line."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")


def detect(field, metric, cfg: SurgeryConfig):
    k = cfg.kappa_thresh
    if curvature_norm(field, metric, math.inf, 1) > k:
        return NECKPINCH
    if metric.g.size and metric.g.min() < 1.0 / k:
        return COLLAPSE
    if curvature_norm(field, metric, 2.0, 0) > k:
        return CONICAL
    return NONE


def _l2(g):
    return float(np.linalg.norm(g))


def neckpinch(graph, metric, field, loss_value, cfg: SurgeryConfig, step=0):
    """Insert shortcut edges around the edge with the largest curvature gradient.

    Every non-adjacent pair inside the union of the two endpoint
    neighbourhoods becomes an edge with metric ``exp(-lam * loss_value)``,
    ``lam = log(max |grad_ric|) / kappa_thresh``, clamped to the floor.
    Returns ``(graph, metric, event)``.
    """
    pre = _l2(metric.g)
    if graph.edge_count == 0:
        return graph, metric, SurgeryEvent(step, NECKPINCH, None, math.nan, pre, pre, noop=True)
    mags = np.abs(field.grad_ric)
    e = int(np.argmax(mags))  # first maximum = lowest edge id
    i, j = (int(v) for v in graph.edges[e])
    top = float(mags[e])
    if not top > 0:
        return graph, metric, SurgeryEvent(step, NECKPINCH, (i, j), math.nan, pre, pre, noop=True)
    lam = math.log(top) / cfg.kappa_thresh
    hood = sorted(set(graph.neighbors(i).tolist()) | set(graph.neighbors(j).tolist()) | {i, j})
    new = [(a, b) for x, a in enumerate(hood) for b in hood[x + 1:] if not graph.has_edge(a, b)]
    if not new:
        return graph, metric, SurgeryEvent(step, NECKPINCH, (i, j), lam, pre, pre, noop=True)
    g_new = max(math.exp(min(-lam * float(loss_value), _MAX_EXPONENT)), metric.g_floor)
    graph2 = graph.with_edges(new)
    g2 = np.concatenate([metric.g, np.full(len(new), g_new)])
    metric2 = MetricState.build(graph2, g2, metric.g_floor)
    return graph2, metric2, SurgeryEvent(step, NECKPINCH, (i, j), lam, pre, _l2(g2), tuple(new))


def collapse_normalize(graph, metric, cfg: SurgeryConfig, step=0):
    """Affine renormalisation of all metric values, then clamp to the floor.

    Uses the population mean and variance over edges:
    ``(g - mean) / sqrt(var + bn_eps) * bn_gamma + bn_beta``.
    """
    g = metric.g
    if g.size < 2:
        raise InvalidInputError("collapse normalisation needs at least 2 edges")
    mu = g.mean()
    var = g.var()
    g2 = (g - mu) / math.sqrt(var + cfg.bn_eps) * cfg.bn_gamma + cfg.bn_beta
    g2 = np.maximum(g2, metric.g_floor)
    metric2 = MetricState.build(graph, g2, metric.g_floor)
    return metric2, SurgeryEvent(step, COLLAPSE, "global", float(cfg.bn_gamma), float(g.min()), float(g2.min()))


def conical_repair(graph, metric, field, cfg: SurgeryConfig, step=0):
    """Curvature residual correction ``g + a kappa g tbar^2``.

    ``tbar`` is the mean absolute parameter value at the two endpoints and
    ``a = sqrt(kappa_thresh / ||ric||_2)``.  A zero curvature norm leaves the
    metric unchanged.
    """
    pre = _l2(metric.g)
    norm = curvature_norm(field, metric, 2.0, 0)
    if not norm > 0:
        return metric, SurgeryEvent(step, CONICAL, "global", math.nan, pre, pre, noop=True)
    a = math.sqrt(cfg.kappa_thresh / norm)
    th = np.abs(graph.theta)
    e = graph.edges
    tbar = 0.5 * (th[e[:, 0]] + th[e[:, 1]])
    g2 = np.maximum(metric.g + a * field.kappa * metric.g * tbar * tbar, metric.g_floor)
    metric2 = MetricState.build(graph, g2, metric.g_floor)
    return metric2, SurgeryEvent(step, CONICAL, "global", a, pre, _l2(g2))


def apply(kind, graph, metric, field, loss_value, cfg: SurgeryConfig, step=0):
    """Run the surgery named ``kind``; returns ``(graph, metric, event or None)``."""
    if kind == NECKPINCH:
        return neckpinch(graph, metric, field, loss_value, cfg, step)
    if kind == COLLAPSE:
        m, ev = collapse_normalize(graph, metric, cfg, step)
        return graph, m, ev
    if kind == CONICAL:
        m, ev = conical_repair(graph, metric, field, cfg, step)
        return graph, m, ev
    return graph, metric, None


def detect_and_apply(graph, metric, field, loss_value, cfg: SurgeryConfig, step=0):
    """At most one surgery, chosen by :func:`detect`."""
    return apply(detect(field, metric, cfg), graph, metric, field, loss_value, cfg, step)
