"""Loss-coupled discrete Ricci flow, curvature surgery and a curvature-aware optimizer on weighted graphs."""
from ._backend import BACKEND
from .curvature import CurvatureField, CurvatureOptions, curvature_field, curvature_norm, edge_curvature
from .flow import FlowConfig, evolve, flow_step
from .graph import MetricState, ParameterGraph, init_weights, read_graph, write_graph
from .optimizer import Budget, OptimizerConfig, meta_step, run
from .surgery import SurgeryConfig, detect_and_apply
from .topology import betti, simplification_rate
from .transport import TransportProblem, exact_w1, sinkhorn_w1

__all__ = [
    "BACKEND", "Budget", "CurvatureField", "CurvatureOptions", "FlowConfig", "MetricState", "OptimizerConfig",
    "ParameterGraph", "SurgeryConfig", "TransportProblem", "betti", "curvature_field", "curvature_norm",
    "detect_and_apply", "edge_curvature", "evolve", "exact_w1", "flow_step", "init_weights", "meta_step",
    "read_graph", "run", "simplification_rate", "sinkhorn_w1", "write_graph",
]
