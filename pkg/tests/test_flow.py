import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import complete_edges, cycle_edges, make_graph
from ricciopt.curvature import CurvatureField, curvature_field
from ricciopt.errors import FlowBlowupError, InvalidInputError
from ricciopt.flow import FlowConfig, evolve, flow_rhs, flow_step
from ricciopt.graph import MetricState
from ricciopt.losses import QuadraticLoss


def k3_run(dt, integrator, steps=None):
    graph, m = make_graph(3, complete_edges(3))
    steps = int(round(1.0 / dt)) if steps is None else steps
    cfg = FlowConfig(beta=0.0, n=2, dt=dt, steps=steps, integrator=integrator)
    return evolve(graph, m, cfg)


def test_flat_rhs_is_zero():
    graph, m = make_graph(4, cycle_edges(4))
    field = CurvatureField.from_kappa(graph, m, np.zeros(4))
    np.testing.assert_array_equal(flow_rhs(graph, m, field, np.zeros(4), FlowConfig()), 0.0)


def test_k2_rhs_and_euler_step():
    graph, m = make_graph(2, [(0, 1)])
    cfg = FlowConfig(beta=0.0, n=1, dt=0.1)
    field = curvature_field(graph, m, 0.5)
    assert flow_rhs(graph, m, field, None, cfg)[0] == pytest.approx(-1.0, abs=1e-9)
    assert flow_step(graph, m, cfg, field=field).g[0] == pytest.approx(0.9, abs=1e-10)


def test_trace_term_cancels_uniform_curvature():
    # -2 kappa g + (R / n) g vanishes when R = kappa and n = 1/2
    graph, m = make_graph(6, cycle_edges(6))
    field = CurvatureField.from_kappa(graph, m, np.full(6, 0.3))
    cfg = FlowConfig(beta=0.0, n=0.5)
    np.testing.assert_allclose(flow_rhs(graph, m, field, None, cfg), 0.0, atol=1e-15)
    assert np.array_equal(flow_step(graph, m, cfg, field=field).g, m.g)


def test_floor_clamp():
    graph, _ = make_graph(2, [(0, 1)])
    m = MetricState.build(graph, [1e-6], g_floor=1e-6)
    out = flow_step(graph, m, FlowConfig(beta=0.0, n=1, dt=0.5))
    assert out.g[0] == 1e-6


def test_zero_steps_returns_input():
    graph, m = make_graph(3, complete_edges(3))
    out, trace = evolve(graph, m, FlowConfig(steps=0))
    assert out is m and len(trace) == 0


@pytest.mark.parametrize("integrator", ["euler", "rk4"])
def test_flat_graph_is_fixed_point(integrator):
    # lazy-free walks on a long cycle have zero curvature everywhere
    graph, m = make_graph(8, cycle_edges(8), theta=np.zeros(8))
    cfg = FlowConfig(beta=0.5, alpha=0.0, steps=5, dt=0.1, integrator=integrator)
    out, trace = evolve(graph, m, cfg, loss=QuadraticLoss(8))
    assert np.array_equal(out.g, m.g)
    np.testing.assert_allclose(trace.column("ric_l2"), 0.0, atol=1e-9)
    np.testing.assert_allclose(trace.column("grad_ric_lp"), 0.0, atol=1e-9)


def test_k3_contraction_golden():
    t0 = time.perf_counter()
    graph, m = make_graph(3, complete_edges(3))
    cfg = FlowConfig(beta=0.0, n=2, dt=0.01)
    means = [m.g.mean()]
    for _ in range(100):
        m = flow_step(graph, m, cfg)
        means.append(m.g.mean())
    assert np.all(np.diff(means) < 0)
    out, _ = k3_run(0.01, "euler", 100)
    assert np.array_equal(out.g, m.g)
    # golden value from the reference pipeline
    assert out.g[0] == pytest.approx(0.32258907, abs=1e-7)
    assert time.perf_counter() - t0 < 2.0


def test_rk4_matches_closed_form():
    # uniform curvature 0.75 with n = 2 gives g' = -1.125 g
    out, _ = k3_run(0.01, "rk4", 100)
    assert out.g[0] == pytest.approx(np.exp(-1.125), rel=1e-6)


def test_symmetric_graph_stays_symmetric_per_step():
    graph, m = make_graph(7, cycle_edges(7))
    cfg = FlowConfig(beta=0.0, n=1, dt=0.05)
    for _ in range(20):
        m = flow_step(graph, m, cfg)
        assert np.ptp(m.g) <= 1e-10


def test_curvature_reuse_matches_every_step_on_symmetric_graph():
    graph, m = make_graph(3, complete_edges(3))
    a, _ = evolve(graph, m, FlowConfig(beta=0.0, n=2, dt=0.01, steps=20))
    b, _ = evolve(graph, m, FlowConfig(beta=0.0, n=2, dt=0.01, steps=20, curvature_every=5))
    np.testing.assert_allclose(a.g, b.g, rtol=1e-8)


def test_trace_csv(tmp_path):
    graph, m = make_graph(3, complete_edges(3))
    p = tmp_path / "t.csv"
    evolve(graph, m, FlowConfig(steps=4), trace_path=p)
    assert len(p.read_text().splitlines()) == 5


def test_invalid_config_and_blowup():
    with pytest.raises(InvalidInputError):
        FlowConfig(dt=0).validate()
    with pytest.raises(InvalidInputError):
        FlowConfig(integrator="midpoint").validate()
    graph, m = make_graph(2, [(0, 1)])
    field = CurvatureField.from_kappa(graph, m, [np.nan])
    with pytest.raises(FlowBlowupError):
        flow_step(graph, m, FlowConfig(), field=field)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 9), st.floats(0.0, 2.0), st.integers(0, 1000))
def test_positivity_after_every_step(V, beta, seed):
    rng = np.random.default_rng(seed)
    graph, _ = make_graph(V, complete_edges(V), theta=rng.normal(size=V))
    m = MetricState.build(graph, rng.uniform(1e-3, 3.0, graph.edge_count), g_floor=1e-3)
    cfg = FlowConfig(beta=beta, dt=0.2)
    loss = QuadraticLoss(V, 10.0)
    for _ in range(3):
        m = flow_step(graph, m, cfg, loss=loss)
        assert m.g.min() >= m.g_floor
