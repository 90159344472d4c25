import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import complete_edges, cycle_edges, make_graph
from ricciopt.curvature import CurvatureField, curvature_field
from ricciopt.diagnostics import (
    HoloConfig,
    decoherence_time,
    entanglement_bound,
    entanglement_entropy,
    finite_difference_hessian,
    geometric_distortion,
    hawking_temperature,
    robustness_bound,
    smallest_hessian_eigenvalue,
)
from ricciopt.errors import BoundaryError, InvalidInputError
from ricciopt.flow import FlowConfig, evolve
from ricciopt.graph import MetricState
from ricciopt.losses import LossOracle, QuadraticLoss, RosenbrockSum


def test_entropy_values():
    assert entanglement_entropy(0.0) == 0.0
    assert entanglement_entropy(1.0) == 0.0
    assert entanglement_entropy(0.5) == pytest.approx(math.log(2), abs=1e-12)
    # mpmath at 30 digits
    assert entanglement_entropy(0.1) == pytest.approx(0.325082973391448239506550028224, abs=1e-12)
    with pytest.raises(InvalidInputError):
        entanglement_entropy(1.5)


@settings(max_examples=100)
@given(st.floats(0.0, 1.0))
def test_entropy_symmetric(p):
    assert entanglement_entropy(p) == pytest.approx(entanglement_entropy(1 - p), abs=1e-12)


def test_entropy_maximal_at_half():
    grid = np.linspace(0, 1, 10001)
    vals = [entanglement_entropy(p) for p in grid]
    assert grid[int(np.argmax(vals))] == 0.5


def test_entanglement_bound_examples():
    graph, m = make_graph(2, [(0, 1)])
    eb = entanglement_bound(graph, m, HoloConfig(p_drop=0.5, region=(0,)))
    assert eb.area == 1.0 and eb.bound == 0.25 and not eb.satisfied
    assert eb.rho_E == pytest.approx(math.log(2) / 0.25)
    assert entanglement_bound(graph, m, HoloConfig(p_drop=0.0, region=(0,))).satisfied
    with pytest.raises(BoundaryError):
        entanglement_bound(graph, m, HoloConfig(region=()))
    with pytest.raises(BoundaryError):
        entanglement_bound(graph, m, HoloConfig(region=(0, 1)))


def test_distortion_examples():
    graph, m = make_graph(2, [(0, 1)])
    m3 = MetricState.build(graph, [3.0])
    assert geometric_distortion(graph, m, m) == 0.0
    assert geometric_distortion(graph, m3, m) == 2.0
    flat, mf = make_graph(8, cycle_edges(8))
    out, _ = evolve(flat, mf, FlowConfig(alpha=0.0, steps=5, dt=0.1))
    assert geometric_distortion(flat, out, mf) == 0.0


def test_robustness_examples():
    assert robustness_bound(1.0, 0.1, 4.0) == pytest.approx(0.1, abs=1e-12)
    assert robustness_bound(3.0, 0.0, 2.0) == 0.0
    assert math.isinf(robustness_bound(1.0, 0.1, 0.0))
    assert math.isinf(robustness_bound(1.0, 0.1, -1.0))


@settings(max_examples=100)
@given(st.floats(0.01, 10), st.floats(0.0, 5), st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.01, 5))
def test_robustness_monotone(L, rho, d_rho, lam, d_lam):
    assert robustness_bound(L, rho + d_rho, lam) > robustness_bound(L, rho, lam) or rho + d_rho == rho
    if rho > 0:
        assert robustness_bound(L, rho, lam + d_lam) < robustness_bound(L, rho, lam)


def test_decoherence_examples():
    graph, m = make_graph(2, [(0, 1)], g=[2.0])
    # ric = 1 at both ends with vol 0.5 gives trace 1
    f = CurvatureField.from_kappa(graph, m, [1.0])
    assert decoherence_time(f, m, HoloConfig(eps_quantum=math.exp(-1))) == pytest.approx(1.0, abs=1e-12)
    assert decoherence_time(f, m, HoloConfig(eps_quantum=math.exp(-2))) == pytest.approx(2.0, abs=1e-12)
    k3, mk = make_graph(3, complete_edges(3))
    t = decoherence_time(curvature_field(k3, mk, 0.0), mk, HoloConfig(eps_quantum=math.exp(-1)))
    assert t == pytest.approx(0.816496580927726, abs=1e-6)
    zero = CurvatureField.from_kappa(k3, mk, np.zeros(3))
    assert math.isinf(decoherence_time(zero, mk, HoloConfig()))


class Saddle(LossOracle):
    def value_and_grad(self, theta):
        x, y = theta
        return 0.5 * (x * x - 4 * y * y), np.array([x, -4 * y])


class Quartic(LossOracle):
    def value_and_grad(self, theta):
        return 2.0 * float(theta[0] ** 2), np.array([4.0 * theta[0]])


def test_hawking_examples():
    t = hawking_temperature(QuadraticLoss(5), np.ones(5))
    assert t.value == pytest.approx(1.0, rel=1e-8) and t.det_sign == 1.0
    assert hawking_temperature(Quartic(), [0.3]).value == pytest.approx(2.0, rel=1e-8)
    s = hawking_temperature(Saddle(), [0.1, 0.2])
    assert s.value == pytest.approx(2.0, rel=1e-8) and s.det_sign == -1.0
    d = hawking_temperature(QuadraticLoss(70, 4.0), np.zeros(70))
    assert d.diagonal_approx and d.value == pytest.approx(math.sqrt(np.prod(np.logspace(0, np.log10(4.0), 70))), rel=1e-6)


def test_finite_difference_hessian_matches_analytic():
    rng = np.random.default_rng(0)
    for cond in (1.0, 10.0, 1000.0):
        loss = QuadraticLoss(6, cond, center=rng.normal(size=6))
        H = finite_difference_hessian(loss, rng.normal(size=6))
        np.testing.assert_allclose(H, loss.hessian(None), rtol=1e-4, atol=1e-4 * cond)
    rb = RosenbrockSum()
    x = np.array([0.3, -0.2, 0.5, 1.1])
    np.testing.assert_allclose(finite_difference_hessian(rb, x), rb.hessian(x), rtol=1e-4, atol=1e-3)
    assert smallest_hessian_eigenvalue(QuadraticLoss(4, 9.0), np.zeros(4)) == pytest.approx(1.0, rel=1e-6)


def test_holo_config_validation():
    graph, _ = make_graph(2, [(0, 1)])
    for kw in (dict(p_drop=2.0), dict(G_N=0.0), dict(eps_quantum=1.0), dict(region=(5,))):
        with pytest.raises(InvalidInputError):
            HoloConfig(**kw).validate(graph)
