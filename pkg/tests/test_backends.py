import os
import subprocess
import sys

import numpy as np
import pytest

from ricciopt import _backend
from ricciopt.benchmarks import random_regular_graph
from ricciopt.curvature import CurvatureOptions, curvature_field
from ricciopt.graph import MetricState
from ricciopt.transport import TransportProblem, sinkhorn_w1

needs_compiled = pytest.mark.skipif("compiled" not in _backend.available(), reason="extension not built")


def test_python_backend_always_available():
    assert "python" in _backend.available()
    with pytest.raises(ValueError):
        _backend.get("gpu")


def test_environment_forces_fallback():
    env = dict(os.environ, RICCIOPT_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from ricciopt import _backend; print(_backend.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
def test_transport_agrees_across_backends():
    rng = np.random.default_rng(21)
    for _ in range(50):
        m, n = rng.integers(1, 7, size=2)
        a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        C = rng.uniform(0, 4, (m, n))
        p = TransportProblem(a, b, C)
        va, ia = sinkhorn_w1(p, backend="compiled", return_info=True)
        vb, ib = sinkhorn_w1(p, backend="python", return_info=True)
        assert va == pytest.approx(vb, abs=1e-12)
        assert ia["iterations"] == ib["iterations"]


@needs_compiled
@pytest.mark.parametrize("alpha", [0.0, 0.5])
def test_curvature_agrees_across_backends(alpha):
    graph = random_regular_graph(60, 4, seed=3)
    rng = np.random.default_rng(0)
    m = MetricState.build(graph, rng.uniform(0.3, 3.0, graph.edge_count))
    a = curvature_field(graph, m, options=CurvatureOptions(alpha=alpha, backend="compiled"))
    b = curvature_field(graph, m, options=CurvatureOptions(alpha=alpha, backend="python"))
    np.testing.assert_array_equal(a.distance, b.distance)
    np.testing.assert_allclose(a.kappa, b.kappa, atol=1e-12)
