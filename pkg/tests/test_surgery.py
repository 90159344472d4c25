import json
import math

import numpy as np
import pytest

from conftest import complete_edges, make_graph
from ricciopt.curvature import CurvatureField, curvature_field
from ricciopt.errors import InvalidInputError
from ricciopt.graph import MetricState
from ricciopt import surgery as S


def field_with(graph, m, grad=None, kappa=None):
    base = CurvatureField.from_kappa(graph, m, np.zeros(graph.edge_count) if kappa is None else kappa)
    if grad is None:
        return base
    return CurvatureField(base.kappa, base.ric_vertex, base.ric_edge_tensor, np.asarray(grad, float), base.w1,
                          base.distance)


CFG = S.SurgeryConfig(kappa_thresh=1.5)


def test_detect_none():
    graph, m = make_graph(3, complete_edges(3))
    assert S.detect(field_with(graph, m), m, CFG) == S.NONE


def test_detect_neckpinch():
    graph, m = make_graph(3, [(0, 1), (1, 2)])
    assert S.detect(field_with(graph, m, grad=[2.0, 0.0]), m, CFG) == S.NECKPINCH


def test_detect_collapse():
    graph, m = make_graph(3, [(0, 1), (1, 2)], g=[0.5, 1.0])
    assert S.detect(field_with(graph, m), m, CFG) == S.COLLAPSE


def test_detect_conical():
    graph, m = make_graph(2, [(0, 1)])
    f = field_with(graph, m, kappa=[2.0])
    assert S.detect(f, m, CFG) == S.CONICAL


def test_neckpinch_inserts_shortcut():
    graph, m = make_graph(3, [(0, 1), (1, 2)])
    f = field_with(graph, m, grad=[2.0, 0.5])
    g2, m2, ev = S.neckpinch(graph, m, f, 0.0, CFG, step=4)
    assert ev.inserted == ((0, 2),)
    assert ev.lambda_or_alpha == pytest.approx(math.log(2.0) / 1.5)
    assert ev.location == (0, 1) and ev.step == 4 and not ev.noop
    assert g2.edge_count == 3 and g2.has_edge(0, 2)
    assert m2.g[g2.edge_index(0, 2)] == 1.0
    np.testing.assert_array_equal(m2.g[:2], m.g)


def test_neckpinch_on_complete_graph_is_noop():
    graph, m = make_graph(4, complete_edges(4))
    f = field_with(graph, m, grad=[3.0, 0, 0, 0, 0, 0])
    g2, m2, ev = S.neckpinch(graph, m, f, 1.0, CFG)
    assert ev.noop and g2 is graph and m2 is m


def test_neckpinch_large_loss_hits_floor():
    graph, m = make_graph(3, [(0, 1), (1, 2)])
    f = field_with(graph, m, grad=[5.0, 0.0])
    _, m2, _ = S.neckpinch(graph, m, f, 1e6, CFG)
    assert m2.g[-1] == m.g_floor


def test_neckpinch_tie_breaks_to_lowest_edge():
    graph, m = make_graph(4, [(0, 1), (1, 2), (2, 3)])
    _, _, ev = S.neckpinch(graph, m, field_with(graph, m, grad=[0.0, 2.0, -2.0]), 0.0, CFG)
    assert ev.location == (1, 2)


def test_collapse_uniform_maps_to_shift():
    graph, m = make_graph(4, [(0, 1), (1, 2), (2, 3)])
    m2, ev = S.collapse_normalize(graph, m, CFG)
    np.testing.assert_allclose(m2.g, 1.0, atol=1e-15)
    assert ev.kind == S.COLLAPSE


def test_collapse_two_values():
    graph, m = make_graph(3, [(0, 1), (1, 2)], g=[0.5, 1.5])
    m2, _ = S.collapse_normalize(graph, m, CFG)
    np.testing.assert_allclose(m2.g, [0.0, 2.0], atol=1e-4)
    assert m2.g.min() >= m.g_floor
    np.testing.assert_array_equal(m2.g, np.maximum([1 - 0.5 / math.sqrt(0.25 + 1e-5), 1 + 0.5 / math.sqrt(0.25 + 1e-5)], m.g_floor))


def test_collapse_shift_below_floor_clamps():
    graph, m = make_graph(3, [(0, 1), (1, 2)], g=[0.5, 1.5])
    m2, _ = S.collapse_normalize(graph, m, S.SurgeryConfig(bn_beta=-5.0))
    assert np.all(m2.g >= m.g_floor)


def test_collapse_needs_two_edges():
    graph, m = make_graph(2, [(0, 1)])
    with pytest.raises(InvalidInputError):
        S.collapse_normalize(graph, m, CFG)


def test_conical_zero_theta_unchanged():
    graph, m = make_graph(3, complete_edges(3))
    f = curvature_field(graph, m, 0.5)
    m2, _ = S.conical_repair(graph, m, f, CFG)
    np.testing.assert_array_equal(m2.g, m.g)


def test_conical_zero_curvature_edge_unchanged():
    graph, m = make_graph(3, [(0, 1), (1, 2)], theta=[1.0, 2.0, 3.0])
    f = field_with(graph, m, kappa=[0.0, 0.7])
    m2, _ = S.conical_repair(graph, m, f, CFG)
    assert m2.g[0] == m.g[0] and m2.g[1] != m.g[1]


def test_conical_k2_value():
    graph, m = make_graph(2, [(0, 1)], theta=[1.0, 1.0])
    f = curvature_field(graph, m, 0.5)
    m2, ev = S.conical_repair(graph, m, f, CFG)
    # curvature norm sqrt(2) from ric = 1 and vol = 1 at both ends
    assert m2.g[0] == pytest.approx(2.0298835719535588779, abs=1e-9)
    assert ev.lambda_or_alpha == pytest.approx(math.sqrt(1.5 / math.sqrt(2.0)), abs=1e-9)


def test_event_log(tmp_path):
    graph, m = make_graph(3, [(0, 1), (1, 2)])
    _, _, ev = S.neckpinch(graph, m, field_with(graph, m, grad=[2.0, 0.5]), 0.0, CFG, step=2)
    p = tmp_path / "events.jsonl"
    S.write_events(p, [ev, ev])
    rows = [json.loads(x) for x in p.read_text().splitlines()]
    assert len(rows) == 2 and rows[0]["inserted"] == [[0, 2]] and rows[0]["kind"] == "neckpinch"


def test_apply_dispatch_and_none():
    graph, m = make_graph(3, complete_edges(3))
    f = field_with(graph, m)
    g2, m2, ev = S.detect_and_apply(graph, m, f, 0.0, CFG)
    assert ev is None and g2 is graph and m2 is m


def test_invalid_config():
    with pytest.raises(InvalidInputError):
        S.SurgeryConfig(kappa_thresh=0).validate()


def test_all_surgeries_keep_floor_and_edges():
    rng = np.random.default_rng(4)
    for _ in range(50):
        V = 6
        graph, _ = make_graph(V, [(i, i + 1) for i in range(V - 1)], theta=rng.normal(size=V))
        m = MetricState.build(graph, rng.uniform(1e-6, 2.0, V - 1))
        f = CurvatureField.from_kappa(graph, m, rng.uniform(-3, 1, V - 1))
        for kind in (S.NECKPINCH, S.COLLAPSE, S.CONICAL):
            g2, m2, _ = S.apply(kind, graph, m, f, float(rng.uniform(0, 5)), CFG)
            assert m2.g.min() >= m.g_floor
            assert g2.vertex_count == V and g2.edge_count >= graph.edge_count
            np.testing.assert_array_equal(g2.edges[:graph.edge_count], graph.edges)
            if kind != S.NECKPINCH:
                assert g2 is graph
