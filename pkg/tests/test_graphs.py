import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgraph.graphs import (CombinatorialGraph, Edge, GraphFunction, MetricGraph, ResonanceWarning,
                           SymmetryOp, apply_symmetry, build_bowtie, build_dumbbell, build_graph,
                           build_interval, build_lollipop, graph_from_dict, graph_from_json,
                           graph_to_json, intervals_for, laplacian)

from conftest import dumbbell


def test_dumbbell_edge_lengths():
    g = build_dumbbell(2.0)
    assert [e.length for e in g.edges] == pytest.approx([2 * math.pi, 4.0, 2 * math.pi])
    assert [e.is_loop for e in g.edges] == [True, False, True]
    assert g.degree(0) == 3 and g.degree(1) == 3


def test_dumbbell_resonance_flag():
    with pytest.warns(ResonanceWarning):
        g = build_dumbbell(math.pi / 2)
    assert g.resonant
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not build_dumbbell(2.0).resonant


@pytest.mark.parametrize("builder", [build_dumbbell, build_lollipop, build_interval])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf])
def test_builders_reject_bad_lengths(builder, bad):
    with pytest.raises(ValueError):
        builder(bad)


def test_lollipop_leaf_is_neumann():
    g = build_lollipop(2.0)
    assert len(g.vertices) == 2 and len(g.edges) == 2
    assert g.degree(1) == 1
    assert 1 in g.markers["neumann"]


def test_bowtie_structure():
    g = build_bowtie()
    A = laplacian(g)
    assert list(np.diag(A)) == [2, 2, 4, 2, 2]
    assert len(g.edges) == 6
    assert all(A[2, j] == -1 for j in (0, 1, 3, 4))
    expected = np.array([[2, -1, -1, 0, 0], [-1, 2, -1, 0, 0], [-1, -1, 4, -1, -1],
                         [0, 0, -1, 2, -1], [0, 0, -1, -1, 2]], dtype=float)
    assert np.array_equal(A, expected)
    assert np.allclose(np.linalg.eigvalsh(A), [0, 1, 3, 3, 5], atol=1e-12)
    assert np.allclose(A @ np.ones(5), 0)


def test_combinatorial_graph_validation():
    with pytest.raises(ValueError):
        CombinatorialGraph(2, ((0, 0, 1.0),))
    with pytest.raises(ValueError):
        CombinatorialGraph(2, ((0, 3, 1.0),))


@given(st.integers(2, 7), st.data())
def test_laplacian_rows_sum_to_zero(n, data):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = data.draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))
    weights = data.draw(st.lists(st.floats(0.1, 10), min_size=len(chosen), max_size=len(chosen)))
    g = CombinatorialGraph(n, tuple((i, j, w) for (i, j), w in zip(chosen, weights)))
    A = laplacian(g)
    assert np.array_equal(A, A.T)
    assert np.max(np.abs(A.sum(axis=1))) <= 1e-12 * max(1.0, np.abs(A).max())


@given(st.floats(0.05, 20))
def test_total_length_matches_edges(L):
    for g in (dumbbell(L), build_lollipop(L), build_interval(L)):
        assert g.total_length == pytest.approx(sum(e.length for e in g.edges), rel=1e-15)


def test_json_round_trip():
    g = build_lollipop(1.5)
    doc = json.loads(graph_to_json(g))
    assert set(doc) == {"vertices", "edges", "markers"}
    assert {"from", "to", "length", "loop"} <= set(doc["edges"][0])
    h = graph_from_json(graph_to_json(g))
    assert h.edges == g.edges and dict(h.markers) == dict(g.markers)


def test_json_loop_flag_checked():
    doc = {"vertices": 1, "edges": [{"from": 0, "to": 0, "length": 1.0, "loop": False}]}
    with pytest.raises(ValueError):
        graph_from_dict(doc)


def test_build_graph_by_name():
    assert build_graph("interval", 2.0).family == "interval"
    with pytest.raises(ValueError):
        build_graph("doublefork", 1.0)


def _random_function(g, rng, n=24):
    # L = pi: every edge value is -1 at the vertices
    f = GraphFunction.from_callables(g, [lambda x: np.cos(x) + 0.3 * np.sin(2 * x),
                                         lambda x: np.cos(x) + 0.1 * np.sin(x),
                                         lambda x: np.cos(3 * x)], (n, n, n))
    # independent random interior values, vertex values shared
    vals = []
    for v in f.values:
        w = v.copy()
        w[1:-1] += rng.normal(size=w.size - 2)
        vals.append(w)
    return f.with_values(vals)


@pytest.mark.parametrize("name", ["R1", "R2", "R3"])
def test_symmetries_are_norm_preserving_involutions(name):
    g = dumbbell(math.pi)
    f = _random_function(g, np.random.default_rng(3))
    op = SymmetryOp(name)
    once = apply_symmetry(op, f)
    twice = apply_symmetry(op, once)
    assert all(np.array_equal(a, b) for a, b in zip(twice.values, f.values))
    assert once.norm() == pytest.approx(f.norm(), rel=1e-14)


def test_constant_fixed_by_all_symmetries():
    g = build_dumbbell(2.0)
    f = GraphFunction.from_callables(g, [0.7, 0.7, 0.7], intervals_for(g, 0.1))
    for name in ("R1", "R2", "R3"):
        assert apply_symmetry(SymmetryOp(name), f).allclose(f, 0.0)


def test_loop_mode_is_odd_under_R1():
    g = build_dumbbell(2.0)
    f = GraphFunction.from_callables(g, [np.sin, 0.0, 0.0], intervals_for(g, 0.05))
    assert apply_symmetry(SymmetryOp("R1"), f).allclose(-f, 1e-15)


def test_bowtie_permutations():
    u = np.arange(5.0)
    for name in ("R1", "R2", "R3"):
        op = SymmetryOp.bowtie(name)
        assert np.array_equal(apply_symmetry(op, apply_symmetry(op, u)), u)
    with pytest.raises(ValueError):
        SymmetryOp("perm", (1, 2, 0))


def test_vertex_coherence_enforced():
    g = build_interval(1.0)
    GraphFunction(g, (np.linspace(0, 1, 5),))
    g2 = build_dumbbell(2.0)
    n = intervals_for(g2, 0.5)
    with pytest.raises(ValueError):
        GraphFunction.from_callables(g2, [0.0, 1.0, 0.0], n)


def test_symmetry_rejects_other_graphs():
    f = GraphFunction(build_interval(1.0), (np.zeros(4),))
    with pytest.raises(ValueError):
        apply_symmetry(SymmetryOp("R1"), f)
