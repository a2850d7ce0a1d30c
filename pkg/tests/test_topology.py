import numpy as np
import pytest
from hypothesis import given, strategies as st

from so3sync.so3 import axis_angle, random_rotation
from so3sync.topology import (CycleError, DisconnectedError, DuplicateEdgeError, SelfLoopError,
                              TopologyError, build_tree, hbar_apply, hbar_matrix,
                              hbar_premultiply, incidence, laplacian, random_tree)

from conftest import REF_EDGES


def test_two_agent_tree():
    t = build_tree(2, [(1, 2)])
    assert t.n_edges == 1
    assert t.out_edges(1) == [1] and t.in_edges(2) == [1]
    assert t.in_edges(1) == [] and t.out_edges(2) == []
    assert np.array_equal(incidence(t), [[1], [-1]])


def test_reference_tree():
    t = build_tree(7, REF_EDGES)
    assert t.n_edges == 6
    assert t.neighbors(3) == [2, 4, 6]


def test_distinct_errors():
    with pytest.raises(CycleError):
        build_tree(3, [(1, 2), (2, 3), (3, 1)])
    with pytest.raises(DisconnectedError):
        build_tree(4, [(1, 2), (3, 4)])
    with pytest.raises(SelfLoopError):
        build_tree(2, [(1, 1)])
    with pytest.raises(DuplicateEdgeError):
        build_tree(2, [(1, 2), (2, 1)])
    with pytest.raises(TopologyError):
        build_tree(2, [(1, 3)])


def test_path_laplacian():
    t = build_tree(3, [(1, 2), (2, 3)])
    assert np.array_equal(laplacian(t), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_hbar_apply_examples():
    t = build_tree(2, [(1, 2)])
    rb = axis_angle(np.pi / 2, [0, 0, 1])
    w1, w2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    out = hbar_apply(t, [rb], np.concatenate([w1, w2]))
    assert np.allclose(out, w1 - rb.T @ w2)
    # identity edges reduce to the plain incidence matrix
    t7 = build_tree(7, REF_EDGES)
    w = np.random.default_rng(0).normal(size=21)
    eye = np.tile(np.eye(3), (6, 1, 1))
    assert np.allclose(hbar_apply(t7, eye, w), np.kron(incidence(t7).T, np.eye(3)) @ w)
    assert np.allclose(hbar_apply(t7, eye, np.tile([0.3, -1, 2], 7)), 0)


def test_hbar_premultiply_examples():
    t = build_tree(2, [(1, 2)])
    rb = axis_angle(0.4, [0, 1, 0])
    assert np.array_equal(hbar_premultiply(t, [rb], np.zeros(3)), np.zeros(6))
    a = np.array([1.0, 2.0, 3.0])
    out = hbar_premultiply(t, [rb], a)
    assert np.allclose(out[:3], a) and np.allclose(out[3:], -rb @ a)


def test_length_mismatch_rejected():
    t = build_tree(3, [(1, 2), (2, 3)])
    eye = np.tile(np.eye(3), (2, 1, 1))
    with pytest.raises(ValueError):
        hbar_apply(t, eye, np.zeros(6))
    with pytest.raises(ValueError):
        hbar_premultiply(t, eye, np.zeros(9))
    with pytest.raises(ValueError):
        hbar_apply(t, eye[:1], np.zeros(9))


trees = st.tuples(st.integers(2, 10), st.integers(0, 2**32 - 1)).map(
    lambda a: (random_tree(a[0], np.random.default_rng(a[1])), np.random.default_rng(a[1] + 1)))


@given(trees)
def test_incidence_properties(tr):
    t, _ = tr
    h = incidence(t)
    assert np.allclose(h.T @ np.ones(t.n_agents), 0)
    assert np.linalg.matrix_rank(h) == t.n_agents - 1 == t.n_edges
    assert set(np.unique(h)) <= {-1.0, 0.0, 1.0}
    for i in range(1, t.n_agents + 1):
        for j in range(1, t.n_agents + 1):
            assert len(set(t.out_edges(i)) & set(t.in_edges(j))) <= 1


@given(trees)
def test_hbar_full_column_rank_and_adjoint(tr):
    t, rng = tr
    rb = np.array([random_rotation(rng) for _ in range(t.n_edges)])
    hb = hbar_matrix(t, rb)
    assert np.linalg.matrix_rank(hb) == 3 * t.n_edges
    v = rng.normal(size=3 * t.n_edges)
    w = rng.normal(size=3 * t.n_agents)
    assert np.linalg.norm(hbar_premultiply(t, rb, v)) > 0
    assert hbar_premultiply(t, rb, v) @ w == pytest.approx(v @ hbar_apply(t, rb, w), abs=1e-12 * 100)
    assert np.allclose(hb @ v, hbar_premultiply(t, rb, v), atol=1e-12)
    assert np.allclose(hb.T @ w, hbar_apply(t, rb, w), atol=1e-12)


@given(trees)
def test_laplacian_quadratic_form(tr):
    t, rng = tr
    w = rng.normal(size=3 * t.n_agents)
    h3 = np.kron(incidence(t).T, np.eye(3))
    lhs = w @ np.kron(laplacian(t), np.eye(3)) @ w
    assert lhs == pytest.approx(np.sum((h3 @ w) ** 2), abs=1e-12 * max(1, lhs))
