import numpy as np
import pytest

from so3sync import kernels, kernels_numpy
from so3sync.controllers import Gains
from so3sync.so3 import random_rotation
from so3sync.topology import random_tree

nb = pytest.importorskip("so3sync.kernels_numba")

DELTA = 0.3848


def _args(kind, params, seed, n=7, near=False):
    rng = np.random.default_rng(seed)
    tree = random_tree(n, rng)
    if near:
        # small spread so the state sits in the flow set
        from so3sync.so3 import exp_so3
        R = np.array([exp_so3(0.3 * rng.normal(size=3)) for _ in range(n)])
    else:
        R = np.array([random_rotation(rng) for _ in range(n)])
    W = rng.normal(size=(n, 3)) * 0.3
    Rb = np.swapaxes(R[tree.tails], -1, -2) @ R[tree.heads]
    xi = rng.uniform(-0.3, 0.3, tree.n_edges) if kind else np.zeros(tree.n_edges)
    Q = np.array([R[i] @ random_rotation(rng) if not near else R[i] for i in range(n)])
    zeta = rng.uniform(-0.3, 0.3, n)
    J = np.tile(np.diag([0.06, 0.08, 0.1]), (n, 1, 1))
    p = params
    return (kind, False, R, W, Rb, xi, Q, zeta, J, np.linalg.inv(J), tree.heads, tree.tails,
            p.a, p.u, p.gamma, Gains().as_array())


def _copy(args):
    return tuple(np.array(a) if isinstance(a, np.ndarray) else a for a in args)


def test_env_flag_selects_backend(monkeypatch):
    monkeypatch.setenv(kernels.ENV_VAR, "numpy")
    assert kernels.get_backend() is kernels_numpy
    monkeypatch.setenv(kernels.ENV_VAR, "numba")
    assert kernels.backend_name(kernels.get_backend()) == "numba"
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("kind", [0, 1, 2])
def test_vector_field_parity(kind, ref_params):
    for seed in range(5):
        a = _args(kind, ref_params, seed)
        for x, y in zip(nb.vector_field(*_copy(a)), kernels_numpy.vector_field(*_copy(a))):
            assert np.allclose(x, y, rtol=1e-11, atol=1e-11)


@pytest.mark.parametrize("kind", [0, 1, 2])
def test_lyapunov_and_torque_parity(kind, ref_params):
    a = _args(kind, ref_params, 7)
    lyap = (a[0], *a[2:9], a[12], a[13], a[14], a[15])
    assert nb.lyapunov(*lyap) == pytest.approx(kernels_numpy.lyapunov(*lyap), rel=1e-12)
    assert np.allclose(nb.torques(*_copy(a)), kernels_numpy.torques(*_copy(a)), atol=1e-11)


def test_gap_parity(ref_params, rng):
    p = ref_params
    rb = np.array([random_rotation(rng) for _ in range(20)])
    xi = rng.uniform(-np.pi, np.pi, 20)
    xs = np.array([0.9 * np.pi])
    assert np.allclose(nb.edge_gaps(rb, xi, p.a, p.u, p.gamma, xs),
                       kernels_numpy.edge_gaps(rb, xi, p.a, p.u, p.gamma, xs), atol=1e-12)
    q = np.array([random_rotation(rng) for _ in range(20)])
    assert np.allclose(nb.aux_gaps(rb, q, xi, p.a, p.u, p.gamma, xs),
                       kernels_numpy.aux_gaps(rb, q, xi, p.a, p.u, p.gamma, xs), atol=1e-12)


def test_project_parity(rng):
    m = np.array([random_rotation(rng) + 1e-3 * rng.normal(size=(3, 3)) for _ in range(5)])
    # the compiled projection works one matrix at a time
    outs = [nb.project(x.copy()) for x in m]
    x1, ok1 = np.array([o[0] for o in outs]), all(o[1] for o in outs)
    x2, ok2 = kernels_numpy.project(m.copy())
    assert ok1 and ok2
    assert np.allclose(x1, x2, atol=1e-12)
    assert np.allclose(np.swapaxes(x1, -1, -2) @ x1, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("kind", [0, 1, 2])
def test_rk4_parity(kind, ref_params):
    a = _args(kind, ref_params, 3)
    o1 = nb.rk4_step(*_copy(a), 1e-3)
    o2 = kernels_numpy.rk4_step(*_copy(a), 1e-3)
    for x, y in zip(o1[:6], o2[:6]):
        assert np.allclose(x, y, rtol=1e-11, atol=1e-12)
    assert o1[7] and o2[7]


@pytest.mark.parametrize("kind", [0, 1, 2])
def test_flow_parity(kind, ref_params):
    a1 = _copy(_args(kind, ref_params, 11, near=True))
    a2 = _copy(a1)
    extra = (np.array([0.9 * np.pi]), np.array([0.9 * np.pi]), DELTA, DELTA, 1e-3, 200, 1e-6)
    r1 = nb.flow(*a1, *extra)
    r2 = kernels_numpy.flow(*a2, *extra)
    assert r1[0] == r2[0] and r1[1] == r2[1]
    assert r1[2] == pytest.approx(r2[2], abs=1e-10)
    for x, y in zip(a1[2:8], a2[2:8]):
        assert np.allclose(x, y, atol=1e-10)
    assert r1[2] <= 1e-8  # Lyapunov never rises along the flow


def test_flow_stops_at_jump_set(ref_params):
    a = _copy(_args(1, ref_params, 5))
    a[5][:] = 0.0
    # put one edge at pi about the largest-eigenvalue axis
    a[4][0] = np.diag([-1.0, -1.0, 1.0])
    extra = (np.array([0.9 * np.pi]), np.array([0.9 * np.pi]), DELTA, DELTA, 1e-3, 10, 1e-6)
    for k in (nb, kernels_numpy):
        steps, status, *_ = k.flow(*_copy(a), *extra)
        assert steps == 0 and status == 1
