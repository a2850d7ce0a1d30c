"""Pure-numpy twin of :mod:`so3sync.kernels_numba` (same signatures)."""

import numpy as np

OK, NEED_JUMP, NONFINITE, DRIFT = 0, 1, 2, 3


def _hat(v):
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _psi(c):
    return 0.5 * np.stack([c[..., 2, 1] - c[..., 1, 2],
                           c[..., 0, 2] - c[..., 2, 0],
                           c[..., 1, 0] - c[..., 0, 1]], axis=-1)


def _rodrigues(theta, u):
    theta = np.asarray(theta, dtype=float)
    k = _hat(u)
    s = np.sin(theta)[..., None, None]
    c1 = (1.0 - np.cos(theta))[..., None, None]
    return np.eye(3) + s * k + c1 * (k @ k)


def _potential(r, x, A, u, gamma):
    ar = A @ r @ _rodrigues(x, u)
    return np.trace(A) - np.trace(ar, axis1=-2, axis2=-1) + 0.5 * gamma * np.asarray(x) ** 2


def potential(r, x, A, u, gamma):
    return float(_potential(r, x, A, u, gamma))


def _min_over(r, A, u, gamma, angles):
    vals = [_potential(r, np.full(r.shape[0], a), A, u, gamma) for a in angles]
    return np.min(vals, axis=0)


def edge_gaps(Rb, xi, A, u, gamma, xi_set):
    return _potential(Rb, xi, A, u, gamma) - _min_over(Rb, A, u, gamma, xi_set)


def aux_gaps(R, Q, zeta, A, u, gamma, pi_set):
    qt = np.swapaxes(Q, -1, -2) @ R
    return _potential(qt, zeta, A, u, gamma) - _min_over(qt, A, u, gamma, pi_set)


def lyapunov(kind, R, W, Rb, xi, Q, zeta, J, A, u, gamma, gains):
    if kind == 0:
        v = gains[0] * np.sum(_potential(Rb, np.zeros(len(Rb)), A, u, 0.0))
    else:
        v = gains[0] * np.sum(_potential(Rb, xi, A, u, gamma))
    v += np.einsum("ni,nij,nj->", W, J, W)
    if kind == 2:
        qt = np.swapaxes(Q, -1, -2) @ R
        v += gains[5] * np.sum(_potential(qt, zeta, A, u, gamma))
    return float(v)


def vector_field(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
                 heads, tails, A, u, gamma, gains):
    k_r, k_w, k_wb, k_xi, k_q, k_qt, k_z = gains
    n = R.shape[0]
    dR = R @ _hat(W)
    wb = W[heads] - np.einsum("kji,kj->ki", Rb, W[tails])
    dRb = Rb @ _hat(wb)
    dxi = np.zeros(len(Rb))
    dQ = np.zeros_like(Q)
    dz = np.zeros(n)
    a_rb = A @ Rb
    if kind == 0:
        g = _psi(a_rb)
    else:
        ra = _rodrigues(xi, u)
        g = _psi(ra @ a_rb)
        dxi = -k_xi * (gamma * xi + 2.0 * _psi(a_rb @ ra) @ u)
    tau = np.zeros((n, 3))
    np.add.at(tau, heads, -k_r * g)
    np.add.at(tau, tails, k_r * np.einsum("kij,kj->ki", Rb, g))
    if kind != 2:
        d = W[heads] - W[tails]
        np.add.at(tau, heads, -k_wb * d)
        np.add.at(tau, tails, k_wb * d)
        tau -= k_w * W
    else:
        qt = np.swapaxes(Q, -1, -2) @ R
        rz = _rodrigues(zeta, u)
        a_qt = A @ qt
        gq = _psi(rz @ a_qt)
        dQ = k_q * Q @ _hat(np.einsum("nij,nj->ni", qt, gq))
        dz = -k_z * (gamma * zeta + 2.0 * _psi(a_qt @ rz) @ u)
        tau -= k_qt * gq
        if experimental:
            d = gq[heads] - gq[tails]
            np.add.at(tau, heads, -k_wb * d)
            np.add.at(tau, tails, k_wb * d)
    jw = np.einsum("nij,nj->ni", J, W)
    dW = np.einsum("nij,nj->ni", Jinv, tau - np.cross(W, jw))
    return dR, dW, dRb, dxi, dQ, dz


def torques(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv, heads, tails, A, u, gamma, gains):
    dW = vector_field(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
                      heads, tails, A, u, gamma, gains)[1]
    jw = np.einsum("nij,nj->ni", J, W)
    return np.einsum("nij,nj->ni", J, dW) + np.cross(W, jw)


def _orth_err(m):
    e = np.swapaxes(m, -1, -2) @ m - np.eye(3)
    return np.sqrt(np.sum(e * e, axis=(-2, -1)))


def project(m, tol=1e-12, max_iter=50):
    """Batched averaging iteration; returns (matrices, ok)."""
    x = np.array(m, dtype=float)
    for _ in range(max_iter):
        if np.all(_orth_err(x) <= tol):
            return x, True
        det = np.linalg.det(x)
        if not np.all(det > 0):
            return x, False
        x = 0.5 * (x + np.swapaxes(np.linalg.inv(x), -1, -2))
    return x, bool(np.all(_orth_err(x) <= tol))


def rk4_step(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
             heads, tails, A, u, gamma, gains, h):
    state = (R, W, Rb, xi, Q, zeta)

    def f(s):
        return vector_field(kind, experimental, *s, J, Jinv, heads, tails, A, u, gamma, gains)

    a1 = f(state)
    a2 = f(tuple(x + 0.5 * h * d for x, d in zip(state, a1)))
    a3 = f(tuple(x + 0.5 * h * d for x, d in zip(state, a2)))
    a4 = f(tuple(x + h * d for x, d in zip(state, a3)))
    R1, W1, Rb1, xi1, Q1, z1 = (x + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
                                for x, d1, d2, d3, d4 in zip(state, a1, a2, a3, a4))
    R1, ok = project(R1)
    if kind == 2:
        Q1, good = project(Q1)
        ok = ok and good
    pk, good = project(Rb1)
    ok = ok and good
    ref = np.swapaxes(R1[tails], -1, -2) @ R1[heads]
    e = pk - ref
    drift = float(np.sqrt(np.sum(e * e, axis=(-2, -1))).max(initial=0.0))
    return R1, W1, ref, xi1, Q1, z1, drift, ok


def flow(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv, heads, tails,
         A, u, gamma, gains, xi_set, pi_set, delta, delta_q, h, n_steps, drift_tol):
    v0 = lyapunov(kind, R, W, Rb, xi, Q, zeta, J, A, u, gamma, gains)
    max_dv = -np.inf
    max_drift = 0.0
    for s in range(n_steps):
        if kind != 0:
            if len(Rb) and np.max(edge_gaps(Rb, xi, A, u, gamma, xi_set)) >= delta:
                return s, NEED_JUMP, max_dv, max_drift, v0
            if kind == 2 and np.max(aux_gaps(R, Q, zeta, A, u, gamma, pi_set)) >= delta_q:
                return s, NEED_JUMP, max_dv, max_drift, v0
        R1, W1, Rb1, xi1, Q1, z1, drift, ok = rk4_step(
            kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
            heads, tails, A, u, gamma, gains, h)
        if not ok or not all(np.all(np.isfinite(a)) for a in (R1, W1, xi1, Q1, z1)):
            return s, NONFINITE, max_dv, max_drift, v0
        max_drift = max(max_drift, drift)
        if drift > drift_tol:
            return s, DRIFT, max_dv, max_drift, v0
        R[:] = R1
        W[:] = W1
        Rb[:] = Rb1
        xi[:] = xi1
        Q[:] = Q1
        zeta[:] = z1
        v1 = lyapunov(kind, R, W, Rb, xi, Q, zeta, J, A, u, gamma, gains)
        max_dv = max(max_dv, v1 - v0)
        v0 = v1
    return n_steps, OK, max_dv, max_drift, v0
