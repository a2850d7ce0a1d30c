"""numba kernels for the closed-loop flow.

Everything works on raw arrays:

    R (N,3,3) attitudes   W (N,3) body rates   Rb (M,3,3) edge attitudes
    xi (M,) edge angles   Q (N,3,3) auxiliary  zeta (N,) auxiliary angles

``kind`` is 0 (continuous), 1 (hybrid) or 2 (velocity-free).  ``gains`` is
``[k_r, k_w, k_w_bar, k_xi, k_q, k_qtilde, k_zeta]``.  The pure-numpy twin in
:mod:`so3sync.kernels_numpy` must return the same values.
"""

import numpy as np
from numba import njit

jit = njit(cache=True, nogil=True)

OK, NEED_JUMP, NONFINITE, DRIFT = 0, 1, 2, 3


@jit
def _mm(a, b):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]
    return out


@jit
def _mtm(a, b):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[0, i] * b[0, j] + a[1, i] * b[1, j] + a[2, i] * b[2, j]
    return out


@jit
def _mv(a, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = a[i, 0] * v[0] + a[i, 1] * v[1] + a[i, 2] * v[2]
    return out


@jit
def _hat(v):
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@jit
def _rodrigues(theta, u):
    k = _hat(u)
    k2 = _mm(k, k)
    s = np.sin(theta)
    c1 = 1.0 - np.cos(theta)
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = s * k[i, j] + c1 * k2[i, j]
        out[i, i] += 1.0
    return out


@jit
def _ra_entry(i, j, s, c, u):
    """Entry (i, j) of the rotation by angle (sin s, cos c) about unit u."""
    v = (1.0 - c) * u[i] * u[j]
    if i == j:
        return v + c
    # hat(u)[i, j] for i != j
    if i == 0:
        return v + s * (-u[2] if j == 1 else u[1])
    if i == 1:
        return v + s * (u[2] if j == 0 else -u[0])
    return v + s * (-u[1] if j == 0 else u[0])


@jit
def potential(r, x, A, u, gamma):
    """U(r, x) = tr(A) - tr(A r Ra(x)) + gamma x^2 / 2."""
    s = np.sin(x)
    c = np.cos(x)
    tr = 0.0
    for i in range(3):
        for k in range(3):
            ark = A[i, 0] * r[0, k] + A[i, 1] * r[1, k] + A[i, 2] * r[2, k]
            tr += ark * _ra_entry(k, i, s, c, u)
    return A[0, 0] + A[1, 1] + A[2, 2] - tr + 0.5 * gamma * x * x


@jit
def _min_over(r, A, u, gamma, angles):
    best = np.inf
    for a in angles:
        v = potential(r, a, A, u, gamma)
        if v < best:
            best = v
    return best


@jit
def edge_gaps(Rb, xi, A, u, gamma, xi_set):
    m = Rb.shape[0]
    out = np.empty(m)
    for k in range(m):
        out[k] = potential(Rb[k], xi[k], A, u, gamma) - _min_over(Rb[k], A, u, gamma, xi_set)
    return out


@jit
def aux_gaps(R, Q, zeta, A, u, gamma, pi_set):
    n = R.shape[0]
    out = np.empty(n)
    for i in range(n):
        qt = _mtm(Q[i], R[i])
        out[i] = potential(qt, zeta[i], A, u, gamma) - _min_over(qt, A, u, gamma, pi_set)
    return out


@jit
def lyapunov(kind, R, W, Rb, xi, Q, zeta, J, A, u, gamma, gains):
    v = 0.0
    for k in range(Rb.shape[0]):
        x = 0.0 if kind == 0 else xi[k]
        v += gains[0] * potential(Rb[k], x, A, u, gamma if kind != 0 else 0.0)
    for i in range(R.shape[0]):
        jw = _mv(J[i], W[i])
        v += W[i, 0] * jw[0] + W[i, 1] * jw[1] + W[i, 2] * jw[2]
        if kind == 2:
            v += gains[5] * potential(_mtm(Q[i], R[i]), zeta[i], A, u, gamma)
    return v


@jit
def _mm_into(a, b, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]


@jit
def _mtm_into(a, b, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = a[0, i] * b[0, j] + a[1, i] * b[1, j] + a[2, i] * b[2, j]


@jit
def _r_hat_into(r, w, out):
    """out = r hat(w) without forming hat(w)."""
    for i in range(3):
        out[i, 0] = r[i, 1] * w[2] - r[i, 2] * w[1]
        out[i, 1] = r[i, 2] * w[0] - r[i, 0] * w[2]
        out[i, 2] = r[i, 0] * w[1] - r[i, 1] * w[0]


@jit
def _rodrigues_into(theta, k, k2, out):
    s = np.sin(theta)
    c1 = 1.0 - np.cos(theta)
    for i in range(3):
        for j in range(3):
            out[i, j] = s * k[i, j] + c1 * k2[i, j]
        out[i, i] += 1.0


@jit
def _psi_dot(c, u):
    """u . psi(c)"""
    return 0.5 * (u[0] * (c[2, 1] - c[1, 2]) + u[1] * (c[0, 2] - c[2, 0])
                  + u[2] * (c[1, 0] - c[0, 1]))


@jit
def vector_field(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
                 heads, tails, A, u, gamma, gains):
    n = R.shape[0]
    m = Rb.shape[0]
    k_r, k_w, k_wb, k_xi, k_q, k_qt, k_z = (gains[0], gains[1], gains[2], gains[3],
                                            gains[4], gains[5], gains[6])
    dR = np.empty_like(R)
    dW = np.empty_like(W)
    dRb = np.empty_like(Rb)
    dxi = np.zeros(m)
    dQ = np.zeros_like(Q)
    dz = np.zeros(n)
    tau = np.zeros((n, 3))
    # scratch
    ku = _hat(u)
    ku2 = _mm(ku, ku)
    ra = np.empty((3, 3))
    m1 = np.empty((3, 3))
    m2 = np.empty((3, 3))
    wb = np.empty(3)
    g = np.empty(3)

    for i in range(n):
        _r_hat_into(R[i], W[i], dR[i])

    for k in range(m):
        h = heads[k]
        t = tails[k]
        rb = Rb[k]
        for c in range(3):
            wb[c] = W[h, c] - (rb[0, c] * W[t, 0] + rb[1, c] * W[t, 1] + rb[2, c] * W[t, 2])
        _r_hat_into(rb, wb, dRb[k])
        _mm_into(A, rb, m1)
        if kind == 0:
            g[0] = 0.5 * (m1[2, 1] - m1[1, 2])
            g[1] = 0.5 * (m1[0, 2] - m1[2, 0])
            g[2] = 0.5 * (m1[1, 0] - m1[0, 1])
        else:
            _rodrigues_into(xi[k], ku, ku2, ra)
            _mm_into(ra, m1, m2)
            g[0] = 0.5 * (m2[2, 1] - m2[1, 2])
            g[1] = 0.5 * (m2[0, 2] - m2[2, 0])
            g[2] = 0.5 * (m2[1, 0] - m2[0, 1])
            _mm_into(m1, ra, m2)
            dxi[k] = -k_xi * (gamma * xi[k] + 2.0 * _psi_dot(m2, u))
        for c in range(3):
            tau[h, c] -= k_r * g[c]
            tau[t, c] += k_r * (rb[c, 0] * g[0] + rb[c, 1] * g[1] + rb[c, 2] * g[2])
        if kind != 2:
            for c in range(3):
                d = W[h, c] - W[t, c]
                tau[h, c] -= k_wb * d
                tau[t, c] += k_wb * d

    if kind != 2:
        for i in range(n):
            for c in range(3):
                tau[i, c] -= k_w * W[i, c]
    else:
        # the torque below reads attitudes and auxiliary states only
        gq = np.empty((n, 3))
        qt = np.empty((3, 3))
        v = np.empty(3)
        for i in range(n):
            _mtm_into(Q[i], R[i], qt)
            _rodrigues_into(zeta[i], ku, ku2, ra)
            _mm_into(A, qt, m1)
            _mm_into(ra, m1, m2)
            gq[i, 0] = 0.5 * (m2[2, 1] - m2[1, 2])
            gq[i, 1] = 0.5 * (m2[0, 2] - m2[2, 0])
            gq[i, 2] = 0.5 * (m2[1, 0] - m2[0, 1])
            _mm_into(m1, ra, m2)
            dz[i] = -k_z * (gamma * zeta[i] + 2.0 * _psi_dot(m2, u))
            for c in range(3):
                v[c] = k_q * (qt[c, 0] * gq[i, 0] + qt[c, 1] * gq[i, 1] + qt[c, 2] * gq[i, 2])
            _r_hat_into(Q[i], v, dQ[i])
            for c in range(3):
                tau[i, c] -= k_qt * gq[i, c]
        if experimental:
            for k in range(m):
                h = heads[k]
                t = tails[k]
                for c in range(3):
                    d = gq[h, c] - gq[t, c]
                    tau[h, c] -= k_wb * d
                    tau[t, c] += k_wb * d

    for i in range(n):
        ji = J[i]
        wi = W[i]
        jw0 = ji[0, 0] * wi[0] + ji[0, 1] * wi[1] + ji[0, 2] * wi[2]
        jw1 = ji[1, 0] * wi[0] + ji[1, 1] * wi[1] + ji[1, 2] * wi[2]
        jw2 = ji[2, 0] * wi[0] + ji[2, 1] * wi[1] + ji[2, 2] * wi[2]
        r0 = tau[i, 0] - (wi[1] * jw2 - wi[2] * jw1)
        r1 = tau[i, 1] - (wi[2] * jw0 - wi[0] * jw2)
        r2 = tau[i, 2] - (wi[0] * jw1 - wi[1] * jw0)
        for c in range(3):
            dW[i, c] = Jinv[i, c, 0] * r0 + Jinv[i, c, 1] * r1 + Jinv[i, c, 2] * r2
    return dR, dW, dRb, dxi, dQ, dz


@jit
def torques(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv, heads, tails, A, u, gamma, gains):
    """Control torques recovered from the angular-acceleration field."""
    dW = vector_field(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
                      heads, tails, A, u, gamma, gains)[1]
    n = R.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        jw = _mv(J[i], W[i])
        jd = _mv(J[i], dW[i])
        out[i, 0] = jd[0] + (W[i, 1] * jw[2] - W[i, 2] * jw[1])
        out[i, 1] = jd[1] + (W[i, 2] * jw[0] - W[i, 0] * jw[2])
        out[i, 2] = jd[2] + (W[i, 0] * jw[1] - W[i, 1] * jw[0])
    return out


@jit
def _orth_err(m):
    s = 0.0
    for i in range(3):
        for j in range(3):
            d = m[0, i] * m[0, j] + m[1, i] * m[1, j] + m[2, i] * m[2, j]
            if i == j:
                d -= 1.0
            s += d * d
    return np.sqrt(s)


@jit
def project(m, tol=1e-12, max_iter=50):
    """Averaging iteration M <- (M + M^-T)/2; returns (matrix, ok)."""
    x = m.copy()
    for _ in range(max_iter):
        if _orth_err(x) <= tol:
            return x, True
        cof = np.empty((3, 3))
        cof[0, 0] = x[1, 1] * x[2, 2] - x[1, 2] * x[2, 1]
        cof[0, 1] = x[1, 2] * x[2, 0] - x[1, 0] * x[2, 2]
        cof[0, 2] = x[1, 0] * x[2, 1] - x[1, 1] * x[2, 0]
        cof[1, 0] = x[0, 2] * x[2, 1] - x[0, 1] * x[2, 2]
        cof[1, 1] = x[0, 0] * x[2, 2] - x[0, 2] * x[2, 0]
        cof[1, 2] = x[0, 1] * x[2, 0] - x[0, 0] * x[2, 1]
        cof[2, 0] = x[0, 1] * x[1, 2] - x[0, 2] * x[1, 1]
        cof[2, 1] = x[0, 2] * x[1, 0] - x[0, 0] * x[1, 2]
        cof[2, 2] = x[0, 0] * x[1, 1] - x[0, 1] * x[1, 0]
        det = x[0, 0] * cof[0, 0] + x[0, 1] * cof[0, 1] + x[0, 2] * cof[0, 2]
        if not det > 0.0:
            return x, False
        for i in range(3):
            for j in range(3):
                x[i, j] = 0.5 * (x[i, j] + cof[i, j] / det)
    return x, _orth_err(x) <= tol


@jit
def rk4_step(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
             heads, tails, A, u, gamma, gains, h):
    """One classical RK4 step in the ambient space followed by projection.

    Edge attitudes are integrated alongside the agents and then reconciled
    with ``R_tail^T R_head``; the returned ``drift`` is the largest Frobenius
    mismatch before reconciliation.  ``ok`` is False on a failed projection.
    """
    a1 = vector_field(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
                      heads, tails, A, u, gamma, gains)
    hh = 0.5 * h
    a2 = vector_field(kind, experimental, R + hh * a1[0], W + hh * a1[1], Rb + hh * a1[2],
                      xi + hh * a1[3], Q + hh * a1[4], zeta + hh * a1[5], J, Jinv,
                      heads, tails, A, u, gamma, gains)
    a3 = vector_field(kind, experimental, R + hh * a2[0], W + hh * a2[1], Rb + hh * a2[2],
                      xi + hh * a2[3], Q + hh * a2[4], zeta + hh * a2[5], J, Jinv,
                      heads, tails, A, u, gamma, gains)
    a4 = vector_field(kind, experimental, R + h * a3[0], W + h * a3[1], Rb + h * a3[2],
                      xi + h * a3[3], Q + h * a3[4], zeta + h * a3[5], J, Jinv,
                      heads, tails, A, u, gamma, gains)
    s = h / 6.0
    R1 = R + s * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
    W1 = W + s * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
    Rb1 = Rb + s * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
    xi1 = xi + s * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
    Q1 = Q + s * (a1[4] + 2.0 * a2[4] + 2.0 * a3[4] + a4[4])
    z1 = zeta + s * (a1[5] + 2.0 * a2[5] + 2.0 * a3[5] + a4[5])

    ok = True
    for i in range(R1.shape[0]):
        x, good = project(R1[i])
        R1[i] = x
        ok = ok and good
        if kind == 2:
            x, good = project(Q1[i])
            Q1[i] = x
            ok = ok and good
    drift = 0.0
    for k in range(Rb1.shape[0]):
        pk, good = project(Rb1[k])
        ok = ok and good
        ref = _mtm(R1[tails[k]], R1[heads[k]])
        d = 0.0
        for i in range(3):
            for j in range(3):
                e = pk[i, j] - ref[i, j]
                d += e * e
        drift = max(drift, np.sqrt(d))
        Rb1[k] = ref
    return R1, W1, Rb1, xi1, Q1, z1, drift, ok


@jit
def _finite(a):
    return np.all(np.isfinite(a))


@jit
def flow(kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv, heads, tails,
         A, u, gamma, gains, xi_set, pi_set, delta, delta_q, h, n_steps, drift_tol):
    """Advance in place for up to ``n_steps`` flow steps.

    Stops before stepping whenever some gap reaches its threshold.  Returns
    ``(steps, status, max_dV, max_drift, V)`` where ``max_dV`` is the largest
    per-step change of the Lyapunov function.
    """
    v0 = lyapunov(kind, R, W, Rb, xi, Q, zeta, J, A, u, gamma, gains)
    max_dv = -np.inf
    max_drift = 0.0
    for s in range(n_steps):
        if kind != 0:
            if Rb.shape[0] > 0 and np.max(edge_gaps(Rb, xi, A, u, gamma, xi_set)) >= delta:
                return s, NEED_JUMP, max_dv, max_drift, v0
            if kind == 2 and np.max(aux_gaps(R, Q, zeta, A, u, gamma, pi_set)) >= delta_q:
                return s, NEED_JUMP, max_dv, max_drift, v0
        R1, W1, Rb1, xi1, Q1, z1, drift, ok = rk4_step(
            kind, experimental, R, W, Rb, xi, Q, zeta, J, Jinv,
            heads, tails, A, u, gamma, gains, h)
        if not (ok and _finite(R1) and _finite(W1) and _finite(xi1)
                and _finite(Q1) and _finite(z1)):
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
