"""Finite-difference checks of the analytic gradients and the torque assembly."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .controllers import AuxState, Gains, aux_flow, continuous_torque, hybrid_torque
from .plant import DEFAULT_INERTIA, AgentState, EdgeState
from .potential import grad_r_body, grad_xi, u_value
from .so3 import axis_angle, exp_so3, psi, random_rotation
from .topology import hbar_matrix, laplacian, random_tree

THRESHOLD = 1e-5
FLOOR = 1e-3
FD_STEP = 1e-5


def rel_err(a, b, floor=FLOOR):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


@dataclass
class GradcheckReport:
    n_points: int
    errors: dict  # check name -> max relative error
    threshold: float = THRESHOLD

    @property
    def max_error(self):
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self):
        return self.max_error <= self.threshold


def stacked_torque(tree, rb, xi, w, gains, p, continuous=False):
    """-k_R Hbar Psi - k_w w - k_w_bar (L x I3) w from dense matrices."""
    if continuous:
        psis = [psi(p.a @ r) for r in rb]
    else:
        psis = [psi(axis_angle(x, p.u) @ p.a @ r) for r, x in zip(rb, xi)]
    big_psi = np.concatenate(psis) if psis else np.zeros(0)
    hb = hbar_matrix(tree, rb)
    lap = np.kron(laplacian(tree), np.eye(3))
    w = np.asarray(w).reshape(-1)
    return -gains.k_r * hb @ big_psi - gains.k_w * w - gains.k_w_bar * lap @ w


def gradcheck(p, n_points=200, seed=0, gains=None, flip_sign=False, n_agents=7, step=FD_STEP):
    """Compare analytic derivatives with central differences at random points.

    ``flip_sign`` negates the analytic body gradient; it exists so tests can
    confirm that the check actually fails on a wrong gradient.
    """
    rng = np.random.default_rng(seed)
    gains = gains or Gains()
    sign = -1.0 if flip_sign else 1.0
    errs = {k: 0.0 for k in ("grad_xi", "grad_r_body", "aux_flow_descent",
                             "stacked_torque", "stacked_torque_continuous", "kernel_torque")}
    kern = kernels.get_backend()
    for _ in range(n_points):
        r = random_rotation(rng)
        xi = rng.uniform(-np.pi, np.pi)

        fd = (u_value(r, xi + step, p) - u_value(r, xi - step, p)) / (2 * step)
        errs["grad_xi"] = max(errs["grad_xi"], rel_err(grad_xi(r, xi, p), fd))

        g = sign * grad_r_body(r, xi, p)
        fd = np.array([(u_value(r @ exp_so3(step * e), xi, p)
                        - u_value(r @ exp_so3(-step * e), xi, p)) / (2 * step)
                       for e in np.eye(3)])
        errs["grad_r_body"] = max(errs["grad_r_body"], rel_err(2.0 * g, fd))

        # d/dt U(Q^T R, zeta) along the auxiliary flow with R frozen
        q = random_rotation(rng)
        zeta = rng.uniform(-np.pi, np.pi)
        agent = AgentState(r, np.zeros(3))
        q_dot, z_dot = aux_flow(0, agent, AuxState(q, zeta), gains, p)
        v = q.T @ q_dot  # Q^T dQ/dt is skew
        v = np.array([v[2, 1], v[0, 2], v[1, 0]])
        hs = step / max(1.0, np.linalg.norm(v), abs(z_dot))  # gains make the flow fast
        u_plus = u_value((q @ exp_so3(hs * v)).T @ r, zeta + hs * z_dot, p)
        u_minus = u_value((q @ exp_so3(-hs * v)).T @ r, zeta - hs * z_dot, p)
        fd = (u_plus - u_minus) / (2 * hs)
        gq = grad_r_body(q.T @ r, zeta, p)
        pred = -2.0 * gains.k_q * gq @ gq - gains.k_zeta * grad_xi(q.T @ r, zeta, p) ** 2
        errs["aux_flow_descent"] = max(errs["aux_flow_descent"], rel_err(pred, fd))

        # per-agent assembly against the stacked matrix form
        tree = random_tree(n_agents, rng)
        rs = np.array([random_rotation(rng) for _ in range(n_agents)])
        ws = rng.normal(size=(n_agents, 3))
        xis = rng.uniform(-np.pi, np.pi, size=tree.n_edges)
        rb = np.swapaxes(rs[tree.tails], -1, -2) @ rs[tree.heads]
        states = [AgentState(rs[i], ws[i]) for i in range(n_agents)]
        edges = [EdgeState(rb[k], xis[k]) for k in range(tree.n_edges)]
        per_agent = np.concatenate([hybrid_torque(i, states, edges, tree, gains, p)
                                    for i in range(n_agents)])
        stacked = stacked_torque(tree, rb, xis, ws, gains, p)
        errs["stacked_torque"] = max(errs["stacked_torque"], rel_err(per_agent, stacked))
        per_agent_c = np.concatenate([continuous_torque(i, states, tree, gains, p)
                                      for i in range(n_agents)])
        stacked_c = stacked_torque(tree, rb, xis, ws, gains, p, continuous=True)
        errs["stacked_torque_continuous"] = max(errs["stacked_torque_continuous"],
                                                rel_err(per_agent_c, stacked_c))
        jj = np.tile(DEFAULT_INERTIA, (n_agents, 1, 1))
        kt = kern.torques(1, False, rs, ws, rb, xis, np.tile(np.eye(3), (n_agents, 1, 1)),
                          np.zeros(n_agents), jj, np.linalg.inv(jj), tree.heads, tree.tails,
                          p.a, p.u, p.gamma, gains.as_array())
        errs["kernel_torque"] = max(errs["kernel_torque"],
                                    rel_err(np.asarray(kt).reshape(-1), stacked))
    return GradcheckReport(n_points, errs)


__all__ = ["gradcheck", "GradcheckReport", "stacked_torque", "rel_err", "THRESHOLD"]
