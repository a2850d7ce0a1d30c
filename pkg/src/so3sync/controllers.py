"""Per-agent feedback laws written in their explicit, neighbour-sum form.

These are the readable reference implementations; the simulator runs the
stacked versions in :mod:`so3sync.kernels`.  Agent and edge indices here are
0-based.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .potential import grad_r_body, grad_xi, gap, xi_star
from .so3 import axis_angle, hat, psi

CONTROLLERS = ("continuous", "hybrid", "velocity-free")


@dataclass(frozen=True)
class Gains:
    k_r: float = 1.0
    k_w: float = 0.1
    k_w_bar: float = 0.1
    k_xi: float = 20.0
    k_q: float = 20.0
    k_qtilde: float = 2.0
    k_zeta: float = 20.0

    def validate(self, controller, allow_zero_damping=False):
        if any(v < 0 for v in asdict(self).values()):
            raise ValueError("gains must be nonnegative")
        if not self.k_r > 0:
            raise ValueError("k_r must be positive")
        if controller in ("hybrid", "velocity-free") and not self.k_xi > 0:
            raise ValueError("k_xi must be positive for hybrid laws")
        if controller in ("continuous", "hybrid") and self.k_w == 0 and not allow_zero_damping:
            raise ValueError("k_w = 0 needs the time-varying-consensus mode")
        if controller == "velocity-free" and not (
                self.k_q > 0 and self.k_qtilde > 0 and self.k_zeta > 0):
            raise ValueError("k_q, k_qtilde and k_zeta must be positive")
        return self

    def as_array(self):
        return np.array([self.k_r, self.k_w, self.k_w_bar, self.k_xi,
                         self.k_q, self.k_qtilde, self.k_zeta])


@dataclass(frozen=True, eq=False)
class AuxState:
    q: np.ndarray
    zeta: float = 0.0


def _velocity_damping(i, states, tree, gains):
    w_i = states[i].w
    rel = sum((w_i - states[j].w for j, _, _ in tree.incident(i)), np.zeros(3))
    return -gains.k_w * w_i - gains.k_w_bar * rel


def continuous_torque(i, states, tree, gains, p):
    r_i = states[i].r
    tau = np.zeros(3)
    for j, _, _ in tree.incident(i):
        tau -= gains.k_r * psi(p.a @ states[j].r.T @ r_i)
    return tau + _velocity_damping(i, states, tree, gains)


def _hybrid_gradient_sum(i, attitudes, edge_states, tree, p):
    r_i = attitudes[i]
    total = np.zeros(3)
    for j, k, side in tree.incident(i):
        rel = attitudes[j].T @ r_i
        ra = axis_angle(edge_states[k].xi, p.u)
        if side > 0:
            # i heads edge k, j is its tail
            total += ra @ psi(p.a @ rel @ ra)
        else:
            total += psi(p.a @ ra.T @ rel)
    return total


def hybrid_torque(i, states, edge_states, tree, gains, p):
    attitudes = [s.r for s in states]
    grad = _hybrid_gradient_sum(i, attitudes, edge_states, tree, p)
    return -gains.k_r * grad + _velocity_damping(i, states, tree, gains)


def xi_flow(k, edge_states, gains, p):
    e = edge_states[k]
    return -gains.k_xi * grad_xi(e.rbar, e.xi, p)


class FlowOnlyError(RuntimeError):
    """A jump map was applied outside the jump set."""


def xi_jump(k, edge_states, p):
    e = edge_states[k]
    g = gap(e.rbar, e.xi, p)
    if g < p.delta:
        raise FlowOnlyError("edge %d is in the flow set (gap %.3g < %.3g)" % (k, g, p.delta))
    return xi_star(e.rbar, p)[0]


def aux_gradient(r, aux, p):
    """Body gradient of U at the auxiliary error Q^T R."""
    return grad_r_body(aux.q.T @ r, aux.zeta, p)


def aux_flow(i, agent_state, aux, gains, p):
    """(dQ/dt, dzeta/dt); only the attitude of ``agent_state`` is read."""
    qt = aux.q.T @ agent_state.r
    g = grad_r_body(qt, aux.zeta, p)
    q_dot = gains.k_q * aux.q @ hat(qt @ g)
    z_dot = -gains.k_zeta * grad_xi(qt, aux.zeta, p)
    return q_dot, z_dot


def aux_jump(i, aux, agent_state, p):
    qt = aux.q.T @ agent_state.r
    g = gap(qt, aux.zeta, p)
    if g < p.delta:
        raise FlowOnlyError("agent %d auxiliary is in the flow set" % i)
    return xi_star(qt, p)[0]


def vf_torque(i, attitudes, edge_states, aux_states, tree, gains, p):
    """Velocity-free torque; takes attitudes only, never angular velocities."""
    grad = _hybrid_gradient_sum(i, attitudes, edge_states, tree, p)
    aux = aux_states[i]
    rz = axis_angle(aux.zeta, p.u)
    damp = rz @ psi(p.a @ aux.q.T @ attitudes[i] @ rz)
    return -gains.k_r * grad - gains.k_qtilde * damp


def experimental_relative_aux_damping(i, attitudes, aux_states, tree, gains, p,
                                      enabled=False):
    """Relative auxiliary damping in place of the relative-velocity term.

    No stability guarantee is known for this term, so it is off by default.
    """
    if not enabled:
        return np.zeros(3)
    g_i = aux_gradient(attitudes[i], aux_states[i], p)
    rel = np.zeros(3)
    for j, _, _ in tree.incident(i):
        rel += g_i - aux_gradient(attitudes[j], aux_states[j], p)
    return -gains.k_w_bar * rel
