"""Rigid-body rotational dynamics and edge relative attitudes."""

from dataclasses import dataclass

import numpy as np

from .so3 import as_rotation, hat

DEFAULT_INERTIA = np.diag([0.06, 0.08, 0.1])  # kg m^2


def check_inertia(j):
    j = np.array(j, dtype=float)
    if j.shape != (3, 3) or np.abs(j - j.T).max() > 1e-12:
        raise ValueError("inertia must be a symmetric 3x3 matrix")
    if np.linalg.eigvalsh(j)[0] <= 0:
        raise ValueError("inertia must be positive definite")
    return j


@dataclass(frozen=True, eq=False)
class AgentState:
    r: np.ndarray
    w: np.ndarray
    inertia: np.ndarray = DEFAULT_INERTIA

    def __post_init__(self):
        object.__setattr__(self, "r", as_rotation(self.r))
        object.__setattr__(self, "w", np.array(self.w, dtype=float).reshape(3))
        object.__setattr__(self, "inertia", check_inertia(self.inertia))


@dataclass(frozen=True, eq=False)
class EdgeState:
    rbar: np.ndarray
    xi: float = 0.0


def attitude_rate(s):
    return s.r @ hat(s.w)


def omega_rate(s, torque):
    j = s.inertia
    return np.linalg.solve(j, -np.cross(s.w, j @ s.w) + np.asarray(torque, dtype=float))


def edge_relative(head, tail):
    """Rbar_k = R_tail^T R_head."""
    return tail.r.T @ head.r


def kinetic_energy_sum(states):
    """Sum of w^T J w (no 1/2 factor, matching the Lyapunov functions)."""
    return float(sum(s.w @ s.inertia @ s.w for s in states))
