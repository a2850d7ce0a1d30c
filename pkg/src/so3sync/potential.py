"""Weighted-trace potential on SO(3) x R with a hybrid angle variable.

    U(R, xi) = tr(A (I - R Ra(xi, u))) + gamma / 2 * xi**2

where ``Ra(xi, u)`` is the rotation by ``xi`` about the fixed unit axis ``u``.
The module also covers the parameter synthesis that makes every undesired
critical point sit strictly inside the jump set, and the numerical checks
of that property.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .so3 import axis_angle, exp_so3, psi

EIG_TOL = 1e-9


class InfeasibleParamsError(ValueError):
    """Parameters violate the gamma/delta bounds that certify the jump gap."""


@dataclass(frozen=True, eq=False)
class PotentialParams:
    a: np.ndarray
    u: np.ndarray
    gamma: float
    delta: float
    xi_set: tuple
    eigvals: np.ndarray = field(init=False, repr=False)
    eigvecs: np.ndarray = field(init=False, repr=False)  # columns q_1..q_3

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.shape != (3, 3) or np.abs(a - a.T).max() > 1e-12 * max(1.0, np.abs(a).max()):
            raise ValueError("A must be a symmetric 3x3 matrix")
        a = 0.5 * (a + a.T)
        lam, vec = np.linalg.eigh(a)
        if lam[0] <= 0:
            raise ValueError("A must be positive definite")
        if lam[2] - lam[1] <= EIG_TOL * lam[2]:
            raise ValueError("A needs lambda_2 < lambda_3 strictly")
        # sign gauge: largest-magnitude entry of each eigenvector positive
        for c in range(3):
            if vec[np.argmax(np.abs(vec[:, c])), c] < 0:
                vec[:, c] = -vec[:, c]
        u = np.array(self.u, dtype=float).reshape(3)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError("u must be a unit vector")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        xs = tuple(float(x) for x in self.xi_set)
        if not xs:
            raise ValueError("the switching set must be nonempty")
        if any(x == 0.0 or abs(x) > np.pi for x in xs):
            raise ValueError("switching angles must satisfy 0 < |phi| <= pi")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "xi_set", xs)
        object.__setattr__(self, "eigvals", lam)
        object.__setattr__(self, "eigvecs", vec)

    @property
    def distinct_eigenvalues(self):
        lam = self.eigvals
        return lam[1] - lam[0] > EIG_TOL * lam[2]

    def with_switching(self, xi_set=None, delta=None):
        """Copy sharing A, u and gamma; used for the auxiliary-state potential."""
        return PotentialParams(self.a, self.u, self.gamma,
                               self.delta if delta is None else delta,
                               self.xi_set if xi_set is None else xi_set)


def a_from_eigen(eigvals, eigvecs=None):
    """A = Q diag(lambda) Q^T; ``eigvecs`` rows are q_1, q_2, q_3."""
    q = np.eye(3) if eigvecs is None else np.asarray(eigvecs, dtype=float).T
    if np.linalg.norm(q.T @ q - np.eye(3)) > 1e-9:
        raise ValueError("eigenvectors must be orthonormal")
    return q @ np.diag(np.asarray(eigvals, dtype=float)) @ q.T


def u_value(r, xi, p):
    return np.trace(p.a @ (np.eye(3) - r @ axis_angle(xi, p.u))) + 0.5 * p.gamma * xi * xi


def grad_xi(r, xi, p):
    return p.gamma * xi + 2.0 * p.u @ psi(p.a @ r @ axis_angle(xi, p.u))


def grad_r_body(r, xi, p):
    """Body-frame gradient g: dU along R exp(t hat(eta)) is 2 eta.g at t=0."""
    return psi(axis_angle(xi, p.u) @ p.a @ r)


def xi_star(r, p):
    """Minimiser of U(r, .) over the switching set; ties go to the first entry."""
    best_x, best_v = None, np.inf
    for x in p.xi_set:
        v = u_value(r, x, p)
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def gap(r, xi, p):
    """Potential excess over the best switch value; jumps are enabled at >= delta."""
    return u_value(r, xi, p) - xi_star(r, p)[1]


# --- parameter synthesis ---------------------------------------------------

class Synthesis(NamedTuple):
    case: int
    alphas: np.ndarray
    delta_star: float


def synthesis_case(eigvals, boundary_rtol=1e-3):
    """Pick the construction case for ascending eigenvalues and return alphas.

    ``boundary_rtol`` treats lambda_2 within that relative distance below the
    case-2 boundary lambda_1 lambda_3 / (lambda_3 - lambda_1) as on it.
    """
    l1, l2, l3 = (float(x) for x in eigvals)
    if not 0 < l1 <= l2 < l3:
        raise ValueError("need 0 < lambda_1 <= lambda_2 < lambda_3")
    if l2 - l1 <= EIG_TOL * l3:
        a3 = np.sqrt(1.0 - l2 / l3)
        a12 = np.sqrt(0.5 * l2 / l3)
        return Synthesis(1, np.array([a12, a12, a3]), l1 * (1.0 - l2 / l3))
    boundary = l1 * l3 / (l3 - l1)
    if l2 >= boundary * (1.0 - boundary_rtol):
        alphas = np.array([0.0, np.sqrt(l2 / (l2 + l3)), np.sqrt(l3 / (l2 + l3))])
        return Synthesis(2, alphas, l1)
    lam = np.array([l1, l2, l3])
    s = 2.0 * (l1 * l2 + l1 * l3 + l2 * l3)
    prod_others = np.array([l2 * l3, l1 * l3, l1 * l2])
    alphas = np.sqrt(np.clip(1.0 - 4.0 * prod_others / s, 0.0, None))
    return Synthesis(3, alphas, 4.0 * lam.prod() / s)


def _eigen_groups(lam, vec):
    groups = []
    for c in range(3):
        for g in groups:
            if abs(lam[g[0]] - lam[c]) <= EIG_TOL * lam[2]:
                g.append(c)
                break
        else:
            groups.append([c])
    return [(lam[g[0]], vec[:, g]) for g in groups]


def achieved_delta(eigvals, eigvecs, u):
    """min over unit eigenvectors v of u^T (tr(A) I - A - 2 v^T A v (I - v v^T)) u.

    ``eigvecs`` has the eigenvectors as columns.  For a repeated eigenvalue the
    eigenspace always holds a v orthogonal to u, which the closed form uses.
    """
    lam = np.asarray(eigvals, dtype=float)
    vec = np.asarray(eigvecs, dtype=float)
    a = vec @ np.diag(lam) @ vec.T
    u = np.asarray(u, dtype=float)
    base = u @ (lam.sum() * np.eye(3) - a) @ u
    vals = []
    for lv, basis in _eigen_groups(lam, vec):
        if basis.shape[1] == 1:
            v = basis[:, 0]
            vals.append(base - 2.0 * lv * (1.0 - (v @ u) ** 2))
        else:
            vals.append(base - 2.0 * lv)
    return float(min(vals))


def bounds(p):
    """Upper bounds on gamma and delta implied by the chosen A, u and set."""
    d = achieved_delta(p.eigvals, p.eigvecs, p.u)
    gamma_max = 4.0 * d / np.pi ** 2
    phi_l = max(abs(x) for x in p.xi_set)
    return {
        "delta_star": d,
        "gamma_max": gamma_max,
        "phi_l": phi_l,
        "delta_max": (gamma_max - p.gamma) * phi_l ** 2 / 2.0,
    }


def check_bounds(p):
    b = bounds(p)
    if not p.gamma < b["gamma_max"]:
        raise InfeasibleParamsError(
            "gamma=%g must be below 4*Delta/pi^2=%.6g" % (p.gamma, b["gamma_max"]))
    if not p.delta < b["delta_max"]:
        raise InfeasibleParamsError(
            "delta=%g must be below %.6g" % (p.delta, b["delta_max"]))
    return b


def synthesize(a_eigs, q_vecs=None, xi_set=(0.9 * np.pi,), gamma_fraction=0.95,
               delta_fraction=0.95, boundary_rtol=1e-3):
    """Build parameters satisfying the jump-gap condition by construction.

    ``q_vecs`` rows are the eigenvectors q_1..q_3 paired with ascending
    ``a_eigs``; coordinate axes by default.
    """
    if not (0 < gamma_fraction < 1 and 0 < delta_fraction < 1):
        raise ValueError("fractions must lie in (0, 1)")
    syn = synthesis_case(a_eigs, boundary_rtol)
    q = np.eye(3) if q_vecs is None else np.asarray(q_vecs, dtype=float)
    u = syn.alphas @ q
    u = u / np.linalg.norm(u)
    lam = np.asarray(a_eigs, dtype=float)
    d = min(syn.delta_star, achieved_delta(lam, q.T, u))
    gamma_max = 4.0 * d / np.pi ** 2
    gamma = gamma_fraction * gamma_max
    phi_l = max(abs(x) for x in xi_set)
    delta = delta_fraction * (gamma_max - gamma) * phi_l ** 2 / 2.0
    return PotentialParams(a_from_eigen(lam, q), u, gamma, delta, tuple(xi_set))


# --- critical points -------------------------------------------------------

class Equilibrium(NamedTuple):
    label: str
    rotation: np.ndarray
    desired: bool


@dataclass
class Condition1Report:
    points: list  # (label, gap, margin over delta)
    sweep_min_gap: float
    sweep_radius: float
    delta: float

    @property
    def min_margin(self):
        return min(min(m for _, _, m in self.points), self.sweep_min_gap - self.delta)

    @property
    def passed(self):
        return self.min_margin > 0


def _undesired_axes(p, n_circle=72):
    out = []
    for lv, basis in _eigen_groups(p.eigvals, p.eigvecs):
        if basis.shape[1] == 1:
            out.append(("pi about eigenvector lambda=%g" % lv, basis[:, 0]))
        else:
            # continuum of critical points; sample the unit sphere of the eigenspace
            for s in range(n_circle):
                c = np.cos(np.pi * s / n_circle)
                sn = np.sin(np.pi * s / n_circle)
                v = c * basis[:, 0] + sn * basis[:, 1]
                out.append(("pi about eigenspace lambda=%g, sample %d" % (lv, s), v))
    return out


def _sphere_dirs(n):
    # Fibonacci sphere, deterministic
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + 5 ** 0.5) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def check_condition1(p, sweep_radius=1e-2, n_dirs=26, n_radii=3, n_xi=5):
    """Gap at each undesired critical point plus a sweep of its neighbourhood."""
    points = []
    sweep_min = np.inf
    dirs = _sphere_dirs(n_dirs)
    radii = np.linspace(sweep_radius / n_radii, sweep_radius, n_radii)
    xis = np.linspace(-sweep_radius, sweep_radius, n_xi)
    for label, v in _undesired_axes(p):
        r_star = axis_angle(np.pi, v)
        g = gap(r_star, 0.0, p)
        points.append((label, g, g - p.delta))
        for d in dirs:
            for rad in radii:
                r = r_star @ exp_so3(rad * d)
                for x in xis:
                    sweep_min = min(sweep_min, gap(r, x, p))
    return Condition1Report(points, float(sweep_min), sweep_radius, p.delta)


def undesired_equilibria(p):
    """Identity (desired) followed by the pi-rotations about A's eigenvectors."""
    if not p.distinct_eigenvalues:
        raise ValueError("equilibrium enumeration needs distinct eigenvalues of A")
    out = [Equilibrium("identity", np.eye(3), True)]
    for b in range(3):
        q = p.eigvecs[:, b]
        out.append(Equilibrium("pi about q%d" % (b + 1), axis_angle(np.pi, q), False))
    return out


def hessian_block(r_star, p):
    m = p.a @ r_star
    return np.trace(m) * np.eye(3) - m


def hessian_block_eigs(r_star, p):
    """Eigenvalues of tr(A R*) I - A R*, listed along A's eigenvectors q_1..q_3."""
    blk = hessian_block(r_star, p)
    q = p.eigvecs
    mu = np.array([q[:, b] @ blk @ q[:, b] for b in range(3)])
    resid = np.linalg.norm(blk @ q - q * mu)
    if resid > 1e-8 * max(1.0, np.abs(blk).max()):
        # eigenvectors of A do not diagonalise this block
        return np.linalg.eigvals(blk).real
    return mu


def critical_point_report(p):
    rows = []
    for eq in undesired_equilibria(p):
        rows.append({
            "label": eq.label,
            "desired": eq.desired,
            "psi_norm": float(np.linalg.norm(psi(p.a @ eq.rotation))),
            "hessian_eigs": hessian_block_eigs(eq.rotation, p).tolist(),
        })
    return rows


def potential_gradient_norm(r, xi, p):
    return float(np.hypot(np.linalg.norm(grad_r_body(r, xi, p)), grad_xi(r, xi, p)))


__all__ = [
    "PotentialParams", "InfeasibleParamsError", "a_from_eigen", "u_value",
    "grad_xi", "grad_r_body", "xi_star", "gap", "synthesize", "synthesis_case",
    "achieved_delta", "bounds", "check_bounds", "check_condition1",
    "undesired_equilibria", "hessian_block_eigs", "hessian_block",
    "critical_point_report",
]
