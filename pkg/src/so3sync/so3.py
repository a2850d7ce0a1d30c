"""Rotation-group algebra on SO(3).

Rotations and skew matrices are plain ``(3, 3)`` float arrays; the helpers
here build them and check their invariants.
"""

import numpy as np

ROT_TOL = 1e-9
ALG_TOL = 1e-12
EXP_SERIES_EPS = 1e-6


class RotationError(ValueError):
    pass


def is_rotation(m, tol=ROT_TOL):
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    if np.linalg.norm(m.T @ m - np.eye(3)) > tol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


def as_rotation(m, tol=ROT_TOL):
    """Return ``m`` as a float array, raising if it is not in SO(3)."""
    m = np.array(m, dtype=float)
    if not is_rotation(m, tol):
        raise RotationError("matrix is not a rotation within %g" % tol)
    return m


def hat(v):
    """Skew matrix with ``hat(v) @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def vex(s, tol=ALG_TOL):
    s = np.asarray(s, dtype=float)
    if np.linalg.norm(s + s.T) > tol * max(1.0, np.linalg.norm(s)):
        raise ValueError("vex() needs a skew-symmetric matrix")
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def skew_part(c):
    c = np.asarray(c, dtype=float)
    return 0.5 * (c - c.T)


def psi(c):
    """vex of the antisymmetric part of a 3x3 matrix."""
    c = np.asarray(c, dtype=float)
    return 0.5 * np.array([c[2, 1] - c[1, 2],
                           c[0, 2] - c[2, 0],
                           c[1, 0] - c[0, 1]])


def dist_id_sq(r):
    """Normalised squared distance to the identity, in [0, 1]."""
    return 0.25 * (3.0 - np.trace(r))


def axis_angle(theta, u):
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > ROT_TOL:
        raise ValueError("rotation axis must be a unit vector")
    k = hat(u)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def exp_so3(v):
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    k = hat(v)
    if theta < EXP_SERIES_EPS:
        # truncated series; next terms are O(theta^4)
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def project_to_rotation(m, tol=ALG_TOL, max_iter=100):
    """Nearest rotation by the averaging iteration ``M <- (M + M^-T) / 2``."""
    m = np.array(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise RotationError("expected a finite 3x3 matrix")
    if np.linalg.det(m) <= 0.0:
        raise RotationError("cannot project a singular or reflecting matrix")
    eye = np.eye(3)
    for _ in range(max_iter):
        if np.linalg.norm(m.T @ m - eye) <= tol:
            return m
        m = 0.5 * (m + np.linalg.inv(m).T)
    if np.linalg.norm(m.T @ m - eye) <= tol:
        return m
    raise RotationError("projection did not converge")


def quat_to_rotation(q):
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(rng_seed=None):
    """Haar-uniform rotation from a normalised 4D Gaussian.

    ``rng_seed`` may be an int, None or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(rng_seed)
    q = rng.standard_normal(4)
    while np.linalg.norm(q) < 1e-12:
        q = rng.standard_normal(4)
    return quat_to_rotation(q)


def random_unit_vector(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def flatten(r):
    """Row-major 9-element list, the on-disk form of a rotation."""
    return [float(x) for x in np.asarray(r, dtype=float).reshape(9)]


def unflatten(vals):
    return as_rotation(np.asarray(vals, dtype=float).reshape(3, 3))
