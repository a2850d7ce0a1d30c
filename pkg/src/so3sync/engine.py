"""Fixed-step simulation of the networked closed loop with hybrid jumps.

The loop is jump-priority: whenever some edge (or auxiliary) gap has reached
its threshold the state is reset before any further flow.  All hot work is
delegated to the selected kernel backend; this module does bookkeeping,
sampling and certificate checks.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .controllers import CONTROLLERS, FlowOnlyError, Gains
from .potential import PotentialParams, undesired_equilibria, xi_star
from .so3 import exp_so3, is_rotation, random_unit_vector

DRIFT_TOL = 1e-6  # edge vs agent reconciliation, per step
FLOW_SLACK = 1e-8  # allowed Lyapunov increase per flow step
JUMP_SLACK = 1e-9
GUARD_FACTOR = 10


class EngineError(RuntimeError):
    """Numerical failure (non-finite state, failed projection, drift)."""


class CertificateError(EngineError):
    """A Lyapunov certificate or the max-jump guard was violated."""


@dataclass(frozen=True)
class HybridTime:
    t: float
    j: int


@dataclass(eq=False)
class SystemState:
    r: np.ndarray  # (N,3,3)
    w: np.ndarray  # (N,3)
    rbar: np.ndarray  # (M,3,3)
    xi: np.ndarray  # (M,)
    q: np.ndarray  # (N,3,3)
    zeta: np.ndarray  # (N,)

    def copy(self):
        return SystemState(*(np.array(a, dtype=float) for a in
                             (self.r, self.w, self.rbar, self.xi, self.q, self.zeta)))

    @property
    def n_agents(self):
        return self.r.shape[0]


def make_state(tree, r0, w0=None, xi0=None, q0=None, zeta0=None):
    r0 = np.array(r0, dtype=float).reshape(tree.n_agents, 3, 3)
    for i, r in enumerate(r0):
        if not is_rotation(r):
            raise ValueError("initial attitude of agent %d is not a rotation" % (i + 1))
    n, m = tree.n_agents, tree.n_edges
    w0 = np.zeros((n, 3)) if w0 is None else np.array(w0, dtype=float).reshape(n, 3)
    xi0 = np.zeros(m) if xi0 is None else np.array(xi0, dtype=float).reshape(m)
    q0 = np.tile(np.eye(3), (n, 1, 1)) if q0 is None else np.array(q0, dtype=float).reshape(n, 3, 3)
    zeta0 = np.zeros(n) if zeta0 is None else np.array(zeta0, dtype=float).reshape(n)
    rbar = np.swapaxes(r0[tree.tails], -1, -2) @ r0[tree.heads]
    return SystemState(r0, w0, rbar.reshape(m, 3, 3), xi0, q0, zeta0)


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    """Everything besides the state that the vector field needs."""
    tree: object
    controller: str
    gains: Gains
    params: PotentialParams
    pi_set: tuple = (0.9 * math.pi,)
    delta_q: float = None
    inertia: np.ndarray = None  # (N,3,3); defaults filled by the caller
    experimental: bool = False
    allow_zero_damping: bool = False
    backend: str = None

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError("unknown controller %r" % (self.controller,))
        self.gains.validate(self.controller, self.allow_zero_damping)
        if self.delta_q is None:
            object.__setattr__(self, "delta_q", self.params.delta)
        if not self.delta_q > 0:
            raise ValueError("delta_q must be positive")
        j = np.asarray(self.inertia, dtype=float)
        if j.shape != (self.tree.n_agents, 3, 3):
            raise ValueError("need one inertia matrix per agent")
        object.__setattr__(self, "inertia", j)
        object.__setattr__(self, "_jinv", np.linalg.inv(j))
        object.__setattr__(self, "_k", kernels.get_backend(self.backend))
        object.__setattr__(self, "aux_params", self.params.with_switching(self.pi_set, self.delta_q))

    @property
    def kind(self):
        return kernels.KIND_CODES[self.controller]

    @property
    def kernel(self):
        return self._k

    @property
    def jump_bound(self):
        """Certified Lyapunov drop of a single reset."""
        g, p = self.gains, self.params
        if self.controller == "velocity-free":
            return min(g.k_r, g.k_qtilde) * min(p.delta, self.delta_q)
        return g.k_r * p.delta

    def _args(self, s):
        p = self.params
        return (self.kind, self.experimental, s.r, s.w, s.rbar, s.xi, s.q, s.zeta,
                self.inertia, self._jinv, self.tree.heads, self.tree.tails,
                p.a, p.u, p.gamma, self.gains.as_array())


def lyapunov(state, loop):
    p = loop.params
    return float(loop.kernel.lyapunov(loop.kind, state.r, state.w, state.rbar, state.xi,
                                      state.q, state.zeta, loop.inertia, p.a, p.u,
                                      p.gamma, loop.gains.as_array()))


def jump_ceiling(v0, loop):
    if loop.controller == "continuous":
        return None
    return int(math.ceil(v0 / loop.jump_bound - 1e-12))


def gaps(state, loop):
    """(edge gaps, auxiliary gaps); zeros where the law has no such variable."""
    p, k = loop.params, loop.kernel
    m, n = state.rbar.shape[0], state.n_agents
    if loop.controller == "continuous":
        return np.zeros(m), np.zeros(n)
    eg = k.edge_gaps(state.rbar, state.xi, p.a, p.u, p.gamma, np.array(p.xi_set))
    if loop.controller == "velocity-free":
        ag = k.aux_gaps(state.r, state.q, state.zeta, p.a, p.u, p.gamma, np.array(loop.pi_set))
    else:
        ag = np.zeros(n)
    return np.asarray(eg), np.asarray(ag)


def violations(state, loop):
    eg, ag = gaps(state, loop)
    edges = [int(k) for k in np.flatnonzero(eg >= loop.params.delta)]
    agents = [int(i) for i in np.flatnonzero(ag >= loop.delta_q)] \
        if loop.controller == "velocity-free" else []
    return edges, agents


def torques(state, loop):
    return np.asarray(loop.kernel.torques(*loop._args(state)))


def step(state, loop, h):
    """One RK4 flow step; the state must lie in the flow set."""
    edges, agents = violations(state, loop)
    if edges or agents:
        raise FlowOnlyError("state is in the jump set; call jump_event first")
    out = loop.kernel.rk4_step(*loop._args(state), h)
    r, w, rbar, xi, q, zeta, drift, ok = out
    new = SystemState(*(np.asarray(a) for a in (r, w, rbar, xi, q, zeta)))
    if not ok or not all(np.all(np.isfinite(a)) for a in (new.r, new.w, new.xi, new.q, new.zeta)):
        raise EngineError("non-finite state or failed projection")
    if drift > DRIFT_TOL:
        raise EngineError("edge states drifted from agent states by %.3g" % drift)
    return new


@dataclass(frozen=True)
class JumpLog:
    t: float
    j: int  # counter after the event
    edges: tuple  # 1-based
    agents: tuple  # 1-based
    v_before: float
    v_after: float

    @property
    def drop(self):
        return self.v_before - self.v_after


def jump_event(state, loop, t=0.0, j=0):
    """Reset every violating component at once; returns (state, JumpLog)."""
    if loop.controller == "continuous":
        raise FlowOnlyError("the continuous law has no jump map")
    edges, agents = violations(state, loop)
    if not edges and not agents:
        raise FlowOnlyError("no component is in the jump set")
    new = state.copy()
    for k in edges:
        new.xi[k] = xi_star(new.rbar[k], loop.params)[0]
    for i in agents:
        new.zeta[i] = xi_star(new.q[i].T @ new.r[i], loop.aux_params)[0]
    log = JumpLog(t, j + 1, tuple(k + 1 for k in edges), tuple(i + 1 for i in agents),
                  lyapunov(state, loop), lyapunov(new, loop))
    return new, log


@dataclass(frozen=True)
class Convergence:
    eps: float = 1e-2
    hold: float = 1.0  # seconds the criterion must persist
    omega_mode: str = "absolute"  # or "relative" for the k_w = 0 mode
    omega_tol: float = None  # defaults to eps
    stop: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.omega_mode not in ("absolute", "relative"):
            raise ValueError("omega_mode must be 'absolute' or 'relative'")
        if self.hold < 0:
            raise ValueError("hold must be nonnegative")


def metrics(state, loop):
    """Per-sample quantities: edge distances, body-rate norms and the rest."""
    rb = state.rbar
    dist = 0.25 * (3.0 - np.trace(rb, axis1=-2, axis2=-1))
    wn = np.linalg.norm(state.w, axis=1)
    w = state.w
    rel = np.linalg.norm(w[:, None, :] - w[None, :, :], axis=-1).max() if len(w) else 0.0
    qt = np.swapaxes(state.q, -1, -2) @ state.r
    qdist = 0.25 * (3.0 - np.trace(qt, axis1=-2, axis2=-1))
    return {"dist_sq": dist, "omega_norm": wn, "omega_rel_max": float(rel), "aux_dist_sq": qdist}


def is_converged(state, loop, conv):
    m = metrics(state, loop)
    tol_w = conv.eps if conv.omega_tol is None else conv.omega_tol
    ok = m["dist_sq"].max(initial=0.0) <= conv.eps ** 2
    if conv.omega_mode == "absolute":
        ok = ok and m["omega_norm"].max(initial=0.0) <= tol_w
    else:
        ok = ok and m["omega_rel_max"] <= tol_w
    if loop.controller == "velocity-free":
        ok = ok and m["aux_dist_sq"].max(initial=0.0) <= conv.eps ** 2
    return bool(ok)


def stuck_diagnostic(state, loop, tol=1e-3):
    """Match each edge to the nearest critical configuration of the potential.

    Returns a dict with the per-edge equilibrium label, the
    distance to it, and whether the whole network sits at an undesired
    equilibrium within ``tol`` (some edge not at identity, all rates small).
    """
    p = loop.params
    try:
        eqs = undesired_equilibria(p)
    except ValueError:
        return {"available": False}
    labels, dists = [], []
    for rb in state.rbar:
        best = min(eqs, key=lambda e: np.linalg.norm(rb - e.rotation))
        labels.append(best.label)
        dists.append(float(np.linalg.norm(rb - best.rotation)))
    wmax = float(np.linalg.norm(state.w, axis=1).max(initial=0.0))
    stuck = all(d <= tol for d in dists) and any(lab != "identity" for lab in labels) and wmax <= tol
    return {"available": True, "edges": labels, "distance": dists, "omega_max": wmax,
            "at_undesired_equilibrium": bool(stuck)}


@dataclass(eq=False)
class RunRecord:
    controller: str
    n_agents: int
    n_edges: int
    h: float
    samples: np.ndarray  # rows of csv_columns
    jumps: list = field(default_factory=list)
    converged: bool = False
    t_converge: float = None
    t_final: float = 0.0
    v0: float = 0.0
    jump_ceiling: int = None
    max_flow_increase: float = -math.inf
    max_edge_drift: float = 0.0
    final_state: SystemState = None
    diagnostic: dict = None
    backend: str = ""

    @property
    def jump_events(self):
        return len(self.jumps)

    @property
    def component_resets(self):
        return sum(len(e.edges) + len(e.agents) for e in self.jumps)

    @property
    def edge_resets(self):
        return sum(len(e.edges) for e in self.jumps)

    def csv_columns(self):
        cols = ["t", "j"]
        cols += ["dist_sq_edge_%d" % (k + 1) for k in range(self.n_edges)]
        cols += ["omega_norm_%d" % (i + 1) for i in range(self.n_agents)]
        cols += ["xi_%d" % (k + 1) for k in range(self.n_edges)]
        if self.controller == "velocity-free":
            cols += ["zeta_%d" % (i + 1) for i in range(self.n_agents)]
        cols.append("V")
        return cols

    def column(self, name):
        return self.samples[:, self.csv_columns().index(name)]

    def write_csv(self, path):
        header = ",".join(self.csv_columns())
        np.savetxt(path, self.samples, delimiter=",", header=header, comments="", fmt="%.17g")

    def flow_ok(self):
        return self.max_flow_increase <= FLOW_SLACK

    def jumps_ok(self, bound):
        return all(e.drop >= bound - JUMP_SLACK for e in self.jumps)

    def ceiling_ok(self):
        return self.jump_ceiling is None or self.component_resets <= self.jump_ceiling

    def summary(self):
        s = self.final_state
        m = metrics(s, None) if s is not None else None
        out = {
            "controller": self.controller,
            "backend": self.backend,
            "converged": self.converged,
            "t_converge": self.t_converge,
            "t_final": self.t_final,
            "h": self.h,
            "jump_events": self.jump_events,
            "jumps": self.component_resets,
            "edge_resets": self.edge_resets,
            "jump_ceiling": self.jump_ceiling,
            "V0": self.v0,
            "max_flow_increase": self.max_flow_increase if self.max_flow_increase > -math.inf else 0.0,
            "max_edge_drift": self.max_edge_drift,
            "jump_log": [{"t": e.t, "j": e.j, "edges": list(e.edges), "agents": list(e.agents),
                          "drop": e.drop} for e in self.jumps],
        }
        if m is not None:
            out["final"] = {
                "max_dist_sq_edge": float(m["dist_sq"].max(initial=0.0)),
                "max_omega_norm": float(m["omega_norm"].max(initial=0.0)),
                "max_omega_pairwise": m["omega_rel_max"],
                "max_dist_sq_aux": float(m["aux_dist_sq"].max(initial=0.0)),
                "V": self.samples[-1, -1] if len(self.samples) else None,
            }
        if self.diagnostic is not None:
            out["diagnostic"] = self.diagnostic
        return out


def _sample_row(state, loop, t, j, v):
    m = metrics(state, loop)
    row = [t, j, *m["dist_sq"], *m["omega_norm"], *state.xi]
    if loop.controller == "velocity-free":
        row += list(state.zeta)
    row.append(v)
    return row


def run(loop, state0, h=1e-3, t_end=30.0, sample_stride=10, conv=None, max_jumps=None):
    """Integrate from ``state0`` until ``t_end`` or sustained convergence.

    Raises :class:`CertificateError` if the max-jump guard trips and
    :class:`EngineError` on numerical failure.  Lyapunov checks are recorded
    on the returned :class:`RunRecord`.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    conv = conv or Convergence()
    k = loop.kernel
    p = loop.params
    s = state0.copy()
    args = loop._args(s)  # arrays inside are updated in place by flow()
    n_total = int(round(t_end / h))
    xi_set = np.array(p.xi_set, dtype=float)
    pi_set = np.array(loop.pi_set, dtype=float)

    v0 = lyapunov(s, loop)
    ceiling = jump_ceiling(v0, loop)
    guard = max_jumps if max_jumps is not None else (
        GUARD_FACTOR * ceiling if ceiling is not None else None)
    rec = RunRecord(loop.controller, loop.tree.n_agents, loop.tree.n_edges, h,
                    np.empty((0, 0)), v0=v0, jump_ceiling=ceiling,
                    backend=kernels.backend_name(k))
    rows = [_sample_row(s, loop, 0.0, 0, v0)]
    steps, j = 0, 0
    conv_since = None
    v = v0
    hold_steps = int(round(conv.hold / h))

    def check_conv():
        nonlocal conv_since
        if is_converged(s, loop, conv):
            if conv_since is None:
                conv_since = steps
            return steps - conv_since >= hold_steps
        conv_since = None
        return False

    done = check_conv()
    t_conv = conv_since if done else None
    while not (done and conv.stop) and steps < n_total:
        chunk = min(sample_stride - steps % sample_stride, n_total - steps)
        n_done, status, max_dv, drift, v = k.flow(
            *args, xi_set, pi_set, p.delta, loop.delta_q, h, chunk, DRIFT_TOL)
        steps += int(n_done)
        rec.max_flow_increase = max(rec.max_flow_increase, float(max_dv))
        rec.max_edge_drift = max(rec.max_edge_drift, float(drift))
        t = steps * h
        if status == kernels.kernels_numpy.NONFINITE:
            raise EngineError("non-finite state or failed projection at t=%.6g" % t)
        if status == kernels.kernels_numpy.DRIFT:
            raise EngineError("edge states drifted from agent states at t=%.6g" % t)
        if status == kernels.kernels_numpy.NEED_JUMP:
            if not rows or rows[-1][0] != t or rows[-1][1] != j:
                rows.append(_sample_row(s, loop, t, j, v))
            new, log = jump_event(s, loop, t, j)
            j += 1
            rec.jumps.append(log)
            if guard is not None and j > guard:
                raise CertificateError("max-jump guard exceeded (%d events)" % j)
            s.xi[:] = new.xi
            s.zeta[:] = new.zeta
            v = log.v_after
            rows.append(_sample_row(s, loop, t, j, v))
            conv_since = None
            continue
        if steps % sample_stride == 0 or steps == n_total:
            rows.append(_sample_row(s, loop, t, j, float(v)))
            done = check_conv()
            if done and t_conv is None:
                t_conv = conv_since

    rec.samples = np.array(rows, dtype=float)
    rec.t_final = steps * h
    rec.converged = bool(done)
    rec.t_converge = t_conv * h if done and t_conv is not None else None
    rec.final_state = s
    if not done:
        rec.diagnostic = stuck_diagnostic(s, loop)
    return rec


def certify(rec, loop):
    """List of violated certificates (empty when all hold)."""
    bad = []
    if not rec.flow_ok():
        bad.append("flow: Lyapunov increased by %.3g in one step" % rec.max_flow_increase)
    if not rec.jumps_ok(loop.jump_bound):
        worst = min(e.drop for e in rec.jumps)
        bad.append("jump: drop %.6g below bound %.6g" % (worst, loop.jump_bound))
    if not rec.ceiling_ok():
        bad.append("ceiling: %d resets exceed %d" % (rec.component_resets, rec.jump_ceiling))
    return bad


def perturb(state, tree, magnitude, rng):
    """Rotate every agent by ``magnitude`` rad about an independent random axis."""
    new = state.copy()
    for i in range(new.n_agents):
        new.r[i] = new.r[i] @ exp_so3(magnitude * random_unit_vector(rng))
    new.rbar[:] = np.swapaxes(new.r[tree.tails], -1, -2) @ new.r[tree.heads]
    return new


__all__ = ["HybridTime", "SystemState", "ClosedLoop", "Convergence", "RunRecord", "JumpLog",
           "EngineError", "CertificateError", "make_state", "lyapunov", "jump_ceiling",
           "gaps", "violations", "torques", "step", "jump_event", "run", "certify",
           "metrics", "is_converged", "stuck_diagnostic", "perturb"]
