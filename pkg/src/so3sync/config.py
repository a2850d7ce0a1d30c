"""YAML scenario files.

A scenario is parsed into a :class:`ScenarioConfig` holding normalised plain
data (so it round-trips through YAML unchanged) and knows how to build the
tree, potential parameters, closed loop and initial state from it.  See
``docs/scenario_schema.md`` in the repository for the full field list.
"""

import copy
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .controllers import CONTROLLERS, Gains
from .engine import ClosedLoop, Convergence, make_state, perturb
from .plant import DEFAULT_INERTIA, check_inertia
from .potential import PotentialParams, a_from_eigen, synthesize
from .so3 import axis_angle, random_rotation
from .topology import TopologyError, build_tree

BUNDLED = ("paper_fig3_hybrid", "paper_fig3_continuous", "paper_fig3_vfree", "remark4_kw_zero")


class _PlainDumper(yaml.SafeDumper):
    def ignore_aliases(self, data):
        return True


class ConfigError(ValueError):
    def __init__(self, msg, path=(), line=None):
        self.msg = msg
        self.path = tuple(path)
        self.line = line
        where = ".".join(str(p) for p in self.path)
        prefix = ("line %d: " % line) if line else ""
        super().__init__(prefix + (where + ": " if where else "") + msg)


def _fail(path, msg):
    raise ConfigError(msg, path)


def _num(d, key, path, default=None, positive=False, nonneg=False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path + (key,), "expected a number, got %r" % (v,))
    v = float(v)
    if not math.isfinite(v):
        _fail(path + (key,), "must be finite")
    if positive and not v > 0:
        _fail(path + (key,), "must be positive")
    if nonneg and v < 0:
        _fail(path + (key,), "must be nonnegative")
    return v


def _vec(v, n, path):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        _fail(path, "expected a list of %d numbers" % n)
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            _fail(path + (i,), "expected a number, got %r" % (x,))
        out.append(float(x))
    return out


def _mat(v, path):
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        _fail(path, "expected a 3x3 matrix")
    return [_vec(row, 3, path + (i,)) for i, row in enumerate(v)]


def _section(raw, key, required=False):
    v = raw.get(key)
    if v is None:
        if required:
            _fail((key,), "section is required")
        return {}
    if not isinstance(v, dict):
        _fail((key,), "expected a mapping")
    return v


def _unknown(d, allowed, path):
    extra = sorted(set(d) - set(allowed))
    if extra:
        _fail(path + (extra[0],), "unknown field")


def _rotation_spec(v, path):
    if not isinstance(v, dict):
        _fail(path, "expected {axis: [x, y, z], angle: rad}")
    _unknown(v, ("axis", "angle"), path)
    axis = _vec(v.get("axis"), 3, path + ("axis",))
    n = math.sqrt(sum(x * x for x in axis))
    if n == 0:
        _fail(path + ("axis",), "axis must be nonzero")
    return {"axis": [x / n for x in axis], "angle": _num(v, "angle", path, 0.0)}


@dataclass(eq=True)
class ScenarioConfig:
    name: str
    controller: str
    graph: dict
    potential: dict
    gains: dict
    plant: dict
    initial: dict
    integration: dict
    convergence: dict
    experimental: dict

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            _fail((), "top level must be a mapping")
        _unknown(raw, ("name", "controller", "graph", "potential", "gains", "plant", "initial",
                       "integration", "convergence", "experimental"), ())
        name = str(raw.get("name", "scenario"))
        controller = raw.get("controller", "hybrid")
        if controller not in CONTROLLERS:
            _fail(("controller",), "must be one of %s" % (CONTROLLERS,))

        g = _section(raw, "graph", required=True)
        _unknown(g, ("agents", "edges"), ("graph",))
        n = g.get("agents")
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            _fail(("graph", "agents"), "expected a positive integer")
        edges = g.get("edges", [])
        if not isinstance(edges, list):
            _fail(("graph", "edges"), "expected a list of [head, tail] pairs")
        norm_edges = []
        for k, e in enumerate(edges):
            if (not isinstance(e, (list, tuple)) or len(e) != 2
                    or not all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
                _fail(("graph", "edges", k), "expected [head, tail] integers")
            norm_edges.append([int(e[0]), int(e[1])])
        try:
            build_tree(n, norm_edges)
        except TopologyError as exc:
            _fail(("graph", "edges"), str(exc))
        graph = {"agents": n, "edges": norm_edges}
        m = len(norm_edges)

        pot = cls._parse_potential(_section(raw, "potential", required=True))

        gr = _section(raw, "gains")
        _unknown(gr, Gains.__dataclass_fields__, ("gains",))
        gains = {f: _num(gr, f, ("gains",), getattr(Gains(), f), nonneg=True)
                 for f in Gains.__dataclass_fields__}

        pl = _section(raw, "plant")
        _unknown(pl, ("inertia",), ("plant",))
        inertia = pl.get("inertia")
        if inertia is None:
            inertia = [DEFAULT_INERTIA.tolist()] * n
        elif isinstance(inertia, list) and len(inertia) == 3 and not isinstance(inertia[0][0], list):
            inertia = [_mat(inertia, ("plant", "inertia"))] * n
        elif isinstance(inertia, list) and len(inertia) == n:
            inertia = [_mat(j, ("plant", "inertia", i)) for i, j in enumerate(inertia)]
        else:
            _fail(("plant", "inertia"), "expected one 3x3 matrix or one per agent")
        for i, j in enumerate(inertia):
            try:
                check_inertia(j)
            except ValueError as exc:
                _fail(("plant", "inertia", i), str(exc))
        plant = {"inertia": [[list(map(float, r)) for r in j] for j in inertia]}

        initial = cls._parse_initial(_section(raw, "initial"), n, m)

        it = _section(raw, "integration")
        _unknown(it, ("h", "t_end", "sample_stride", "seed"), ("integration",))
        stride = it.get("sample_stride", 10)
        if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
            _fail(("integration", "sample_stride"), "expected a positive integer")
        seed = it.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            _fail(("integration", "seed"), "expected a nonnegative integer")
        integration = {
            "h": _num(it, "h", ("integration",), 1e-3, positive=True),
            "t_end": _num(it, "t_end", ("integration",), 30.0, positive=True),
            "sample_stride": stride,
            "seed": seed,
        }

        cv = _section(raw, "convergence")
        _unknown(cv, ("eps", "hold", "omega_mode", "omega_tol", "stop"), ("convergence",))
        mode = cv.get("omega_mode", "absolute")
        if mode not in ("absolute", "relative"):
            _fail(("convergence", "omega_mode"), "must be 'absolute' or 'relative'")
        convergence = {
            "eps": _num(cv, "eps", ("convergence",), 1e-2, positive=True),
            "hold": _num(cv, "hold", ("convergence",), 1.0, nonneg=True),
            "omega_mode": mode,
            "omega_tol": _num(cv, "omega_tol", ("convergence",), None, positive=True),
            "stop": bool(cv.get("stop", True)),
        }

        ex = _section(raw, "experimental")
        _unknown(ex, ("relative_aux_damping",), ("experimental",))
        experimental = {"relative_aux_damping": bool(ex.get("relative_aux_damping", False))}

        cfg = cls(name, controller, graph, pot, gains, plant, initial, integration,
                  convergence, experimental)
        try:
            cfg.build_loop()
        except ValueError as exc:
            _fail(("gains",), str(exc))
        return cfg

    @staticmethod
    def _parse_potential(pr):
        path = ("potential",)
        _unknown(pr, ("a", "xi_set", "pi_set", "gamma", "delta", "delta_q", "u", "synthesis"), path)
        a = pr.get("a")
        if not isinstance(a, dict):
            _fail(path + ("a",), "expected {eigenvalues: [...]} or {matrix: [[...]]}")
        _unknown(a, ("eigenvalues", "eigenvectors", "matrix"), path + ("a",))
        if "matrix" in a:
            a_spec = {"matrix": _mat(a["matrix"], path + ("a", "matrix"))}
        else:
            a_spec = {"eigenvalues": _vec(a.get("eigenvalues"), 3, path + ("a", "eigenvalues"))}
            if a.get("eigenvectors") is not None:
                a_spec["eigenvectors"] = _mat(a["eigenvectors"], path + ("a", "eigenvectors"))
        default_set = [0.9 * math.pi]
        xs = pr.get("xi_set", default_set)
        if not isinstance(xs, list) or not xs:
            _fail(path + ("xi_set",), "expected a nonempty list of angles")
        ps = pr.get("pi_set", xs)
        if not isinstance(ps, list) or not ps:
            _fail(path + ("pi_set",), "expected a nonempty list of angles")
        syn = pr.get("synthesis") or {}
        if not isinstance(syn, dict):
            _fail(path + ("synthesis",), "expected a mapping")
        _unknown(syn, ("gamma_fraction", "delta_fraction", "boundary_rtol"), path + ("synthesis",))
        out = {
            "a": a_spec,
            "xi_set": _vec(xs, len(xs), path + ("xi_set",)),
            "pi_set": _vec(ps, len(ps), path + ("pi_set",)),
            "gamma": _num(pr, "gamma", path),
            "delta": _num(pr, "delta", path),
            "delta_q": _num(pr, "delta_q", path),
            "u": _vec(pr["u"], 3, path + ("u",)) if pr.get("u") is not None else None,
            "synthesis": {
                "gamma_fraction": _num(syn, "gamma_fraction", path + ("synthesis",), 0.95),
                "delta_fraction": _num(syn, "delta_fraction", path + ("synthesis",), 0.95),
                "boundary_rtol": _num(syn, "boundary_rtol", path + ("synthesis",), 1e-3, nonneg=True),
            },
        }
        try:
            _build_params(out)
        except ValueError as exc:
            key = next((k for k in ("delta", "gamma", "u") if k in str(exc)), "a")
            _fail(path + (key,), str(exc))
        return out

    @staticmethod
    def _parse_initial(ir, n, m):
        path = ("initial",)
        _unknown(ir, ("attitudes", "random_attitudes", "omega", "xi", "aux", "zeta",
                      "perturbation"), path)
        random_att = bool(ir.get("random_attitudes", False))
        att = ir.get("attitudes")
        if att is None:
            att = [{"axis": [0.0, 0.0, 1.0], "angle": 0.0}] * n
        elif not isinstance(att, list) or len(att) != n:
            _fail(path + ("attitudes",), "expected %d entries" % n)
        att = [_rotation_spec(a, path + ("attitudes", i)) for i, a in enumerate(att)]
        omega = ir.get("omega")
        if omega is None:
            omega = [[0.0, 0.0, 0.0]] * n
        elif not isinstance(omega, list) or len(omega) != n:
            _fail(path + ("omega",), "expected %d vectors" % n)
        omega = [_vec(w, 3, path + ("omega", i)) for i, w in enumerate(omega)]
        xi = ir.get("xi", [0.0] * m)
        xi = _vec(xi, m, path + ("xi",))
        aux = ir.get("aux")
        if aux is None:
            aux = [{"axis": [0.0, 0.0, 1.0], "angle": 0.0}] * n
        elif not isinstance(aux, list) or len(aux) != n:
            _fail(path + ("aux",), "expected %d entries" % n)
        aux = [_rotation_spec(a, path + ("aux", i)) for i, a in enumerate(aux)]
        zeta = _vec(ir.get("zeta", [0.0] * n), n, path + ("zeta",))
        pt = ir.get("perturbation") or {}
        if not isinstance(pt, dict):
            _fail(path + ("perturbation",), "expected a mapping")
        _unknown(pt, ("enabled", "magnitude"), path + ("perturbation",))
        return {
            "attitudes": att,
            "random_attitudes": random_att,
            "omega": omega,
            "xi": xi,
            "aux": aux,
            "zeta": zeta,
            "perturbation": {
                "enabled": bool(pt.get("enabled", False)),
                "magnitude": _num(pt, "magnitude", path + ("perturbation",), 1e-6, nonneg=True),
            },
        }

    # -- serialisation -----------------------------------------------------

    def to_dict(self):
        return copy.deepcopy({
            "name": self.name,
            "controller": self.controller,
            "graph": self.graph,
            "potential": self.potential,
            "gains": self.gains,
            "plant": self.plant,
            "initial": self.initial,
            "integration": self.integration,
            "convergence": self.convergence,
            "experimental": self.experimental,
        })

    def dump(self):
        return yaml.dump(self.to_dict(), Dumper=_PlainDumper, sort_keys=False,
                         default_flow_style=None)

    def with_overrides(self, h=None, t_end=None, seed=None, controller=None, **initial):
        d = self.to_dict()
        if h is not None:
            d["integration"]["h"] = float(h)
        if t_end is not None:
            d["integration"]["t_end"] = float(t_end)
        if seed is not None:
            d["integration"]["seed"] = int(seed)
        if controller is not None:
            d["controller"] = controller
        d["initial"].update(initial)
        return ScenarioConfig.from_dict(d)

    # -- builders ----------------------------------------------------------

    def build_tree(self):
        return build_tree(self.graph["agents"], self.graph["edges"])

    def build_params(self):
        return _build_params(self.potential)

    def build_gains(self):
        return Gains(**self.gains)

    def build_convergence(self):
        return Convergence(**self.convergence)

    def build_loop(self, backend=None):
        p = self.build_params()
        pot = self.potential
        return ClosedLoop(
            self.build_tree(), self.controller, self.build_gains(), p,
            pi_set=tuple(pot["pi_set"]),
            delta_q=pot["delta_q"] if pot["delta_q"] is not None else p.delta,
            inertia=np.array(self.plant["inertia"], dtype=float),
            experimental=self.experimental["relative_aux_damping"],
            allow_zero_damping=self.convergence["omega_mode"] == "relative",
            backend=backend,
        )

    def build_state(self, tree=None, rng=None):
        """Initial state; random attitudes and the perturbation draw from ``seed``."""
        tree = tree or self.build_tree()
        ini = self.initial
        rng = rng if rng is not None else np.random.default_rng(self.integration["seed"])
        if ini["random_attitudes"]:
            r0 = [random_rotation(rng) for _ in range(tree.n_agents)]
        else:
            r0 = [axis_angle(a["angle"], a["axis"]) for a in ini["attitudes"]]
        q0 = [axis_angle(a["angle"], a["axis"]) for a in ini["aux"]]
        s = make_state(tree, r0, ini["omega"], ini["xi"], q0, ini["zeta"])
        if ini["perturbation"]["enabled"]:
            s = perturb(s, tree, ini["perturbation"]["magnitude"], rng)
        return s


def _build_params(pot):
    a = pot["a"]
    if "matrix" in a:
        a_mat = np.array(a["matrix"], dtype=float)
        lam, vec = np.linalg.eigh(0.5 * (a_mat + a_mat.T))
        q_rows = vec.T
    else:
        order = np.argsort(a["eigenvalues"])
        lam = np.array(a["eigenvalues"], dtype=float)[order]
        q_rows = np.eye(3) if "eigenvectors" not in a else np.array(a["eigenvectors"])[order]
        a_mat = a_from_eigen(lam, q_rows)
    syn = pot["synthesis"]
    need = pot["u"] is None or pot["gamma"] is None or pot["delta"] is None
    base = None
    if need:
        base = synthesize(lam, q_rows, tuple(pot["xi_set"]), syn["gamma_fraction"],
                          syn["delta_fraction"], syn["boundary_rtol"])
    u = np.array(pot["u"], dtype=float) if pot["u"] is not None else base.u
    nu = np.linalg.norm(u)
    if nu == 0:
        raise ValueError("u must be nonzero")
    u = u / nu  # rounded inputs are not exactly unit length
    gamma = pot["gamma"] if pot["gamma"] is not None else base.gamma
    delta = pot["delta"] if pot["delta"] is not None else base.delta
    return PotentialParams(a_mat, u, gamma, delta, tuple(pot["xi_set"]))


def _node_line(node, path):
    """1-based source line of the YAML node at ``path`` (best effort)."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
        if node is None:
            break
    return line


def parse_config(text):
    try:
        raw = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("YAML syntax error: %s" % getattr(exc, "problem", exc),
                          line=mark.line + 1 if mark else None) from None
    try:
        return ScenarioConfig.from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(exc.msg, exc.path, _node_line(root, exc.path)) from None


def load_config(path):
    if str(path) in BUNDLED:
        return bundled(str(path))
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config: %s" % exc) from None
    return parse_config(text)


def bundled(name):
    if name not in BUNDLED:
        raise ConfigError("no bundled scenario %r" % name)
    text = resources.files("so3sync.scenarios").joinpath(name + ".yaml").read_text("utf-8")
    return parse_config(text)


def bundled_path(name):
    return resources.files("so3sync.scenarios").joinpath(name + ".yaml")
