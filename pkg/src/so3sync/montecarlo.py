"""Batches of runs from Haar-random initial attitudes."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import EngineError, certify, make_state, run, stuck_diagnostic
from .so3 import random_rotation


@dataclass
class TrialResult:
    index: int
    converged: bool
    t_converge: float = None
    jumps: int = 0
    jump_events: int = 0
    jump_ceiling: int = None
    max_dist_sq_edge: float = None
    max_omega_norm: float = None
    undesired_distance: float = None  # max edge distance to its nearest critical point
    at_undesired_equilibrium: bool = False
    violations: list = field(default_factory=list)
    error: str = None

    @property
    def flagged(self):
        return bool(self.violations or self.error)


@dataclass
class MonteCarloReport:
    trials: int
    master_seed: int
    controller: str
    results: list

    @property
    def converged_count(self):
        return sum(r.converged for r in self.results)

    @property
    def converged_fraction(self):
        return self.converged_count / self.trials if self.trials else 1.0

    @property
    def flagged(self):
        return [r.index for r in self.results if r.flagged]

    def jump_stats(self):
        j = np.array([r.jumps for r in self.results], dtype=float)
        if not len(j):
            return {"min": 0, "mean": 0.0, "max": 0}
        return {"min": int(j.min()), "mean": float(j.mean()), "max": int(j.max())}

    @property
    def worst_t_converge(self):
        ts = [r.t_converge for r in self.results if r.converged]
        return max(ts) if ts else None

    def to_dict(self):
        return {
            "controller": self.controller,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "converged": self.converged_count,
            "converged_fraction": self.converged_fraction,
            "worst_t_converge": self.worst_t_converge,
            "jump_stats": self.jump_stats(),
            "flagged": self.flagged,
            "results": [asdict(r) for r in self.results],
        }


def _trial(cfg, loop, index, seed_seq):
    rng = np.random.default_rng(seed_seq)
    tree = loop.tree
    r0 = np.array([random_rotation(rng) for _ in range(tree.n_agents)])
    state = make_state(tree, r0)  # w = 0, xi = 0, Q = I, zeta = 0
    it = cfg.integration
    try:
        rec = run(loop, state, it["h"], it["t_end"], it["sample_stride"], cfg.build_convergence())
    except EngineError as exc:
        return TrialResult(index, False, error=str(exc))
    fs = rec.final_state
    dist = 0.25 * (3.0 - np.trace(fs.rbar, axis1=-2, axis2=-1))
    res = TrialResult(
        index, rec.converged, rec.t_converge, rec.component_resets, rec.jump_events,
        rec.jump_ceiling, float(dist.max(initial=0.0)),
        float(np.linalg.norm(fs.w, axis=1).max(initial=0.0)),
        violations=certify(rec, loop))
    if not rec.converged:
        diag = rec.diagnostic or stuck_diagnostic(fs, loop)
        if diag.get("available"):
            res.undesired_distance = max(diag["distance"])
            res.at_undesired_equilibrium = diag["at_undesired_equilibrium"]
    return res


def run_montecarlo(cfg, trials, master_seed=0, workers=1, backend=None):
    """Run ``trials`` independent runs; trial ``k`` always gets the same seed.

    Workers share nothing but the read-only closed-loop description, and the
    results are ordered by trial index, so the report does not depend on
    ``workers``.
    """
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    loop = cfg.build_loop(backend)
    seeds = np.random.SeedSequence(master_seed).spawn(trials)
    if workers > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda k: _trial(cfg, loop, k, seeds[k]), range(trials)))
    else:
        results = [_trial(cfg, loop, k, seeds[k]) for k in range(trials)]
    results.sort(key=lambda r: r.index)
    return MonteCarloReport(trials, master_seed, cfg.controller, results)
