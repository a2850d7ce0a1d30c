"""Command-line entry point: ``so3sync simulate|check-params|montecarlo|gradcheck``.

Exit codes: 0 converged / passed, 1 configuration error, 2 not converged or
infeasible parameters, 3 certificate violation or internal failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import BUNDLED, ConfigError, load_config
from .engine import CertificateError, EngineError, certify, run
from .gradcheck import gradcheck
from .montecarlo import run_montecarlo
from .potential import bounds, check_condition1, critical_point_report, synthesis_case

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_CERTIFICATE = 0, 1, 2, 3


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def _load(args):
    cfg = load_config(args.config)
    over = {}
    for key in ("h", "t_end", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    return cfg.with_overrides(**over) if over else cfg


def cmd_simulate(args):
    cfg = _load(args)
    loop = cfg.build_loop(args.backend)
    state = cfg.build_state(loop.tree)
    it = cfg.integration
    try:
        rec = run(loop, state, it["h"], it["t_end"], it["sample_stride"], cfg.build_convergence())
    except CertificateError as exc:
        print("certificate violation: %s" % exc, file=sys.stderr)
        return EXIT_CERTIFICATE
    except EngineError as exc:
        print("integration failed: %s" % exc, file=sys.stderr)
        return EXIT_CERTIFICATE
    bad = certify(rec, loop)
    summary = rec.summary()
    summary["scenario"] = cfg.name
    summary["certificates"] = bad or "ok"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rec.write_csv(out / "timeseries.csv")
        _dump_json(summary, out / "summary.json")
    print("%s: controller=%s converged=%s t_converge=%s jumps=%d (events=%d) ceiling=%s"
          % (cfg.name, cfg.controller, rec.converged, rec.t_converge, rec.component_resets,
             rec.jump_events, rec.jump_ceiling))
    if bad:
        for b in bad:
            print("certificate violation: " + b, file=sys.stderr)
        return EXIT_CERTIFICATE
    if not rec.converged:
        d = rec.diagnostic or {}
        if d.get("at_undesired_equilibrium"):
            print("stuck at an undesired equilibrium: edges at %s (max distance %.2e)"
                  % (", ".join(d["edges"]), max(d["distance"])))
        else:
            print("not converged by t=%g" % rec.t_final)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_check_params(args):
    cfg = _load(args)
    p = cfg.build_params()
    syn = synthesis_case(p.eigvals, cfg.potential["synthesis"]["boundary_rtol"])
    b = bounds(p)
    c1 = check_condition1(p)
    report = {
        "eigenvalues": p.eigvals.tolist(),
        "u": p.u.tolist(),
        "synthesis_case": syn.case,
        "delta_star": b["delta_star"],
        "gamma": p.gamma,
        "gamma_bound": b["gamma_max"],
        "delta": p.delta,
        "delta_bound": b["delta_max"],
        "condition1": {"points": [{"label": lab, "gap": g, "margin": m} for lab, g, m in c1.points],
                       "sweep_min_gap": c1.sweep_min_gap, "min_margin": c1.min_margin},
    }
    if p.distinct_eigenvalues:
        report["critical_points"] = critical_point_report(p)
    ok_gamma = p.gamma < b["gamma_max"]
    ok_delta = p.delta < b["delta_max"]
    report["verdict"] = "pass" if (ok_gamma and ok_delta and c1.passed) else "fail"
    print("Delta* = %.4f  (case %d)" % (b["delta_star"], syn.case))
    print("gamma  = %.4f  bound %.4f  %s" % (p.gamma, b["gamma_max"], "ok" if ok_gamma else "EXCEEDED"))
    print("delta  = %.4f  bound %.4f  %s" % (p.delta, b["delta_max"], "ok" if ok_delta else "EXCEEDED"))
    print("condition 1 min margin %.4f  %s" % (c1.min_margin, "ok" if c1.passed else "FAILED"))
    print("verdict: " + report["verdict"])
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _dump_json(report, Path(args.out) / "check_params.json")
    return EXIT_OK if report["verdict"] == "pass" else EXIT_NOT_CONVERGED


def cmd_montecarlo(args):
    cfg = _load(args)
    rep = run_montecarlo(cfg, args.trials, args.seed if args.seed is not None else 0,
                         args.workers, args.backend)
    d = rep.to_dict()
    print("%s: %d/%d converged, worst t_converge %s, jumps %s"
          % (cfg.controller, rep.converged_count, rep.trials, rep.worst_t_converge, d["jump_stats"]))
    for r in rep.results:
        if not r.converged:
            print("  trial %d not converged; at undesired equilibrium: %s"
                  % (r.index, r.at_undesired_equilibrium))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _dump_json(d, Path(args.out) / "montecarlo.json")
    if rep.flagged:
        print("flagged trials: %s" % rep.flagged, file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = _load(args)
    rep = gradcheck(cfg.build_params(), args.points, args.seed or 0, cfg.build_gains(),
                    flip_sign=args.flip_sign)
    for k, v in rep.errors.items():
        print("%-26s %.3e" % (k, v))
    print("max relative error %.3e (threshold %.0e): %s"
          % (rep.max_error, rep.threshold, "pass" if rep.passed else "FAIL"))
    return EXIT_OK if rep.passed else EXIT_CERTIFICATE


def build_parser():
    ap = argparse.ArgumentParser(prog="so3sync", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True,
                        help="YAML file or bundled name (%s)" % ", ".join(BUNDLED))
        sp.add_argument("--h", type=float, help="override integration.h")
        sp.add_argument("--t-end", dest="t_end", type=float, help="override integration.t_end")
        sp.add_argument("--seed", type=int, help="override integration.seed / master seed")
        sp.add_argument("--backend", choices=("numba", "numpy"), default=None)
        if out:
            sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("simulate", help="run one scenario")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check-params", help="verify the potential parameters")
    common(sp)
    sp.set_defaults(func=cmd_check_params)

    sp = sub.add_parser("montecarlo", help="runs from random initial attitudes")
    common(sp)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    common(sp, out=False)
    sp.add_argument("--points", type=int, default=200)
    sp.add_argument("--flip-sign", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", 0) is not None and getattr(args, "trials", 0) < 0:
        print("config error: --trials must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
