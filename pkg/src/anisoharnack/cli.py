"""Command-line entry point.

Usage::

    anisoharnack <command> --config run.toml [--out DIR] [--seed N]
                 [--threads N] [--resolution N]

``command`` is one of solve, classify, verify, sweep, oracle, schedule and
overrides the ``command`` key of the file.  Exit status: 0 on success, 1
when an oracle fails, a divergence alarm fires or the solver does not
converge, 2 on configuration errors.
"""
import argparse
import io
import json
import math
import os
import sys

import numpy as np

from .config import COMMANDS, canonical, parse_config
from .errors import ConfigurationError, ConvergenceError, DomainError, InsufficientDataError
from .grid import _atomic_write, write_field_csv
from .oracles import run_oracles
from .solver import classify, normalized_residuals, solve
from .verify import (REPORT_SCHEMA, caccioppoli_ratio,
                     default_tail_floor, fit_decay, harnack_ratio, moser_schedule,
                     oscillation_profile, sup_bound_ratio, sweep, weak_harnack_p_limit,
                     weak_harnack_ratio, _json_float)

__all__ = ["main", "run"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(v):
    """Make ``v`` JSON-safe: numpy scalars to Python, non-finite floats to
    strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return _json_float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _envelope(cfg, **body):
    doc = {"schema": REPORT_SCHEMA, "command": cfg.command, "config": canonical(cfg),
           "derived": cfg.derived}
    doc.update(body)
    return _clean(doc)


def _profile_csv(rows, with_id=False):
    buf = io.StringIO()
    buf.write("instance_id,radius,osc\n" if with_id else "radius,osc\n")
    for row in rows:
        buf.write(",".join(str(x) if isinstance(x, str) else repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def _cmd_solve(cfg, out):
    problem = cfg.problem()
    try:
        u, rep = solve(problem, cfg.solve_options())
        status = EXIT_OK
    except ConvergenceError as exc:
        u, rep, status = exc.field, exc.report, EXIT_FAILED
    cls = classify(problem, u, cfg["verification"]["classify_tolerance"])
    write_field_csv(os.path.join(out, cfg["output"]["field_csv"]), u,
                    {"gamma": problem.gamma, "norm": cfg["problem"]["norm"]})
    doc = _envelope(cfg, solve=rep.to_dict(), classification=cls.value)
    _atomic_write(os.path.join(out, cfg["output"]["report"]), _dump(doc))
    print(f"solve: {rep.iterations} iterations, residual {rep.final_residual:.3e} "
          f"(target {rep.target_residual:.3e}), {cls.value}")
    return status


def _cmd_classify(cfg, out):
    problem = cfg.problem()
    expr = cfg.field_expression()
    if expr is None:
        raise ConfigurationError("problem.field: classify needs a field expression")
    u = problem.grid.interpolate(expr)
    tol = cfg["verification"]["classify_tolerance"]
    cls = classify(problem, u, tol)
    r = normalized_residuals(problem, u)
    doc = _envelope(cfg, classification=cls.value, tolerance=tol,
                    residual_min=float(r.min()) if r.size else 0.0,
                    residual_max=float(r.max()) if r.size else 0.0)
    _atomic_write(os.path.join(out, cfg["output"]["report"]), _dump(doc))
    print(f"classify: {cls.value}")
    return EXIT_OK


def _cmd_verify(cfg, out):
    problem = cfg.problem()
    try:
        u, rep = solve(problem, cfg.solve_options())
    except ConvergenceError as exc:
        print(f"verify: {exc}", file=sys.stderr)
        return EXIT_FAILED
    v = cfg["verification"]
    p_sup = v["p"] if v["p"] is not None else problem.gamma
    p_wh = cfg.weak_harnack_p
    if p_wh is None:
        lim = weak_harnack_p_limit(problem.dim, problem.gamma)
        p_wh = 0.5 * lim if math.isfinite(lim) else 1.0
    records, errors, profiles, fits = [], [], [], []
    for c in cfg.centers:
        jobs = [lambda R=R: harnack_ratio(problem, u, c, R) for R in v["harnack_R"]]
        jobs += [lambda R=R: caccioppoli_ratio(problem, u, c, R) for R in v["caccioppoli_R"]]
        jobs += [lambda r=r, R=R: sup_bound_ratio(problem, u, c, r, R, p_sup)
                 for r, R in v["radii"]]
        jobs += [lambda R=R: weak_harnack_ratio(problem, u, c, R, v["theta"], v["tau"], p_wh)
                 for R in v["weak_harnack_R"]]
        for job in jobs:
            try:
                records.append(job())
            except DomainError as exc:
                errors.append({"center": list(c), "error": str(exc)})
        try:
            prof = oscillation_profile(u, c, v["oscillation_R0"], v["oscillation_levels"])
            fit = fit_decay(prof, default_tail_floor(u, cfg["solver"]["tolerance"]))
            fits.append({"center": list(c), "alpha": fit.alpha, "residual": fit.residual,
                         "profile": prof})
            profiles.extend(prof)
        except (DomainError, InsufficientDataError) as exc:
            errors.append({"center": list(c), "error": str(exc)})
    doc = _envelope(cfg, solve=rep.to_dict(), records=[r.to_dict() for r in records],
                    oscillation=fits, errors=errors)
    _atomic_write(os.path.join(out, cfg["output"]["report"]), _dump(doc))
    _atomic_write(os.path.join(out, cfg["output"]["profile_csv"]), _profile_csv(profiles))
    for r in records:
        print(f"{r.check:>13} {json.dumps(r.radii, sort_keys=True)}: ratio {r.ratio:.6g}")
    for f in fits:
        print(f"  oscillation alpha {f['alpha']:.4f} at {f['center']}")
    return EXIT_OK


def _cmd_sweep(cfg, out, threads):
    spec = cfg.sweep_spec(threads=threads)
    report = sweep(spec)
    doc = report.to_dict()
    doc.update(_envelope(cfg))
    _atomic_write(os.path.join(out, cfg["output"]["report"]), _dump(_clean(doc)))
    rows = []
    for inst in report.instances:
        for prof in inst.get("oscillation", []):
            rows.extend((inst["instance_id"], r, o) for r, o in prof["profile"])
    _atomic_write(os.path.join(out, cfg["output"]["profile_csv"]), _profile_csv(rows, True))
    print(f"sweep: {len(report.instances)} instances, {len(report.failed)} failed")
    for check, per in sorted(report.summaries.items()):
        for N, s in sorted(per.items(), key=lambda kv: int(kv[0])):
            print(f"{check:>13} N={N}: max {s['max_ratio']:.6g} min {s['min_ratio']:.6g}")
    for a in report.alarms:
        print(f"ALARM: {a['check']} drifts under refinement: {a['extremes']}")
    return EXIT_FAILED if report.alarm else EXIT_OK


def _cmd_oracle(cfg, out):
    o = cfg["oracle"]
    results = run_oracles(o["names"], o["resolutions"])
    doc = _envelope(cfg, oracles=[r.to_dict() for r in results])
    _atomic_write(os.path.join(out, cfg["output"]["report"]), _dump(doc))
    for r in results:
        print(f"{r.name:>9}: {'pass' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _cmd_schedule(cfg, out):
    s = cfg["schedule"]
    rows = moser_schedule(cfg.dim, cfg["problem"]["gamma"], s["k_max"], s["r"], s["R"])
    print(f"{'k':>3} {'beta_k':>14} {'beta_k+gamma':>14} {'r_k':>12}")
    for row in rows:
        print(f"{row.k:>3} {row.beta:>14.6g} {row.exponent:>14.6g} {row.radius:>12.6g}")
    doc = _envelope(cfg, schedule=[row._asdict() for row in rows])
    _atomic_write(os.path.join(out, cfg["output"]["report"]), _dump(doc))
    return EXIT_OK


def run(config, out=".", threads=None):
    """Execute ``config.command`` writing into ``out``; returns the exit status."""
    os.makedirs(out, exist_ok=True)
    cmd = config.command
    if cmd == "sweep":
        return _cmd_sweep(config, out, threads)
    return {"solve": _cmd_solve, "classify": _cmd_classify, "verify": _cmd_verify,
            "oracle": _cmd_oracle, "schedule": _cmd_schedule}[cmd](config, out)


def _parser():
    ap = argparse.ArgumentParser(prog="anisoharnack", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="overrides the command key of the config")
    ap.add_argument("--config", help="TOML configuration file (defaults apply when omitted)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--resolution", type=int)
    ap.add_argument("--print-config", action="store_true",
                    help="print the canonical configuration and exit")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text).with_overrides(args.seed, args.resolution, command=args.command)
        if args.print_config:
            sys.stdout.write(canonical(cfg))
            return EXIT_OK
        return run(cfg, args.out, args.threads)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
