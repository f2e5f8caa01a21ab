"""Command line entry point: solve, verify, flow, classify, sphere and scan.

Exit codes: 0 pass, 1 usage or IO error, 2 numerical truncation or
singularity, 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .bracket_verifier import COEF_TOL, FD_STEP, FD_TOL, verify_profile
from .curvature_classifier import FIT_TOL, TOL_R, classify
from .errors import (AmbiguousFit, ConditionsFailed, InvalidParams, MetricDegenerate, NoRoot,
                     NoRootAtStart, NoReturnDetected, RootCollision, SingularBranch, StepFailure,
                     SuperintError)
from .geodesic_flow import Termination, integrate_geodesic
from .integral_builder import build_basis, darboux_factorization
from .principal_ode import (ATOL, EPS_D, RTOL, TOL_ALG, HProfile, PrincipalParams,
                            parse_root_selector, solve_profile)
from .sphere_extension import (N_GRID, SphereParams, normalize, solve_sphere_profile,
                               sphere_report, zoll_check)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_FAIL = 0, 1, 2, 3
NUMERIC_ERRORS = (NoRoot, SingularBranch, RootCollision, MetricDegenerate, NoRootAtStart,
                  StepFailure, NoReturnDetected)


class UsageError(Exception):
    pass


def parse_floats(text: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) != count:
        raise UsageError(f"expected {count} values, got {len(vals)} in {text!r}")
    return vals


def parse_range(text: str, default_count: int | None = None):
    """``lo:hi`` or ``lo:hi:count``; returns (lo, hi, count or default)."""
    parts = text.split(":")
    try:
        if len(parts) == 2:
            return float(parts[0]), float(parts[1]), default_count
        if len(parts) == 3:
            return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        pass
    raise UsageError(f"bad range {text!r}; use lo:hi or lo:hi:count")


def parse_sweep(text: str) -> list[float]:
    """A single value, a comma list, or lo:hi:count."""
    if ":" in text:
        lo, hi, k = parse_range(text, 1)
        return np.linspace(lo, hi, k).tolist() if k > 1 else [lo]
    return parse_floats(text)


_NEG_VALUE = re.compile(r"^-[\d.]")


def merge_negative_values(argv: list[str]) -> list[str]:
    """Join ``--flag -2:2`` into ``--flag=-2:2`` so argparse keeps the value."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEG_VALUE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _params_from_args(args) -> PrincipalParams:
    if args.A is None:
        raise UsageError("--A A0,A1,A2,A3,A4 is required")
    return PrincipalParams.from_list(args.case, parse_floats(args.A, 5), mu=args.mu)


def _resolved_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return cfg


def _write(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _read_profile(path: str) -> HProfile:
    try:
        text = sys.stdin.read() if path == "-" else open(path, encoding="utf-8").read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise UsageError(f"{path} is empty")
    try:
        data = json.loads(text)
        return HProfile.from_dict(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path} is not a profile JSON: {exc}") from exc


def _dump(payload: dict, args) -> str:
    payload = dict(payload)
    payload["config"] = _resolved_config(args)
    payload["version"] = __version__
    return json.dumps(payload, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# commands

def cmd_solve(args) -> int:
    params = _params_from_args(args)
    lo, hi, _ = parse_range(args.range)
    profile = solve_profile(params, args.x0, args.h0, parse_root_selector(args.root), (lo, hi),
                            n=args.n, tol=args.tol, atol=args.atol, tol_alg=args.tol_alg,
                            eps_D=args.eps_D, strict=args.strict)
    _write(_dump(profile.to_dict(), args), args.out)
    return EXIT_NUMERIC if profile.truncated else EXIT_OK


def cmd_verify(args) -> int:
    profile = _read_profile(args.profile)
    rep = verify_profile(profile, n_points=args.points, seed=args.seed, coef_tol=args.coef_tol,
                         fd_tol=args.fd_tol, fd_step=args.fd_step, tol_alg=args.tol_alg)
    payload = {"bracket": rep.to_dict()}
    code = EXIT_OK if rep.ok else EXIT_FAIL
    try:
        payload["curvature"] = classify(profile).to_dict()
    except AmbiguousFit as exc:
        payload["curvature"] = {"error": str(exc), "candidates": list(exc.candidates)}
    _write(_dump(payload, args), args.out)
    return code


def cmd_flow(args) -> int:
    profile = _read_profile(args.profile)
    basis = build_basis(profile)
    extra = {}
    q = darboux_factorization(basis)
    if q is not None:
        extra["Q"] = q
    P0 = parse_floats(args.P0, 4)
    try:
        trace = integrate_geodesic(profile, basis, P0, args.T, args.tol, n_samples=args.samples,
                                   method=args.method, extra=extra)
    except StepFailure as exc:
        trace = exc.trace
        if trace is None:
            raise
    drift = trace.conservation_drift()
    passed = all(v <= args.drift_tol for v in drift.values())
    if args.csv:
        _write(trace.to_csv(), args.csv)
    _write(_dump({"trace": trace.summary(), "drift_tol": args.drift_tol, "passed": passed}, args), args.out)
    if trace.termination is not Termination.COMPLETED:
        return EXIT_NUMERIC
    return EXIT_OK if passed else EXIT_FAIL


def cmd_classify(args) -> int:
    profile = _read_profile(args.profile)
    try:
        rep = classify(profile, tol_R=args.tol_R, fit_tol=args.fit_tol)
    except AmbiguousFit as exc:
        _write(_dump({"error": str(exc), "candidates": list(exc.candidates)}, args), args.out)
        return EXIT_FAIL
    if args.csv:
        _write(rep.to_csv(), args.csv)
    _write(_dump(rep.to_dict(), args), args.out)
    return EXIT_OK


def cmd_sphere(args) -> int:
    if args.A is not None:
        sp = normalize(_params_from_args(args), h0=args.h0)
    else:
        if args.Ae is None:
            raise UsageError("give --Ae (and --A2) or a case-ii parameter set via --A and --mu")
        sp = SphereParams(args.Ae, args.A2, args.h0 or 0.0)
    t_lo, t_hi, n = parse_range(args.t_range, args.n)
    model = solve_sphere_profile(sp, (t_lo, t_hi), n=n)
    zoll = None
    if args.zoll:
        zoll = zoll_check(model, args.zoll, args.zoll_tol, seed=args.seed)
    if args.csv:
        _write(model.to_csv(), args.csv)
    _write(_dump(sphere_report(model, zoll), args), args.out)
    if zoll is not None and not zoll.passed:
        return EXIT_FAIL
    return EXIT_OK


_SCAN_FIELDS = ["case", "mu", "A0", "A1", "A2", "A3", "A4", "status", "classification",
                "family", "R_min", "R_max", "message"]


def _scan_cell(task):
    case, mu, A, x0, h0, root, rng, n = task
    row = {"case": case, "mu": mu, **{f"A{i}": a for i, a in enumerate(A)},
           "status": "ok", "classification": "", "family": "", "R_min": "", "R_max": "", "message": ""}
    try:
        params = PrincipalParams.from_list(case, A, mu=mu)
        prof = solve_profile(params, x0, h0, parse_root_selector(root), rng, n=n)
        rep = classify(prof)
        row.update(classification=rep.classification, family=rep.family_name or "",
                   R_min=repr(rep.R_min), R_max=repr(rep.R_max))
        if prof.truncated:
            row["status"] = "truncated"
    except AmbiguousFit as exc:
        row.update(status="ambiguous", message=str(exc))
    except (SuperintError, ValueError) as exc:
        row.update(status=type(exc).__name__, message=str(exc))
    return row


def cmd_scan(args) -> int:
    sweeps = [parse_sweep(getattr(args, f"A{i}")) for i in range(5)]
    mus = parse_sweep(args.mu) if args.mu is not None else [None]
    lo, hi, _ = parse_range(args.range)
    tasks = [(args.case, mu, list(A), args.x0, args.h0, args.root, (lo, hi), args.n)
             for mu in mus for A in itertools.product(*sweeps)]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(_scan_cell, tasks))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=_SCAN_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(buf.getvalue(), args.out)
    return EXIT_OK


# parser

def _add_params(p, required=True):
    p.add_argument("--case", required=required, help="i, ii or iii")
    p.add_argument("--mu", type=float, help="μ > 0, required for cases i and ii")
    p.add_argument("--A", help="A0,A1,A2,A3,A4")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superint", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the Principal equation for h(x)")
    _add_params(p)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--h0", type=float, default=0.0)
    p.add_argument("--root", default="positive", help="nearest:<v>, positive or index:<k>")
    p.add_argument("--range", default="-2:2", help="lo:hi")
    p.add_argument("--n", type=int, default=401)
    p.add_argument("--tol", type=float, default=RTOL)
    p.add_argument("--atol", type=float, default=ATOL)
    p.add_argument("--tol-alg", type=float, default=TOL_ALG)
    p.add_argument("--eps-D", type=float, default=EPS_D)
    p.add_argument("--strict", action="store_true", help="fail instead of truncating")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="bracket identities and curvature of a profile")
    p.add_argument("profile", help="profile JSON written by solve ('-' for stdin)")
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coef-tol", type=float, default=COEF_TOL)
    p.add_argument("--fd-tol", type=float, default=FD_TOL)
    p.add_argument("--fd-step", type=float, default=FD_STEP)
    p.add_argument("--tol-alg", type=float, default=TOL_ALG)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("flow", help="integrate a geodesic and report conservation")
    p.add_argument("profile")
    p.add_argument("--P0", required=True, help="x,y,px,py")
    p.add_argument("--T", type=float, default=50.0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--samples", type=int, default=501)
    p.add_argument("--method", default="DOP853")
    p.add_argument("--drift-tol", type=float, default=1e-8)
    p.add_argument("--csv", help="write the sampled trace here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("classify", help="constant curvature, Darboux or generic")
    p.add_argument("profile")
    p.add_argument("--tol-R", type=float, default=TOL_R)
    p.add_argument("--fit-tol", type=float, default=FIT_TOL)
    p.add_argument("--csv", help="write x,R here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sphere", help="global solution on the sphere and Zoll check")
    p.add_argument("--Ae", type=float)
    p.add_argument("--A2", type=float, default=0.0)
    p.add_argument("--h0", type=float, default=None, help="h at t=1")
    _add_params(p, required=False)
    p.add_argument("--t-range", default="1e-4:1e4", help="t_min:t_max[:n]")
    p.add_argument("--n", type=int, default=N_GRID)
    p.add_argument("--zoll", type=int, default=0, help="number of geodesics to close")
    p.add_argument("--zoll-tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write t,h,t_h_t,conformal_factor here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sphere)

    p = sub.add_parser("scan", help="classify every cell of a parameter grid")
    p.add_argument("--case", required=True)
    p.add_argument("--mu", help="value, list or lo:hi:count")
    for i in range(5):
        p.add_argument(f"--A{i}", default="0", help="value, list or lo:hi:count")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--h0", type=float, default=0.0)
    p.add_argument("--root", default="positive")
    p.add_argument("--range", default="-1:1")
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scan)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = merge_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, InvalidParams, ConditionsFailed, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except AmbiguousFit as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
