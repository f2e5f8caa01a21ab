"""Shared profile generators and result collection for the test suite."""
from __future__ import annotations

import numpy as np

from superint.errors import SuperintError
from superint.principal_ode import Index, PrincipalParams, hx_candidates, solve_profile

RESULTS: list[str] = []


def record(label: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {label}"
    if detail:
        line += f"  [{detail}]"
    RESULTS.append(line)
    print(line)
    return ok


def random_params(case: str, rng, A0: float = 1.0) -> PrincipalParams:
    A = [A0, *rng.uniform(-1.0, 1.0, 3), rng.uniform(0.5, 2.0)]
    mu = float(rng.uniform(0.5, 1.5)) if case != "iii" else None
    return PrincipalParams.from_list(case, A, mu=mu)


def random_profiles(case: str, count: int, seed: int, x_range=(-1.0, 1.0), n: int = 201,
                    hx_bounds=(0.2, 10.0), max_tries: int = 400, A0: float = 1.0):
    """Untruncated profiles from random valid parameters, largest root at x0 = 0.

    Draws whose start point has a multiple root, or whose profile truncates
    or leaves hx_bounds, are skipped.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(max_tries):
        if len(out) == count:
            break
        params = random_params(case, rng, A0)
        h0 = float(rng.uniform(-0.5, 0.5))
        try:
            roots = hx_candidates(params, 0.0, h0)
            if roots[-1].multiplicity != 1 or roots[-1].value <= 0:
                continue
            prof = solve_profile(params, 0.0, h0, Index(len(roots) - 1), x_range, n=n)
        except (SuperintError, ValueError):
            continue
        ahx = np.abs(prof.hx)
        if prof.truncated or ahx.min() < hx_bounds[0] or ahx.max() > hx_bounds[1]:
            continue
        out.append(prof)
    if len(out) < count:
        raise RuntimeError(f"only {len(out)} of {count} profiles for case {case}")
    return out
