"""Two independent checks of {F, H} = 0 and of the L-ladder.

The first check expands {F, H} in the monomials px^(4−j) py^j and evaluates
the five coefficient lines from the coefficient functions and their exact
x-derivatives. The second is a canonical Poisson bracket by Richardson
extrapolated centered differences, which never sees the coefficients.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import OutOfRange
from .geodesic_flow import hamiltonian
from .integral_builder import BasisElement, CubicIntegralBasis, PhasePoint, build_basis
from .principal_ode import Case, HProfile, PrincipalParams, residual, residual_scale

COEF_TOL = 1e-9
FD_TOL = 1e-6
LADDER_TOL = 1e-8
FD_STEP = 1e-4


def bracket_lines(element: BasisElement, x) -> np.ndarray:
    """The five coefficient lines of {E, H} per mode, shape (5, M, *x.shape)."""
    profile = element.profile
    x = np.asarray(x, dtype=float)
    _, hx, hxx, _ = profile.evaluate(x)
    C, Cx = element.coefficients(x)
    Cy = np.einsum("ji,j...->i...", element.dy_matrix, C)
    zero = np.zeros_like(C[:, 0])

    def a(k, arr=C):
        return arr[:, k] if 0 <= k <= 3 else zero

    lines = []
    for j in range(5):
        lines.append(hx * (hx * a(j, Cx) + hx * a(j - 1, Cy)
                           - hxx * ((3 - j) * a(j) + (5 - j) * a(j - 2))))
    return np.stack(lines)


def coefficient_residuals(profile: HProfile, x: float, params: PrincipalParams | None = None,
                          basis: CubicIntegralBasis | None = None) -> tuple:
    """Normalized coefficients c0..c4 of px⁴, px³py, px²py², pxpy³, py⁴ in {F, H}.

    For each line the signed value of largest magnitude over the two
    non-trivial elements and their y-modes is returned, divided by
    1 + |hx|³. ``params`` recomputes the a_i from other constants over the
    same profile.
    """
    if not profile.contains(x):
        raise OutOfRange(f"x={x!r} outside the profile range {profile.x_range}")
    if basis is None:
        basis = build_basis(profile, params)
    _, hx, _, _ = profile.at(x)
    xs = np.asarray([x], dtype=float)
    stacked = np.concatenate([bracket_lines(basis.F1, xs), bracket_lines(basis.F2, xs)], axis=1)[..., 0]
    idx = np.argmax(np.abs(stacked), axis=1)
    worst = stacked[np.arange(5), idx]
    return tuple(float(v) / (1.0 + abs(hx) ** 3) for v in worst)


def _partials(f, P, step):
    """Richardson-extrapolated centered partials of f at P."""
    P = np.asarray(P, dtype=float)
    grad = np.empty(4)
    for j in range(4):
        h = step * max(1.0, abs(P[j]))
        e = np.zeros(4)
        e[j] = h

        def central(d):
            return (f(PhasePoint(*(P + d))) - f(PhasePoint(*(P - d)))) / (2.0 * d[j])

        grad[j] = (4.0 * central(e / 2.0) - central(e)) / 3.0
    return grad


def poisson_bracket_fd(f, g, P, step: float = FD_STEP, *, with_scale: bool = False):
    """∂x f ∂px g + ∂y f ∂py g − ∂px f ∂x g − ∂py f ∂y g by finite differences.

    With ``with_scale`` also returns 1 + Σ|individual products|, the natural
    size against which cancellation in the bracket should be judged.
    """
    df = _partials(f, P, step)
    dg = _partials(g, P, step)
    terms = np.array([df[0] * dg[2], df[1] * dg[3], -df[2] * dg[0], -df[3] * dg[1]])
    value = float(terms.sum())
    if with_scale:
        return value, 1.0 + float(np.abs(terms).sum())
    return value


def _as_function(obj, profile):
    if obj == "H":
        return lambda P: hamiltonian(profile, P)
    if obj == "L":
        return lambda P: P[3]
    return obj


def random_phase_points(profile: HProfile, n: int, rng, margin_cells: float = 2.0,
                        y_range: float = 1.0) -> np.ndarray:
    lo, hi = profile.x_range
    pad = margin_cells * (hi - lo) / max(profile.grid.size - 1, 1)
    x = rng.uniform(lo + pad, hi - pad, n)
    y = rng.uniform(-y_range, y_range, n)
    p = rng.normal(size=(n, 2))
    return np.column_stack([x, y, p])


@dataclass
class LadderReport:
    case: str
    relations: dict
    fd_relations: dict
    tol: float
    fd_tol: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def _rel(lhs, rhs):
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(rhs)))))


def ladder_check(profile: HProfile, basis: CubicIntegralBasis | None = None, points=None, *,
                 n: int = 40, seed: int = 0, tol: float = LADDER_TOL, fd_tol: float = FD_TOL,
                 fd_points: int = 8) -> LadderReport:
    """Check the action of F ↦ {F, L} = ∂F/∂y on the basis.

    Case i: ∂yF1 = μF1, ∂yF2 = −μF2. Case ii: ∂yF1 = −μF2, ∂yF2 = μF1.
    Case iii: ∂yF2 − F1 lies in span{L³, L·H}, ∂yF1 = A1·L·H + (A3/2)·L³,
    and ∂y³F2 = 0. The exact mode derivative is checked at every point and
    an FD Poisson bracket with L at a subset.
    """
    basis = build_basis(profile) if basis is None else basis
    p = profile.params
    if points is None:
        points = random_phase_points(profile, n, np.random.default_rng(seed))
    pts = np.asarray(points, dtype=float)
    X = tuple(pts.T)
    F1, F2, L3, LH = basis.F1, basis.F2, basis.Lcubed, basis.LH
    v1, v2, l3, lh = (e.evaluate(*X) for e in (F1, F2, L3, LH))
    d1, d2 = F1.d_dy().evaluate(*X), F2.d_dy().evaluate(*X)
    rel, fd_targets = {}, {}
    if p.case is Case.HYPERBOLIC:
        mu = p.mu
        rel["dyF1 = mu*F1"] = _rel(d1, mu * v1)
        rel["dyF2 = -mu*F2"] = _rel(d2, -mu * v2)
        fd_targets = {"{F1,L} = mu*F1": (F1, lambda P: mu * F1(P)),
                      "{F2,L} = -mu*F2": (F2, lambda P: -mu * F2(P))}
    elif p.case is Case.ELLIPTIC:
        mu = p.mu
        rel["dyF1 = -mu*F2"] = _rel(d1, -mu * v2)
        rel["dyF2 = mu*F1"] = _rel(d2, mu * v1)
        fd_targets = {"{F1,L} = -mu*F2": (F1, lambda P: -mu * F2(P)),
                      "{F2,L} = mu*F1": (F2, lambda P: mu * F1(P))}
    else:
        A1, A3 = p.A1, p.A3
        diff = d2 - v1
        design = np.column_stack([l3, lh])
        coef, *_ = np.linalg.lstsq(design, diff, rcond=None)
        rel["dyF2 - F1 in span(L3, LH)"] = _rel(design @ coef, diff) if np.any(diff) else 0.0
        rel["dyF2 = F1"] = _rel(d2, v1)
        rel["dyF1 = A1*LH + A3/2*L3"] = _rel(d1, A1 * lh + 0.5 * A3 * l3)
        d3 = F2.d_dy().d_dy().d_dy().evaluate(*X)
        rel["dy^3 F2 = 0"] = float(np.max(np.abs(d3)))
        fd_targets = {"{F2,L} = F1": (F2, F1),
                      "{F1,L} = A1*LH + A3/2*L3": (F1, lambda P: A1 * LH(P) + 0.5 * A3 * L3(P))}
    fd = {}
    for name, (elem, target) in fd_targets.items():
        worst = 0.0
        for row in pts[:fd_points]:
            P = PhasePoint(*row)
            val, scale = poisson_bracket_fd(elem, lambda Q: Q[3], P, with_scale=True)
            worst = max(worst, abs(val - target(P)) / scale)
        fd[name] = worst
    passed = all(v <= tol for v in rel.values()) and all(v <= fd_tol for v in fd.values())
    return LadderReport(p.case.value, rel, fd, tol, fd_tol, passed)


@dataclass
class BracketReport:
    x: list
    coefficients: list  # five lists c0..c4 over x
    algebraic: list
    fd_points: list
    fd_residual: dict
    max_abs: dict
    thresholds: dict
    passed: dict
    ladder: dict | None = None
    params: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    @property
    def consistent(self) -> bool:
        """True when the coefficient oracle and the FD oracle agree on pass/fail."""
        return self.passed["coefficients"] == self.passed["fd"]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        d["consistent"] = self.consistent
        return d

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d)


def verify_profile(profile: HProfile, *, n_points: int = 50, seed: int = 0,
                   coef_tol: float = COEF_TOL, fd_tol: float = FD_TOL, fd_step: float = FD_STEP,
                   params: PrincipalParams | None = None, ladder: bool = True,
                   tol_alg: float = 1e-11) -> BracketReport:
    """Run both bracket oracles (and optionally the ladder check) on a profile.

    Coefficient lines are sampled at interior nodes and at cell midpoints,
    where h_xxx is not pinned by the stored data. The FD oracle brackets H
    with all four basis elements at ``n_points`` random phase points.
    """
    basis = build_basis(profile, params)
    g = profile.grid
    nodes = g[1:-1]
    mids = 0.5 * (g[:-1] + g[1:])
    xs = np.sort(np.concatenate([nodes, mids]))
    _, hx, _, _ = profile.evaluate(xs)
    lines = np.concatenate([bracket_lines(basis.F1, xs), bracket_lines(basis.F2, xs)], axis=1)
    idx = np.argmax(np.abs(lines), axis=1)
    worst = np.take_along_axis(lines, idx[:, None, :], axis=1)[:, 0, :] / (1.0 + np.abs(hx) ** 3)
    alg = [residual(profile.params, x, h, d) / residual_scale(profile.params, x, h, d)
           for x, h, d in zip(profile.grid, profile.h, profile.hx)]
    rng = np.random.default_rng(seed)
    pts = random_phase_points(profile, n_points, rng)
    H = _as_function("H", profile)
    fd = {e.name: [] for e in basis}
    for row in pts:
        P = PhasePoint(*row)
        for e in basis:
            val, scale = poisson_bracket_fd(H, e, P, fd_step, with_scale=True)
            fd[e.name].append(val / scale)
    max_abs = {"coefficients": float(np.max(np.abs(worst))) if worst.size else 0.0,
               "algebraic": float(np.max(np.abs(alg))),
               "fd": max(float(np.max(np.abs(v))) for v in fd.values())}
    max_abs.update({f"c{j}": float(np.max(np.abs(worst[j]))) for j in range(5)})
    passed = {"coefficients": max_abs["coefficients"] <= coef_tol,
              "algebraic": max_abs["algebraic"] <= tol_alg,
              "fd": max_abs["fd"] <= fd_tol}
    lad = None
    if ladder:
        rep = ladder_check(profile, basis, pts[: min(40, len(pts))])
        lad = rep.to_dict()
        passed["ladder"] = rep.passed
    return BracketReport(
        x=xs.tolist(), coefficients=worst.tolist(), algebraic=alg,
        fd_points=pts.tolist(), fd_residual=fd, max_abs=max_abs,
        thresholds={"coefficients": coef_tol, "fd": fd_tol, "algebraic": tol_alg},
        passed=passed, ladder=lad, params=(params or profile.params).to_dict())
