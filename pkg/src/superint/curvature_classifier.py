"""Gauss curvature R = h_xxx·h_x − h_xx² and constant-curvature classification.

The six constant-curvature families, with A0 = 1:

    1  a·sinh(μ(x−b)) + c    R =  a²μ⁴   case ii
    2  a·cosh(μ(x−b)) + c    R = −a²μ⁴   case ii
    3  a·sin(μ(x−b)) + c     R = −a²μ⁴   case i
    4  a·(x−b)² + c          R = −4a²    case iii
    5  a·exp(μx) + c         R = 0       case ii
    6  a·x + c               R = 0       case iii
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import AmbiguousFit, InvalidParams
from .principal_ode import HProfile, NearestTo, PrincipalParams

TOL_R = 1e-7
FIT_TOL = 1e-8

FAMILY_NAMES = {1: "sinh", 2: "cosh", 3: "sin", 4: "quadratic", 5: "exp", 6: "linear"}
FAMILY_LABELS = {
    1: "rotation of the round sphere",
    2: "rotation of the hyperbolic plane",
    3: "translation of the hyperbolic plane",
    4: "loxodromy of the hyperbolic plane",
    5: "rotation of the Euclidean plane",
    6: "translation of the Euclidean plane",
}


def gauss_curvature(profile: HProfile, x) -> float:
    _, hx, hxx, hxxx = profile.at(x)
    return hxxx * hx - hxx * hxx


def curvature_of_family(family: int, a: float, mu: float = 1.0) -> float:
    return {1: a * a * mu**4, 2: -a * a * mu**4, 3: -a * a * mu**4,
            4: -4.0 * a * a, 5: 0.0, 6: 0.0}[family]


# closed forms: value and three derivatives
def _closed(family, p, x):
    x = np.asarray(x, dtype=float)
    a, c = p["a"], p["c"]
    if family in (1, 2, 3):
        mu, b = p["mu"], p["b"]
        u = mu * (x - b)
        if family == 1:
            f = (np.sinh(u), np.cosh(u), np.sinh(u), np.cosh(u))
        elif family == 2:
            f = (np.cosh(u), np.sinh(u), np.cosh(u), np.sinh(u))
        else:
            f = (np.sin(u), np.cos(u), -np.sin(u), -np.cos(u))
        return (a * f[0] + c, a * mu * f[1], a * mu**2 * f[2], a * mu**3 * f[3])
    if family == 5:
        mu = p["mu"]
        e = np.exp(mu * x)
        return (a * e + c, a * mu * e, a * mu**2 * e, a * mu**3 * e)
    if family == 4:
        b = p["b"]
        return (a * (x - b) ** 2 + c, 2.0 * a * (x - b), np.full_like(x, 2.0 * a), np.zeros_like(x))
    return (a * x + c, np.full_like(x, a), np.zeros_like(x), np.zeros_like(x))


def closed_form(family: int, params: dict, x):
    """(h, h_x, h_xx, h_xxx) of a family member at x."""
    return _closed(family, params, x)


@dataclass(frozen=True)
class FamilyInstance:
    family: int
    closed_params: dict
    params: PrincipalParams
    R: float
    x0: float
    h0: float
    hx0: float
    x_range: tuple

    @property
    def selector(self):
        return NearestTo(self.hx0)

    def h(self, x):
        return _closed(self.family, self.closed_params, x)


def family_instance(family: int, a: float = 1.0, mu: float = 1.0, b: float = 0.0, c: float = 0.0,
                    C: float | None = None, A1: float | None = None, A2: float | None = None,
                    x_range: tuple | None = None) -> FamilyInstance:
    """Principal-equation parameters, initial data and a safe range for one family member.

    C (types 1, 2, 3, 5), A2 (types 4, 6) and A1 (type 6) are the free
    constants of each family. Defaults: C = 0, except C = 2 for type 2 and
    C = 1 for type 5; A2 = 1 for type 4; A1 = A2 = 0 for type 6.
    """
    if family not in FAMILY_NAMES:
        raise InvalidParams(f"family type must be 1..6, got {family}")
    if a == 0 or (family in (1, 2, 3, 5) and mu <= 0):
        raise InvalidParams("need a ≠ 0 and μ > 0")
    cp = {"a": float(a), "c": float(c)}
    if family in (1, 2, 3, 5):
        cp["mu"] = float(mu)
    if family in (1, 2, 3, 4):
        cp["b"] = float(b)
    if family in (1, 2, 3, 5):
        C = {2: 2.0, 5: 1.0}.get(family, 0.0) if C is None else float(C)
        cp["C"] = C
    if family == 1:
        K = a * mu * (C + (a * mu) ** 2)
        params = PrincipalParams("ii", 1.0, -2 * mu**2 * c, C - mu**2 * c**2,
                                 -mu * K * math.sinh(mu * b), K * math.cosh(mu * b), mu=mu)
        rng, x0 = (b - 2.0 / mu, b + 2.0 / mu), b
    elif family == 2:
        K = a * mu * (C - (a * mu) ** 2)
        params = PrincipalParams("ii", 1.0, -2 * mu**2 * c, C - mu**2 * c**2,
                                 mu * K * math.cosh(mu * b), -K * math.sinh(mu * b), mu=mu)
        rng, x0 = (b + 0.5 / mu, b + 2.0 / mu), b + 1.0 / mu
    elif family == 3:
        K = a * mu * (C + (a * mu) ** 2)
        params = PrincipalParams("i", 1.0, 2 * mu**2 * c, C + mu**2 * c**2,
                                 mu * K * math.sin(mu * b), K * math.cos(mu * b), mu=mu)
        rng, x0 = (b - 1.0 / mu, b + 1.0 / mu), b
    elif family == 4:
        A2 = 1.0 if A2 is None else float(A2)
        cp["A2"] = A2
        params = PrincipalParams("iii", 1.0, 4 * a, A2, 2 * a * (A2 - 4 * a * c), -2 * a * b * (A2 - 4 * a * c))
        rng, x0 = (b + 0.5, b + 2.0), b + 1.0
    elif family == 5:
        K = a * mu * C
        params = PrincipalParams("ii", 1.0, -2 * mu**2 * c, C - mu**2 * c**2, mu * K, K, mu=mu)
        rng, x0 = (-1.0 / mu, 1.0 / mu), 0.0
    else:
        A1 = 0.0 if A1 is None else float(A1)
        A2 = 0.0 if A2 is None else float(A2)
        cp["A1"], cp["A2"] = A1, A2
        params = PrincipalParams("iii", 1.0, A1, A2, -a * a * A1, a * (a * a - c * A1 + A2))
        rng, x0 = (-2.0, 2.0), 0.0
    if x_range is not None:
        rng = tuple(float(v) for v in x_range)
        x0 = 0.5 * (rng[0] + rng[1])
    h0, hx0, _, _ = (float(v) for v in _closed(family, cp, x0))
    return FamilyInstance(family, cp, params, curvature_of_family(family, a, cp.get("mu", 1.0)),
                          float(x0), h0, hx0, rng)


def verify_constant_family(family: int, closed_params: dict, x=None, n: int = 201) -> dict:
    """Residuals of the family's characteristic equations for its closed form.

    Families 1, 2, 3 and 5 have two equations each, families 4 and 6 have one.
    The equations are evaluated in their corrected form. Where the printed
    form of an equation differs from it (the second equation of 3 and the
    first of 5), the residual of the printed form is returned as well.
    """
    p = dict(closed_params)
    if x is None:
        inst = family_instance(family, **{k: v for k, v in p.items() if k in
                                          ("a", "mu", "b", "c", "C", "A1", "A2")})
        x = np.linspace(*inst.x_range, n)
    x = np.asarray(x, dtype=float)
    h, hx, _, _ = _closed(family, p, x)
    a, c = p["a"], p["c"]
    out = {"family": family, "name": FAMILY_NAMES[family]}
    if family in (1, 2, 3, 5):
        mu, C = p["mu"], p["C"]
        am = a * mu
        u = mu * (x - p.get("b", 0.0))
        if family == 1:
            eq1 = hx * (hx**2 - mu**2 * (h - c) ** 2 + C) - am * (C + am**2) * np.cosh(u)
            eq2 = hx * (hx**2 - 9 * mu**2 * (h - c) ** 2 - 3 * am**2) + 2 * am**3 * np.cosh(3 * u)
        elif family == 2:
            eq1 = hx * (hx**2 - mu**2 * (h - c) ** 2 + C) - am * (C - am**2) * np.sinh(u)
            eq2 = hx * (hx**2 - 9 * mu**2 * (h - c) ** 2 + 3 * am**2) + 2 * am**3 * np.sinh(3 * u)
        elif family == 3:
            eq1 = hx * (hx**2 + mu**2 * (h - c) ** 2 + C) - am * (C + am**2) * np.cos(u)
            lhs2 = hx * (hx**2 + 9 * mu**2 * (h - c) ** 2 - 3 * am**2)
            eq2 = lhs2 + 2 * am**3 * np.cos(3 * u)
            out["eq2_printed"] = float(np.max(np.abs(lhs2 - 2 * am**3 * np.cos(3 * u))))
        else:
            e = np.exp(mu * x)
            lhs1 = hx * (hx**2 - mu**2 * (h - c) ** 2 + C)
            eq1 = lhs1 - am * C * e
            eq2 = hx * (hx**2 - 9 * mu**2 * (h - c) ** 2) + 8 * am**3 * np.exp(3 * mu * x)
            out["eq1_printed"] = float(np.max(np.abs(lhs1 + am * C * e)))
        out["eq1"] = float(np.max(np.abs(eq1)))
        out["eq2"] = float(np.max(np.abs(eq2)))
    elif family == 4:
        A2 = p.get("A2", 1.0)
        out["eq1"] = float(np.max(np.abs(hx * (hx**2 - 4 * a * h + A2) - 2 * a * (A2 - 4 * a * c) * (x - p["b"]))))
    else:
        A1, A2 = p.get("A1", 0.0), p.get("A2", 0.0)
        out["eq1"] = float(np.max(np.abs(hx * (hx**2 - A1 * h + A2) - (-a * a * A1 * x + a * (a * a - c * A1 + A2)))))
    # the closed form must also solve its own Principal equation
    inst_keys = {k: v for k, v in p.items() if k in ("a", "mu", "b", "c", "C", "A1", "A2")}
    prm = family_instance(family, **inst_keys).params
    lam = np.array([prm.rhs(v) for v in x])
    q = prm._sigma() * h * h - prm.A1 * h + prm.A2
    out["principal"] = float(np.max(np.abs(hx * (hx * hx + q) - lam)))
    out["max"] = max(v for k, v in out.items() if k in ("eq1", "eq2", "principal"))
    return out


# fitting

def _initial_guesses(x, h, hx, hxx, hxxx):
    """Closed-form parameters of each family matching the data at one point."""
    guesses = {}
    k = hxxx / hx if hx != 0 else 0.0
    mu = math.sqrt(abs(k)) if k != 0 else 1.0
    # exponential-type families
    Ae = 0.5 * (hxx / mu**2 + hx / mu)
    Be = 0.5 * (hxx / mu**2 - hx / mu)
    c_e = h - hxx / mu**2
    P = Ae * Be
    amp = 2.0 * math.sqrt(abs(P)) if P != 0 else 2.0 * abs(Ae) + 1e-300
    sign = 1.0 if Ae >= 0 else -1.0
    a_h = sign * amp
    b_h = x - math.log(max(2.0 * Ae / a_h, 1e-300)) / mu if Ae != 0 else x
    guesses[1] = {"a": a_h, "mu": mu, "b": b_h, "c": c_e}
    guesses[2] = {"a": a_h, "mu": mu, "b": b_h, "c": c_e}
    guesses[5] = {"a": Ae * math.exp(-mu * x), "mu": mu, "c": c_e}
    # trigonometric
    c_s = h + hxx / mu**2
    a_s = math.hypot(hxx / mu**2, hx / mu)
    theta = math.atan2(-hxx / mu**2, hx / mu)
    guesses[3] = {"a": a_s, "mu": mu, "b": x - theta / mu, "c": c_s}
    # polynomials
    a_q = 0.5 * hxx if hxx != 0 else 1e-3
    b_q = x - hx / (2.0 * a_q)
    guesses[4] = {"a": a_q, "b": b_q, "c": h - a_q * (x - b_q) ** 2}
    guesses[6] = {"a": hx, "c": h - hx * x}
    return guesses


_KEYS = {1: ("a", "mu", "b", "c"), 2: ("a", "mu", "b", "c"), 3: ("a", "mu", "b", "c"),
         4: ("a", "b", "c"), 5: ("a", "mu", "c"), 6: ("a", "c")}


def _fit_family(family, guess, xs, hs, b_bounds, n_fit=41):
    keys = _KEYS[family]
    scale = 1.0 + float(np.max(np.abs(hs)))
    sub = np.unique(np.linspace(0, xs.size - 1, min(n_fit, xs.size)).round().astype(int))

    def resid(v, idx=sub):
        p = dict(zip(keys, v))
        return (_closed(family, p, xs[idx])[0] - hs[idx]) / scale

    x0 = np.array([guess[k] for k in keys], dtype=float)
    lo = np.full(len(keys), -np.inf)
    hi = np.full(len(keys), np.inf)
    for i, k in enumerate(keys):
        if k == "mu":
            lo[i] = 1e-6
        if k == "b":
            lo[i], hi[i] = b_bounds
    x0 = np.clip(np.nan_to_num(x0, nan=0.0, posinf=1e6, neginf=-1e6),
                 np.where(np.isfinite(lo), lo + 1e-12, -1e300), np.where(np.isfinite(hi), hi - 1e-12, 1e300))
    try:
        with np.errstate(all="ignore"):
            sol = least_squares(resid, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=300)
        params = dict(zip(keys, map(float, sol.x)))
        r = float(np.sqrt(np.mean(resid(sol.x, slice(None)) ** 2)))
        if not math.isfinite(r):
            r = math.inf
    except (ValueError, FloatingPointError, OverflowError):
        params, r = dict(zip(keys, map(float, x0))), math.inf
    return params, r


@dataclass
class CurvatureReport:
    x: list
    R: list
    R_min: float
    R_max: float
    R_spread: float
    classification: str  # Constant | Darboux | Generic
    family_type: int | None = None
    family_name: str | None = None
    label: str | None = None
    R_value: float | None = None
    R_fit: float | None = None
    fit_params: dict | None = None
    fit_residuals: dict = field(default_factory=dict)
    tol_R: float = TOL_R

    @property
    def is_constant(self) -> bool:
        return self.classification == "Constant"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "R"])
        for x, r in zip(self.x, self.R):
            w.writerow([repr(x), repr(r)])
        return buf.getvalue()


def fit_families(profile: HProfile, fit_tol: float = FIT_TOL) -> dict:
    """Fit h against all six closed forms; returns {family: (params, rms residual)}."""
    xs, hs = profile.grid, profile.h
    mid = xs.size // 2
    guesses = _initial_guesses(float(xs[mid]), float(hs[mid]), float(profile.hx[mid]),
                               float(profile.hxx[mid]), float(profile.hxxx[mid]))
    lo, hi = profile.x_range
    width = hi - lo
    b_bounds = (lo - 2.0 * width, hi + 2.0 * width)
    return {fam: _fit_family(fam, guesses[fam], xs, hs, b_bounds) for fam in range(1, 7)}


def classify(profile: HProfile, tol_R: float = TOL_R, fit_tol: float = FIT_TOL) -> CurvatureReport:
    """Constant (with family), Darboux (A0 = 0) or Generic.

    Raises AmbiguousFit when the curvature is constant and two families fit
    h within fit_tol.
    """
    R = profile.hxxx * profile.hx - profile.hxx**2
    R_min, R_max = float(R.min()), float(R.max())
    spread = R_max - R_min
    rep = CurvatureReport(profile.grid.tolist(), R.tolist(), R_min, R_max, spread, "Generic", tol_R=tol_R)
    if spread <= tol_R * (1.0 + abs(R_min)):
        fits = fit_families(profile, fit_tol)
        rep.fit_residuals = {FAMILY_NAMES[f]: r for f, (_, r) in fits.items()}
        ranked = sorted(fits.items(), key=lambda kv: kv[1][1])
        good = [f for f, (_, r) in ranked if r <= fit_tol]
        best, (params, _) = ranked[0]
        rep.classification = "Constant"
        rep.R_value = float(np.mean(R))
        if len(good) > 1:
            rep.family_type = None
            raise AmbiguousFit(f"families {[FAMILY_NAMES[f] for f in good]} all fit within {fit_tol}",
                               candidates=tuple(good), report=rep)
        rep.family_type = best
        rep.family_name = FAMILY_NAMES[best]
        rep.label = FAMILY_LABELS[best]
        rep.fit_params = params
        rep.R_fit = curvature_of_family(best, params["a"], params.get("mu", 1.0))
    elif profile.params.A0 == 0.0:
        rep.classification = "Darboux"
    return rep
