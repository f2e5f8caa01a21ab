"""Global case-ii solutions on the 2-sphere.

After normalization the equation reads, with x = log t,

    h_x·(h_x² − h² + A2) = Ae·(eˣ + e⁻ˣ),     Ae > 0,

and the metric (dx² + dy²)/h_x² = (dξ² + dη²)/(t·h_x)² in Cartesian
coordinates ξ + iη = t·e^{iy}. Near t = 0 the factor (t·h_x)² is fitted as
a polynomial in τ = t², which gives a regular chart through each pole.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .curvature_classifier import CurvatureReport, classify
from .errors import ConditionsFailed, NoReturnDetected
from .integral_builder import build_basis
from .principal_ode import Case, HProfile, PrincipalParams, UniquePositive, solve_profile

T_RANGE = (1e-4, 1e4)
N_GRID = 4001
POLE_FIT_T = 0.1
CHART_IN, CHART_OUT = 0.05, 0.1


def check_global_conditions(params: PrincipalParams) -> tuple[bool, list[str]]:
    """Elliptic case with μ > 0, A0 > 0 and μ·A4 > |A3|."""
    reasons = []
    if params.case is not Case.ELLIPTIC:
        reasons.append("case must be (ii)")
    else:
        if not params.mu > 0:
            reasons.append("μ must be positive")
        if not params.A0 > 0:
            reasons.append("A0 must be positive")
        if not params.mu * params.A4 > abs(params.A3):
            reasons.append("μ·A4 ≤ |A3|")
    return (not reasons), reasons


@dataclass(frozen=True)
class SphereParams:
    """Normalized constants; h0 is the value of h at t = 1.

    ``provenance`` holds the original parameters, the affine map and the
    step transcript when the instance came from ``normalize``.
    """

    Ae: float
    A2: float
    h0: float = 0.0
    provenance: dict | None = None

    def __post_init__(self):
        if not self.Ae > 0:
            raise ValueError(f"Ae must be positive, got {self.Ae}")

    @property
    def principal(self) -> PrincipalParams:
        return PrincipalParams("ii", 1.0, 0.0, self.A2, 0.0, 2.0 * self.Ae, mu=1.0)

    @property
    def transcript(self) -> list:
        return list((self.provenance or {}).get("transcript", ()))

    @property
    def normalization(self) -> Normalization | None:
        prov = self.provenance or {}
        if "map" not in prov:
            return None
        return Normalization(**prov["map"])

    def to_dict(self) -> dict:
        prov = None
        if self.provenance:
            prov = dict(self.provenance)
            if isinstance(prov.get("params"), PrincipalParams):
                prov["params"] = prov["params"].to_dict()
        return {"Ae": self.Ae, "A2": self.A2, "h0": self.h0, "provenance": prov}


@dataclass(frozen=True)
class Normalization:
    """Affine map from an admissible case-ii equation to the normalized one.

    A point (x, h) of the original equation goes to
    x̃ = μ·x − δ and H = μ·(h + shift) with shift = A1/(2μ²A0); h_x is unchanged.
    """

    mu: float
    shift: float
    delta: float

    def forward(self, x, h):
        return self.mu * np.asarray(x) - self.delta, self.mu * (np.asarray(h) + self.shift)

    def backward(self, xt, H):
        return (np.asarray(xt) + self.delta) / self.mu, np.asarray(H) / self.mu - self.shift


def _normalized_residual(sp: SphereParams, xt, H, lam):
    lhs = lam * (lam * lam - H * H + sp.A2)
    rhs = sp.Ae * (np.exp(xt) + np.exp(-xt))
    return np.abs(lhs - rhs) / (1.0 + np.abs(lam) ** 3 + H * H * np.abs(lam) + abs(sp.A2) * np.abs(lam) + rhs)


def normalize(params: PrincipalParams, h0: float | None = None, *, verify: bool = True,
              verify_tol: float = 1e-10) -> SphereParams:
    """Reduce an admissible equation to (Ae, A2) with A0 = μ = 1, A1 = A3 = 0.

    ``h0`` is the value of the original h at the point that becomes t = 1;
    when omitted the normalized h0 is 0. With ``verify`` a short profile of
    the original equation is solved and pushed through the map, and the
    normalized residual must stay below verify_tol.
    """
    ok, reasons = check_global_conditions(params)
    if not ok:
        raise ConditionsFailed(reasons)
    mu, A0 = params.mu, params.A0
    a1, a2, a3, a4 = params.A1 / A0, params.A2 / A0, params.A3 / A0, params.A4 / A0
    steps = [{"step": "divide by A0", "A0": A0, "A": [1.0, a1, a2, a3, a4]}]
    shift = a1 / (2.0 * mu * mu)
    A2n = a2 + a1 * a1 / (4.0 * mu * mu)
    steps.append({"step": "shift h by A1/(2mu^2)", "shift": shift, "A2": A2n})
    a3n = a3 / mu
    steps.append({"step": "rescale x by mu", "mu": mu, "A3": a3n, "A4": a4,
                  "note": "h scales by mu, h_x invariant, metric homothetic"})
    Ap, Am = 0.5 * (a4 + a3n), 0.5 * (a4 - a3n)
    steps.append({"step": "exponential form", "A_plus": Ap, "A_minus": Am})
    delta = 0.5 * math.log(Am / Ap)
    Ae = math.sqrt(Ap * Am)
    steps.append({"step": "translate x", "delta": delta, "Ae": Ae})
    H0 = 0.0 if h0 is None else mu * (float(h0) + shift)
    nmap = Normalization(mu, shift, delta)
    sp = SphereParams(Ae, A2n, H0)
    if verify:
        x_start = delta / mu
        h_start = H0 / mu - shift
        half = 0.5 / mu
        prof = solve_profile(params, x_start, h_start, UniquePositive(),
                             (x_start - half, x_start + half), n=51)
        xt, H = nmap.forward(prof.grid, prof.h)
        worst = float(np.max(_normalized_residual(sp, xt, H, prof.hx)))
        steps.append({"step": "verify", "max_residual": worst, "tol": verify_tol})
        if worst > verify_tol:
            raise ConditionsFailed([f"normalized residual {worst:.3e} exceeds {verify_tol:.1e}"])
    prov = {"params": params, "map": asdict(nmap), "transcript": steps}
    return SphereParams(Ae, A2n, H0, prov)


def c0_of(Ae: float, A2: float) -> float:
    """The positive root of c·(4c² + A2) = Ae."""
    if not Ae > 0:
        raise ValueError("Ae must be positive")

    def f(c):
        return c * (4.0 * c * c + A2) - Ae

    hi = max(1.0, abs(A2), Ae)
    while f(hi) <= 0:
        hi *= 2.0
    c = brentq(f, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    for _ in range(3):
        d = 12.0 * c * c + A2
        if d == 0:
            break
        c -= f(c) / d
    return c


def comparison_constant(A_plus: float, A_minus: float, A2: float) -> float:
    """The positive C_h solving C_h·(4A₊A₋C_h² + A2) = 1."""
    k = 4.0 * A_plus * A_minus

    def f(c):
        return c * (k * c * c + A2) - 1.0

    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=1e-300, rtol=1e-15)


def comparison_profile(t, C_h, A_plus, A_minus):
    """C_h·(−A₋/t + A₊·t), an exact solution of its own normalized equation."""
    t = np.asarray(t, dtype=float)
    return C_h * (-A_minus / t + A_plus * t)


@dataclass
class PoleChart:
    """Regular chart at one pole: conformal factor 1/G(τ), τ = ξ² + η²."""

    G: Chebyshev
    dG: Chebyshev
    tau_max: float
    fit_residual: float

    def factor(self, tau):
        return 1.0 / self.G(tau)


def _pole_chart(t, hx, t_fit=POLE_FIT_T, deg=10):
    mask = t <= t_fit
    tau = t[mask] ** 2
    G = (t[mask] * hx[mask]) ** 2
    fit = Chebyshev.fit(tau, G, deg, domain=[0.0, t_fit**2])
    res = float(np.max(np.abs(fit(tau) - G)) / np.max(np.abs(G)))
    return PoleChart(fit, fit.deriv(), t_fit**2, res)


@dataclass(eq=False)
class SphereModel:
    sphere: SphereParams
    profile: HProfile
    c0: float
    south: PoleChart
    north: PoleChart
    c_pole: float
    c_north: float
    series: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return np.exp(self.profile.grid)

    @property
    def t_range(self):
        lo, hi = self.profile.x_range
        return math.exp(lo), math.exp(hi)

    def summary(self) -> dict:
        return {"Ae": self.sphere.Ae, "A2": self.sphere.A2, "h0": self.sphere.h0, "c0": self.c0,
                "pole_coefficient": self.c_pole, "north_coefficient": self.c_north,
                "t_range": list(self.t_range), "series": self.series,
                "chart_fit_residual": {"south": self.south.fit_residual, "north": self.north.fit_residual},
                "provenance": self.sphere.to_dict()["provenance"]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "h", "t_h_t", "conformal_factor"])
        t = self.t
        for ti, h, hx in zip(t, self.profile.h, self.profile.hx):
            w.writerow([repr(float(ti)), repr(float(h)), repr(float(hx)), repr(float(1.0 / (ti * hx) ** 2))])
        return buf.getvalue()


def even_series_fit(t, th, degree: int = 6):
    """Fit t·h(t) by an even polynomial in t; returns (coefficients in τ = t², relative residual)."""
    t, th = np.asarray(t, dtype=float), np.asarray(th, dtype=float)
    tau = t * t
    k = degree // 2
    V = np.vander(tau / tau.max(), k + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, th, rcond=None)
    res = float(np.max(np.abs(V @ coef - th)) / np.max(np.abs(th)))
    return coef / tau.max() ** np.arange(k + 1), res


def solve_sphere_profile(sp: SphereParams, t_range=T_RANGE, n: int = N_GRID, **solve_kw) -> SphereModel:
    """Solve the normalized equation in x = log t from h(0) = h0 on the positive root."""
    t_lo, t_hi = t_range
    if not 0 < t_lo < 1 < t_hi:
        raise ValueError("t range must lie in (0, ∞) and contain 1")
    prof = solve_profile(sp.principal, 0.0, sp.h0, UniquePositive(),
                         (math.log(t_lo), math.log(t_hi)), n=n, **solve_kw)
    t = np.exp(prof.grid)
    south = _pole_chart(t, prof.hx)
    north = _pole_chart(1.0 / t[::-1], prof.hx[::-1])
    s_mask = t <= POLE_FIT_T
    coef_s, res_s = even_series_fit(t[s_mask], t[s_mask] * prof.h[s_mask])
    n_mask = t >= 1.0 / POLE_FIT_T
    s = 1.0 / t[n_mask]
    coef_n, res_n = even_series_fit(s, s * prof.h[n_mask])
    series = {"south_tau_coefficients": coef_s.tolist(), "south_relative_residual": res_s,
              "north_tau_coefficients": coef_n.tolist(), "north_relative_residual": res_n}
    return SphereModel(sp, prof, c0_of(sp.Ae, sp.A2), south, north,
                       c_pole=float(-coef_s[0]), c_north=float(coef_n[0]), series=series)


def conformal_factor(model: SphereModel, xi: float, eta: float) -> float:
    """1/(t·h_x)² at the point ξ + iη; the pole charts cover t outside the grid."""
    tau = xi * xi + eta * eta
    t = math.sqrt(tau)
    lo, hi = model.t_range
    if t < lo * 1.0000001 or t == 0.0:
        return float(model.south.factor(tau))
    if t > hi / 1.0000001:
        return float(model.north.factor(1.0 / tau))
    _, hx, _, _ = model.profile.at(math.log(t))
    return 1.0 / (t * hx) ** 2


def integral_cartesian(model: SphereModel, xi: float, eta: float, pxi: float, peta: float,
                       basis=None) -> float:
    """F1 (phase 0) of the case-ii basis in Cartesian coordinates around t = 0."""
    tau = xi * xi + eta * eta
    t = math.sqrt(tau)
    lo, _ = model.t_range
    if t <= lo:
        c = model.c_pole
        return c**3 * pxi * (pxi * pxi + peta * peta)
    basis = build_basis(model.profile) if basis is None else basis
    x = math.log(t)
    y = math.atan2(eta, xi)
    px = xi * pxi + eta * peta
    py = xi * peta - eta * pxi
    return basis.F1((x, y, px, py))


def cartesian_expansion(c0: float, A2: float, xi, eta, pxi, peta):
    """Quadratic-order expansion of F1 about the pole for h = c0·(t − 1/t)."""
    return (c0**3 * pxi * (pxi**2 + peta**2)
            + (3 * c0**3 * xi**2 + 0.5 * c0 * (A2 + 6 * c0**2) * eta**2) * pxi**3
            - c0 * (2 * c0**2 + A2) * eta * xi * pxi**2 * peta
            + (0.5 * c0 * (10 * c0**2 + A2) * xi**2 + c0**3 * eta**2) * peta**2 * pxi
            + 2 * c0**3 * eta * xi * peta**3)


def comparison_bounds(model: SphereModel) -> dict:
    """Pointwise ordering against explicit comparison solutions.

    For h0 ≥ 0 the round solution C_h·Ae·(t − 1/t) is a lower bound
    everywhere (solutions of the same equation on the same root cannot
    cross). Upper bounds are comparison solutions C_h·(−A₋/t + A₊t) through
    a point of h: with A₋ = Ae, A₊ = Ae + h0/C_h through t = 1 for t ≥ 1,
    and with A₊ = Ae through a point t2 < 1 where h(t2) < 0 for t ≤ t2.
    h0 < 0 is handled by the inversion h(t) ↦ −h(1/t).
    """
    sp = model.sphere
    Ae, A2 = sp.Ae, sp.A2
    t = model.t
    h = model.profile.h
    sign = 1.0
    if sp.h0 < 0:
        sign = -1.0
        t = np.exp(-model.profile.grid[::-1])
        h = -model.profile.h[::-1]
    h0 = sign * sp.h0
    C = comparison_constant(Ae, Ae, A2)
    lower = comparison_profile(t, C, Ae, Ae)
    out = {"C_h": C, "mirrored": sign < 0}
    out["lower_min_gap"] = float(np.min(h - lower))
    if h0 > 0:
        Ap = Ae + h0 / C
        # the upper comparisons keep C_h and absorb the change into their A2
        A2p = 1.0 / C - 4.0 * Ap * Ae * C * C
        up1 = comparison_profile(t, C, Ap, Ae)
        m1 = t >= 1.0 - 1e-12
        out.update(A_plus_upper=Ap, A2_upper=A2p, upper_right_min_gap=float(np.min(up1[m1] - h[m1])))
        neg = np.where(h < 0)[0]
        i2 = neg[len(neg) // 2] if neg.size else None
        if i2 is not None:
            t2 = float(t[i2])
            Am = t2 * (Ae * t2 - h[i2] / C)
            up2 = comparison_profile(t, C, Ae, Am)
            m2 = t <= t2
            out.update(t2=t2, A_minus_upper=Am, A2_upper_left=1.0 / C - 4.0 * Ae * Am * C * C,
                       upper_left_min_gap=float(np.min(up2[m2] - h[m2])))
    gaps = [v for k, v in out.items() if k.endswith("min_gap")]
    tol = 1e-9 * float(np.max(np.abs(h)))
    out["ordered"] = all(g >= -tol for g in gaps)
    return out


def sphere_curvature_report(model: SphereModel, x_window: float = 3.0, **kw) -> CurvatureReport:
    """Classify the model on |x| ≤ x_window.

    Farther out h_x grows like 1/t and R = h_xxx·h_x − h_xx² is a difference
    of terms of size h_x², so its rounding error there exceeds the
    classifier's spread tolerance.
    """
    p = model.profile
    m = np.abs(p.grid) <= x_window
    sub = HProfile(p.params, p.grid[m], p.h[m], p.hx[m], p.hxx[m], p.hxxx[m],
                   root_branch=p.root_branch, truncation_flags=p.truncation_flags)
    return classify(sub, **kw)


# geodesics on the sphere with pole charts

@dataclass
class ZollReport:
    initial: list
    periods: list
    return_distances: list
    windings: list
    max_H_drift: list
    tol: float
    passed: bool
    failures: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


class _SphereFlow:
    def __init__(self, model: SphereModel):
        self.m = model
        lo, hi = model.profile.x_range
        self.x_in_s, self.x_out_s = math.log(CHART_IN), math.log(CHART_OUT)
        self.x_in_n, self.x_out_n = -math.log(CHART_IN), -math.log(CHART_OUT)
        assert lo < self.x_in_s and hi > self.x_in_n

    # (x, y) chart; state (x, y, px, py)
    def rhs_xy(self, _t, s):
        _, hx, hxx, _ = self.m.profile.state(s[0], extrapolate=1.0)
        g = hx * hx
        return (g * s[2], g * s[3], -hx * hxx * (s[2] ** 2 + s[3] ** 2), 0.0)

    # pole chart; state (ξ, η, pξ, pη, y) with y the unwrapped angle
    def rhs_pole(self, chart):
        G, dG = chart.G, chart.dG

        def rhs(_t, s):
            xi, eta, pxi, peta, _ = s
            tau = xi * xi + eta * eta
            g = float(G(tau))
            dg = float(dG(tau))
            p2 = pxi * pxi + peta * peta
            L = xi * peta - eta * pxi
            return (g * pxi, g * peta, -dg * xi * p2, -dg * eta * p2, g * L / tau)
        return rhs

    def hamiltonian_xy(self, s):
        _, hx, _, _ = self.m.profile.state(s[0])
        return 0.5 * hx * hx * (s[2] ** 2 + s[3] ** 2)

    @staticmethod
    def to_pole(s, north):
        x, y, px, py = s
        r = math.exp(-x if north else x)
        c, sn = math.cos(y), math.sin(y)
        xi, eta = r * c, r * sn
        pr = -px if north else px  # px = ±(ξpξ + ηpη)
        # invert px' = ξpξ + ηpη, py = ξpη − ηpξ
        tau = r * r
        pxi = (xi * pr - eta * py) / tau
        peta = (eta * pr + xi * py) / tau
        return np.array([xi, eta, pxi, peta, y])

    @staticmethod
    def from_pole(s, north):
        xi, eta, pxi, peta, y = s
        r = math.hypot(xi, eta)
        x = -math.log(r) if north else math.log(r)
        pr = xi * pxi + eta * peta
        py = xi * peta - eta * pxi
        return np.array([x, y, -pr if north else pr, py])


def _zoll_one(model: SphereModel, P0, T_max: float, tol_int: float):
    flow = _SphereFlow(model)
    x0, y0 = P0[0], P0[1]
    _, hx0, _, _ = model.profile.state(x0)
    H0 = flow.hamiltonian_xy(P0)
    sign = 1.0 if P0[3] >= 0 else -1.0
    chart = "xy"
    state = np.asarray(P0, dtype=float)
    t_now = 0.0
    crossings = []
    drift = 0.0
    winding = 1
    target = y0 + sign * 2.0 * math.pi * winding
    while t_now < T_max:
        if chart == "xy":
            def ev_section(_t, s, target=target):
                return s[1] - target
            def ev_south(_t, s):
                return s[0] - flow.x_in_s
            def ev_north(_t, s):
                return flow.x_in_n - s[0]
            events = [ev_section, ev_south, ev_north]
            for e in events:
                e.terminal = True
            ev_south.direction = ev_north.direction = -1
            sol = solve_ivp(flow.rhs_xy, (t_now, T_max), state, method="DOP853",
                            rtol=tol_int, atol=tol_int * 1e-2, events=events)
        else:
            north = chart == "north"
            pc = model.north if north else model.south
            r_out = CHART_OUT

            def ev_section(_t, s, target=target):
                return s[4] - target

            def ev_leave(_t, s):
                return s[0] ** 2 + s[1] ** 2 - r_out**2
            events = [ev_section, ev_leave]
            for e in events:
                e.terminal = True
            ev_leave.direction = 1
            sol = solve_ivp(flow.rhs_pole(pc), (t_now, T_max), state, method="DOP853",
                            rtol=tol_int, atol=tol_int * 1e-2, events=events)
        if sol.status == -1:
            raise NoReturnDetected(f"integration failed: {sol.message}")
        if sol.status == 0:
            break
        t_now = float(sol.t[-1])
        state = sol.y[:, -1].copy()
        fired = [i for i, te in enumerate(sol.t_events) if len(te)]
        i = fired[0]
        if i == 0:
            xy = state if chart == "xy" else flow.from_pole(state, chart == "north")
            d = math.sqrt((xy[0] - x0) ** 2 + (hx0 * (xy[2] - P0[2])) ** 2 + (hx0 * (xy[3] - P0[3])) ** 2)
            crossings.append((t_now, d, winding))
            drift = max(drift, abs(flow.hamiltonian_xy(xy) - H0) / H0)
            if d < 1e-3:
                return t_now, d, winding, drift
            winding += 1
            target = y0 + sign * 2.0 * math.pi * winding
            continue
        if chart == "xy":
            chart = "south" if i == 1 else "north"
            state = flow.to_pole(state, chart == "north")
        else:
            north = chart == "north"
            state = flow.from_pole(state, north)
            chart = "xy"
    if crossings:
        best = min(crossings, key=lambda c: c[1])
        return best[0], best[1], best[2], drift
    raise NoReturnDetected(f"no return to y ≡ y0 within T = {T_max}")


def zoll_check(model: SphereModel, n_geodesics: int = 5, tol: float = 1e-4, *, seed: int = 0,
               T_max: float = 60.0, tol_int: float = 1e-12, workers: int | None = None,
               initial=None) -> ZollReport:
    """Integrate unit-speed geodesics and measure the first return to the start point.

    Initial points have |x| ≤ 1, y = 0 and a random direction whose angle
    with the meridian keeps |L| away from 0. Returns are detected on the
    section y ≡ y0 (mod 2π) with the unwrapped angle, and the distance is
    √(Δx² + (h_x Δpx)² + (h_x Δpy)²) at the starting h_x. ``initial``
    replaces the random draw by explicit (x, y, px, py) points.
    """
    rng = np.random.default_rng(seed)
    inits = [tuple(map(float, P)) for P in initial] if initial is not None else []
    for _ in range(0 if initial is not None else n_geodesics):
        x0 = float(rng.uniform(-1.0, 1.0))
        theta = float(rng.uniform(0.25, math.pi - 0.25)) * (1 if rng.random() < 0.5 else -1)
        _, hx0, _, _ = model.profile.state(x0)
        inits.append((x0, 0.0, math.cos(theta) / hx0, math.sin(theta) / hx0))
    periods, dists, winds, drifts, failures = [], [], [], [], []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_zoll_one, model, P0, T_max, tol_int) for P0 in inits]
        for P0, fut in zip(inits, futures):
            try:
                per, d, w, dr = fut.result()
            except NoReturnDetected as exc:
                failures.append({"initial": list(P0), "error": str(exc)})
                per, d, w, dr = math.nan, math.inf, 0, math.nan
            periods.append(per)
            dists.append(d)
            winds.append(w)
            drifts.append(dr)
    passed = not failures and all(d <= tol for d in dists)
    return ZollReport([list(p) for p in inits], periods, dists, winds, drifts, tol, passed, failures)


def sphere_report(model: SphereModel, zoll: ZollReport | None = None) -> dict:
    cr = sphere_curvature_report(model)
    out = model.summary()
    out["curvature_class"] = cr.classification
    out["R_range"] = [cr.R_min, cr.R_max]
    if zoll is not None:
        out["zoll"] = {"periods": zoll.periods, "return_distances": zoll.return_distances,
                       "windings": zoll.windings, "passed": zoll.passed}
    return out


def to_json(model: SphereModel, zoll: ZollReport | None = None, **extra) -> str:
    d = sphere_report(model, zoll)
    d.update(extra)
    return json.dumps(d)
