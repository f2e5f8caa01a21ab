"""Geodesic flow of H = ½h_x²(px² + py²) and conservation diagnostics."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

from .errors import OutOfRange, StepFailure
from .integral_builder import CubicIntegralBasis, PhasePoint
from .principal_ode import HProfile

DRIFT_EPS = 1e-30


class Termination(str, Enum):
    COMPLETED = "Completed"
    LEFT_CHART = "LeftChart"
    STEP_FAILURE = "StepFailure"


def hamiltonian(profile: HProfile, P) -> float:
    _, hx, _, _ = profile.state(P[0])
    return 0.5 * hx * hx * (P[2] * P[2] + P[3] * P[3])


def hamilton_rhs(profile: HProfile, P, extrapolate: float = 0.0):
    """(dx, dy, dpx, dpy) of Hamilton's equations at P."""
    x, _, px, py = P
    _, hx, hxx, _ = profile.state(x, extrapolate=extrapolate)
    g = hx * hx
    return g * px, g * py, -hx * hxx * (px * px + py * py), 0.0


@dataclass
class GeodesicTrace:
    t: np.ndarray
    states: np.ndarray  # (n, 4): x, y, px, py
    values: dict  # integral name -> array over samples
    termination: Termination
    diagnostics: dict = field(default_factory=dict)
    message: str = ""
    term_scale: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.diagnostics:
            self.diagnostics = {name: np.abs(v - v[0]) / (np.abs(v[0]) + DRIFT_EPS)
                                for name, v in self.values.items()}

    @property
    def samples(self):
        return [(float(t), PhasePoint(*map(float, s))) for t, s in zip(self.t, self.states)]

    @property
    def endpoint(self) -> PhasePoint:
        return PhasePoint(*map(float, self.states[-1]))

    def max_drift(self) -> dict:
        """max_t |I(t) − I(0)| / (|I(0)| + ε) per integral."""
        return {name: float(np.max(d)) for name, d in self.diagnostics.items()}

    def max_scaled_drift(self) -> dict:
        """max_t |I(t) − I(0)| over the largest summed term magnitude seen on the trace.

        Meaningful where I(0) vanishes by symmetry of the initial point and
        the plain relative drift is only a ratio of round-off to ε.
        """
        return {name: float(np.max(np.abs(v - v[0]))) / (self.term_scale.get(name, 0.0) + DRIFT_EPS)
                for name, v in self.values.items()}

    def conservation_drift(self, vanish: float = 1e-6) -> dict:
        """Plain relative drift, or the scaled drift where |I(0)| < vanish·(term scale)."""
        plain, scaled = self.max_drift(), self.max_scaled_drift()
        out = {}
        for name, v in self.values.items():
            small = abs(float(v[0])) < vanish * self.term_scale.get(name, 0.0)
            out[name] = scaled[name] if small else plain[name]
        return out

    def summary(self) -> dict:
        return {"termination": self.termination.value, "t_end": float(self.t[-1]),
                "samples": int(self.t.size), "max_drift": self.max_drift(),
                "max_scaled_drift": self.max_scaled_drift(),
                "conservation_drift": self.conservation_drift(),
                "initial": dict(zip(("x", "y", "px", "py"), map(float, self.states[0]))),
                "final": dict(zip(("x", "y", "px", "py"), map(float, self.states[-1]))),
                "message": self.message}

    def to_json(self, **extra) -> str:
        data = self.summary()
        data.update(extra)
        return json.dumps(data)

    def to_csv(self) -> str:
        names = [n for n in ("H", "L", "F1", "F2") if n in self.values]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "px", "py"] + names + [f"drift_{n}" for n in names])
        for i in range(self.t.size):
            w.writerow([repr(float(self.t[i]))] + [repr(float(v)) for v in self.states[i]]
                       + [repr(float(self.values[n][i])) for n in names]
                       + [repr(float(self.diagnostics[n][i])) for n in names])
        return buf.getvalue()


def _sample_values(profile, basis, states, extra):
    x, y, px, py = states.T
    _, hx, _, _ = profile.evaluate(x)
    H = 0.5 * hx * hx * (px * px + py * py)
    values = {"H": H, "L": py.copy()}
    scales = {"H": float(np.max(H)), "L": float(np.max(np.abs(py)))}
    elements = dict(extra or {})
    if basis is not None:
        elements = {e.name: e for e in basis} | elements
    for name, element in elements.items():
        values[name] = element.evaluate(x, y, px, py)
        scales[name] = float(np.max(element.term_magnitude(x, y, px, py)))
    return values, scales


def integrate_geodesic(profile: HProfile, basis: CubicIntegralBasis | None, P0, T: float,
                       tol: float = 1e-12, *, n_samples: int = 501, method: str = "DOP853",
                       atol: float | None = None, extra: dict | None = None) -> GeodesicTrace:
    """Integrate the geodesic flow from P0 for Hamiltonian time T.

    Integration stops with ``LeftChart`` when x reaches the edge of the
    profile range. Stage evaluations may probe up to one cell beyond the
    edge, where the edge cell's interpolant is used. Diagnostics cover H, L
    and every basis element, plus any ``extra`` elements.
    """
    P0 = tuple(float(v) for v in P0)
    lo, hi = profile.x_range
    if not lo < P0[0] < hi:
        raise OutOfRange(f"x0={P0[0]} is not strictly inside [{lo}, {hi}]")
    if T <= 0:
        raise ValueError("duration must be positive")

    nan4 = (np.nan,) * 4

    def rhs(_t, s):
        # a NaN stage forces the step to be rejected and shortened
        try:
            return hamilton_rhs(profile, s, extrapolate=1.0)
        except OutOfRange:
            return nan4

    def leave_lo(_t, s):
        return s[0] - lo

    def leave_hi(_t, s):
        return hi - s[0]

    for ev in (leave_lo, leave_hi):
        ev.terminal = True
        ev.direction = -1
    t_eval = np.linspace(0.0, T, max(int(n_samples), 2))
    sol = solve_ivp(rhs, (0.0, T), P0, method=method, rtol=tol,
                    atol=tol * 1e-2 if atol is None else atol,
                    t_eval=t_eval, events=(leave_lo, leave_hi))
    t = sol.t
    states = sol.y.T
    termination = Termination.COMPLETED
    if sol.status == 1:
        termination = Termination.LEFT_CHART
        t_exit = float(np.concatenate(sol.t_events)[0])
        s_exit = np.concatenate([e for e in sol.y_events if len(e)])[0]
        s_exit[0] = min(max(s_exit[0], lo), hi)
        if t.size == 0 or t_exit > t[-1]:
            t = np.append(t, t_exit)
            states = np.vstack([states.reshape(-1, 4), s_exit])
    if t.size == 0:
        t, states = np.array([0.0]), np.array([P0])
    values, scales = _sample_values(profile, basis, states, extra)
    trace = GeodesicTrace(t, states, values, termination, message=sol.message, term_scale=scales)
    if sol.status == -1:
        trace.termination = Termination.STEP_FAILURE
        raise StepFailure(f"integration failed: {sol.message}", trace=trace)
    return trace


def independence_rank(profile: HProfile, basis: CubicIntegralBasis, P, fd_step: float = 1e-5,
                      threshold: float = 1e-8) -> int:
    """Numerical rank of the Jacobian of (L, F1, H) at P.

    Centered differences with step fd_step·max(1, |coordinate|); singular
    values below threshold·(largest) count as zero, and a gradient with
    norm below threshold is treated as zero outright.
    """
    P = np.asarray(P, dtype=float)
    if not profile.contains(P[0]):
        raise OutOfRange(f"x={P[0]} outside the profile range")
    F1 = basis.F1

    def funcs(Q):
        return np.array([Q[3], F1(Q), hamiltonian(profile, Q)])

    J = np.empty((3, 4))
    for j in range(4):
        step = fd_step * max(1.0, abs(P[j]))
        e = np.zeros(4)
        e[j] = step
        J[:, j] = (funcs(P + e) - funcs(P - e)) / (2.0 * step)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[0] <= threshold:
        return 0
    return int(np.sum(sv > threshold * sv[0]))
