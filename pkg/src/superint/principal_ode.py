"""Principal equations for the conformal profile h(x) of g = (dx² + dy²)/h_x².

Each equation is cubic in the derivative ``λ = h_x``::

    A0·λ³ + q(h)·λ = Λ(x)

with

    case i   (hyperbolic)  q = +μ²A0h² − A1h + A2,   Λ = A3 sin(μx)/μ + A4 cos(μx)
    case ii  (elliptic)    q = −μ²A0h² − A1h + A2,   Λ = A3 sinh(μx)/μ + A4 cosh(μx)
    case iii (parabolic)   q = −A1h + A2,            Λ = A3x + A4

A profile is obtained by integrating h' = λ(x, h) outward from an initial
point while following one root of the cubic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import DOP853

from ._hermite import SepticHermite
from .errors import (InvalidParams, MetricDegenerate, NoRoot, NoRootAtStart,
                     RootCollision, RootNotUnique, SingularBranch)

TOL_ALG = 1e-11
EPS_D = 1e-10
RTOL = 1e-12
ATOL = 1e-14

# relative discriminant below which two roots are reported as one double root
_MULT_TOL = 1e-12


class Case(str, Enum):
    HYPERBOLIC = "i"
    ELLIPTIC = "ii"
    PARABOLIC = "iii"

    @classmethod
    def parse(cls, value) -> "Case":
        if isinstance(value, Case):
            return value
        key = str(value).strip().lower()
        aliases = {"i": cls.HYPERBOLIC, "1": cls.HYPERBOLIC, "hyperbolic": cls.HYPERBOLIC,
                   "ii": cls.ELLIPTIC, "2": cls.ELLIPTIC, "elliptic": cls.ELLIPTIC,
                   "iii": cls.PARABOLIC, "3": cls.PARABOLIC, "parabolic": cls.PARABOLIC}
        if key not in aliases:
            raise InvalidParams(f"unknown case {value!r}; expected i, ii or iii")
        return aliases[key]


@dataclass(frozen=True)
class PrincipalParams:
    """Case tag, μ and A0..A4 of one Principal equation."""

    case: Case
    A0: float
    A1: float
    A2: float
    A3: float
    A4: float
    mu: float | None = None

    def __post_init__(self):
        case = Case.parse(self.case)
        object.__setattr__(self, "case", case)
        for name in ("A0", "A1", "A2", "A3", "A4"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidParams(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if case is Case.PARABOLIC:
            object.__setattr__(self, "mu", None)
        else:
            if self.mu is None:
                raise InvalidParams(f"mu required for case {case.value}")
            mu = float(self.mu)
            if not (mu > 0 and math.isfinite(mu)):
                raise InvalidParams(f"mu must be positive for case {case.value}, got {self.mu!r}")
            object.__setattr__(self, "mu", mu)
        if self.A0 == 0 and self.A1 == 0 and self.A2 == 0:
            raise InvalidParams("A0, A1 and A2 all vanish: the left-hand side is identically zero")
        if self.A0 == 0 and self.A1 == 0 and self.A3 == 0 and self.A4 == 0:
            raise InvalidParams("A0 = A1 = A3 = A4 = 0 forces h_x = 0 (degenerate metric)")

    @classmethod
    def from_list(cls, case, A: Sequence[float], mu=None) -> "PrincipalParams":
        if len(A) != 5:
            raise InvalidParams(f"expected five coefficients A0..A4, got {len(A)}")
        return cls(case, *A, mu=mu)

    @property
    def A(self) -> tuple:
        return (self.A0, self.A1, self.A2, self.A3, self.A4)

    @property
    def lambda_vanishes(self) -> bool:
        """True when Λ ≡ 0, which only admits constant-curvature profiles."""
        return self.A3 == 0 and self.A4 == 0

    def with_changes(self, **changes) -> "PrincipalParams":
        data = {"case": self.case, "mu": self.mu, **dict(zip(("A0", "A1", "A2", "A3", "A4"), self.A))}
        data.update(changes)
        return PrincipalParams(**data)

    # right-hand side and its x-derivatives
    def rhs(self, x: float) -> float:
        mu, A3, A4 = self.mu, self.A3, self.A4
        if self.case is Case.HYPERBOLIC:
            return A3 * math.sin(mu * x) / mu + A4 * math.cos(mu * x)
        if self.case is Case.ELLIPTIC:
            return A3 * math.sinh(mu * x) / mu + A4 * math.cosh(mu * x)
        return A3 * x + A4

    def rhs_d1(self, x: float) -> float:
        mu, A3, A4 = self.mu, self.A3, self.A4
        if self.case is Case.HYPERBOLIC:
            return A3 * math.cos(mu * x) - A4 * mu * math.sin(mu * x)
        if self.case is Case.ELLIPTIC:
            return A3 * math.cosh(mu * x) + A4 * mu * math.sinh(mu * x)
        return A3

    def rhs_d2(self, x: float) -> float:
        if self.case is Case.HYPERBOLIC:
            return -self.mu**2 * self.rhs(x)
        if self.case is Case.ELLIPTIC:
            return self.mu**2 * self.rhs(x)
        return 0.0

    # the coefficient q(h) of λ and its h-derivatives
    def _sigma(self) -> float:
        if self.case is Case.HYPERBOLIC:
            return self.mu**2
        if self.case is Case.ELLIPTIC:
            return -self.mu**2
        return 0.0

    def q(self, h: float) -> float:
        return self._sigma() * self.A0 * h * h - self.A1 * h + self.A2

    def q_h(self, h: float) -> float:
        return 2.0 * self._sigma() * self.A0 * h - self.A1

    def q_hh(self) -> float:
        return 2.0 * self._sigma() * self.A0

    def to_dict(self) -> dict:
        return {"case": self.case.value, "mu": self.mu, "A": list(self.A)}

    @classmethod
    def from_dict(cls, data: dict) -> "PrincipalParams":
        return cls.from_list(data["case"], data["A"], mu=data.get("mu"))


class Root(NamedTuple):
    value: float
    multiplicity: int


def rhs_lambda(params: PrincipalParams, x: float) -> float:
    return params.rhs(x)


def residual(params: PrincipalParams, x: float, h: float, hx: float) -> float:
    """LHS − RHS of the Principal equation."""
    return hx * (params.A0 * hx * hx + params.q(h)) - params.rhs(x)


def residual_scale(params: PrincipalParams, x: float, h: float, hx: float) -> float:
    """1 plus the summed magnitudes of the terms of the Principal equation."""
    a = abs(hx)
    return (1.0 + abs(params.A0) * a**3 + abs(params._sigma() * params.A0) * h * h * a
            + abs(params.A1 * h) * a + abs(params.A2) * a + abs(params.rhs(x)))


def _scale(params, x, h, hx) -> float:
    return 1.0 + abs(h) + abs(hx) + abs(params.rhs(x))


def _polish(a, q, lam, root, iterations=3):
    for _ in range(iterations):
        d = 3.0 * a * root * root + q
        if d == 0.0:
            break
        step = (a * root**3 + q * root - lam) / d
        root -= step
        if abs(step) <= 1e-16 * (1.0 + abs(root)):
            break
    return root


def _cubic_roots(a, q, lam):
    """Real roots of a·λ³ + q·λ − lam = 0 (a ≠ 0) with multiplicities."""
    p = q / a
    r = -lam / a
    disc = 4.0 * p**3 + 27.0 * r * r  # negative ⇔ three distinct real roots
    size = 4.0 * abs(p) ** 3 + 27.0 * r * r
    if size == 0.0:
        return [Root(0.0, 3)]
    if abs(disc) <= _MULT_TOL * size:
        if p == 0.0 or abs(p) ** 3 <= _MULT_TOL * size:
            return [Root(-math.copysign(abs(r) ** (1.0 / 3.0), r), 3)]
        double = -1.5 * r / p
        single = 3.0 * r / p
        roots = [Root(double, 2), Root(_polish(a, q, lam, single), 1)]
        return sorted(roots)
    if disc < 0.0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * r / (p * m)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        vals = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
        return sorted(Root(_polish(a, q, lam, v), 1) for v in vals)
    s = math.sqrt(r * r / 4.0 + p**3 / 27.0)
    w = -r / 2.0 - math.copysign(s, r) if r != 0.0 else s
    u = math.copysign(abs(w) ** (1.0 / 3.0), w)
    val = u - p / (3.0 * u) if u != 0.0 else 0.0
    return [Root(_polish(a, q, lam, val), 1)]


def hx_candidates(params: PrincipalParams, x: float, h: float) -> list[Root]:
    """All real roots λ of the Principal equation at (x, h), ascending."""
    q = params.q(h)
    lam = params.rhs(x)
    if params.A0 == 0.0:
        if q == 0.0:
            if lam == 0.0:
                raise NoRoot("A0 = 0 and q = Λ = 0: h_x is undetermined")
            raise NoRoot("A0 = 0 and q = 0 but Λ ≠ 0: no root")
        return [Root(lam / q, 1)]
    return _cubic_roots(params.A0, q, lam)


def implicit_derivatives(params: PrincipalParams, x: float, h: float, hx: float,
                         eps_D: float = EPS_D) -> tuple[float, float]:
    """h_xx and h_xxx from the once- and twice-differentiated equation."""
    D = 3.0 * params.A0 * hx * hx + params.q(h)
    if abs(D) <= eps_D * _scale(params, x, h, hx):
        raise SingularBranch(f"D = {D:.3e} at x = {x!r}: tracked root is (nearly) multiple")
    qh = params.q_h(h)
    hxx = (params.rhs_d1(x) - hx * hx * qh) / D
    hxxx = (params.rhs_d2(x) - 6.0 * params.A0 * hx * hxx * hxx
            - 3.0 * qh * hx * hxx - params.q_hh() * hx**3) / D
    return hxx, hxxx


# root selectors

@dataclass(frozen=True)
class Index:
    k: int

    def choose(self, roots):
        if not -len(roots) <= self.k < len(roots):
            raise NoRootAtStart(f"root index {self.k} out of range for {len(roots)} real roots")
        return roots[self.k]

    def __str__(self):
        return f"index:{self.k}"


@dataclass(frozen=True)
class NearestTo:
    value: float

    def choose(self, roots):
        if not roots:
            raise NoRootAtStart("no real root at the initial point")
        return min(roots, key=lambda r: abs(r.value - self.value))

    def __str__(self):
        return f"nearest:{self.value!r}"


@dataclass(frozen=True)
class UniquePositive:
    def choose(self, roots):
        pos = [r for r in roots if r.value > 0]
        if len(pos) != 1 or pos[0].multiplicity != 1:
            raise RootNotUnique(f"expected exactly one simple positive root, found {[tuple(r) for r in pos]}")
        return pos[0]

    def __str__(self):
        return "positive"


def parse_root_selector(text: str):
    """Parse ``nearest:<v>``, ``positive`` or ``index:<k>``."""
    text = text.strip().lower()
    if text in ("positive", "unique-positive", "uniquepositive"):
        return UniquePositive()
    kind, _, arg = text.partition(":")
    try:
        if kind == "nearest":
            return NearestTo(float(arg))
        if kind == "index":
            return Index(int(arg))
    except ValueError:
        pass
    raise ValueError(f"bad root selector {text!r}; use nearest:<v>, positive or index:<k>")


# profiles

@dataclass(frozen=True, eq=False)
class HProfile:
    """A solved profile: nodes with h and three derivatives, plus an interpolant."""

    params: PrincipalParams
    grid: np.ndarray
    h: np.ndarray
    hx: np.ndarray
    hxx: np.ndarray
    hxxx: np.ndarray
    root_branch: dict = field(default_factory=dict)
    truncation_flags: dict = field(default_factory=lambda: {"left": None, "right": None})

    def __post_init__(self):
        arrays = {}
        for name in ("grid", "h", "hx", "hxx", "hxxx"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        n = arrays["grid"].size
        if any(a.shape != (n,) for a in arrays.values()):
            raise ValueError("profile arrays must share the grid's shape")
        object.__setattr__(self, "interpolant",
                           SepticHermite(self.grid, self.h, self.hx, self.hxx, self.hxxx))

    @property
    def x_range(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def truncated(self) -> bool:
        return any(v is not None for v in self.truncation_flags.values())

    def contains(self, x) -> bool:
        return self.interpolant.contains(x)

    def at(self, x, project: bool = True):
        """(h, h_x, h_xx, h_xxx) at x.

        With ``project`` the interpolated h_x is pulled back onto the cubic
        constraint and h_xx, h_xxx come from the implicit derivatives. The raw
        septic interpolant amplifies nodal noise in its third derivative by
        the cube of the inverse cell width; the projected state does not.
        """
        return self.state(x, project=project)

    def state(self, x: float, project: bool = True, extrapolate: float = 0.0):
        """Scalar fast path of ``at``; may reach ``extrapolate`` cells past the range."""
        h, hx, hxx, hxxx = self.interpolant(x, extrapolate)
        if not project:
            return h, hx, hxx, hxxx
        p = self.params
        q = p.q(h)
        lam = p.rhs(x)
        if p.A0 == 0.0:
            hx = lam / q
        else:
            for _ in range(3):
                hx -= (hx * (p.A0 * hx * hx + q) - lam) / (3.0 * p.A0 * hx * hx + q)
        hxx, hxxx = implicit_derivatives(p, x, h, hx, eps_D=0.0)
        return h, hx, hxx, hxxx

    def evaluate(self, xs, project: bool = True):
        """Vectorized ``at``; returns four arrays shaped like xs."""
        h, hx, hxx, hxxx = self.interpolant.evaluate(xs)
        if not project:
            return h, hx, hxx, hxxx
        p = self.params
        xs = np.asarray(xs, dtype=float)
        lam = _rhs_array(p, xs)
        sig = p._sigma()
        q = sig * p.A0 * h * h - p.A1 * h + p.A2
        if p.A0 == 0.0:
            hx = lam / q
        else:
            for _ in range(3):
                hx = hx - (hx * (p.A0 * hx * hx + q) - lam) / (3.0 * p.A0 * hx * hx + q)
        D = 3.0 * p.A0 * hx * hx + q
        qh = 2.0 * sig * p.A0 * h - p.A1
        hxx = (_rhs_array(p, xs, 1) - hx * hx * qh) / D
        hxxx = (_rhs_array(p, xs, 2) - 6.0 * p.A0 * hx * hxx * hxx
                - 3.0 * qh * hx * hxx - p.q_hh() * hx**3) / D
        return h, hx, hxx, hxxx

    def residuals(self) -> np.ndarray:
        p = self.params
        lam = _rhs_array(p, self.grid)
        sig = p._sigma()
        q = sig * p.A0 * self.h**2 - p.A1 * self.h + p.A2
        return self.hx * (p.A0 * self.hx**2 + q) - lam

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid": self.grid.tolist(),
            "h": self.h.tolist(),
            "hx": self.hx.tolist(),
            "hxx": self.hxx.tolist(),
            "hxxx": self.hxxx.tolist(),
            "truncation_flags": self.truncation_flags,
            "root_branch": self.root_branch,
        }

    def to_json(self, **extra) -> str:
        data = self.to_dict()
        data.update(extra)
        return json.dumps(data)

    @classmethod
    def from_dict(cls, data: dict) -> "HProfile":
        return cls(
            params=PrincipalParams.from_dict(data["params"]),
            grid=data["grid"], h=data["h"], hx=data["hx"],
            hxx=data["hxx"], hxxx=data["hxxx"],
            root_branch=data.get("root_branch", {}),
            truncation_flags=data.get("truncation_flags", {"left": None, "right": None}),
        )

    @classmethod
    def from_json(cls, text: str) -> "HProfile":
        return cls.from_dict(json.loads(text))


def _rhs_array(params: PrincipalParams, xs, order: int = 0):
    """Λ and its first two derivatives on an array."""
    mu, A3, A4 = params.mu, params.A3, params.A4
    xs = np.asarray(xs, dtype=float)
    if params.case is Case.PARABOLIC:
        return [A3 * xs + A4, np.full_like(xs, A3), np.zeros_like(xs)][order]
    if params.case is Case.HYPERBOLIC:
        s, c, sign = np.sin(mu * xs), np.cos(mu * xs), -1.0
    else:
        s, c, sign = np.sinh(mu * xs), np.cosh(mu * xs), 1.0
    base = A3 * s / mu + A4 * c
    if order == 0:
        return base
    if order == 1:
        return A3 * c + sign * A4 * mu * s
    return sign * mu * mu * base


class _Lost(Exception):
    pass


class _Branch:
    """Nearest-root continuation of one root of the cubic along x."""

    def __init__(self, params, x, h, lam):
        self.p = params
        self.reset(x, h, lam)

    def reset(self, x, h, lam):
        self.x = x
        self.lam = lam
        p = self.p
        D = 3.0 * p.A0 * lam * lam + p.q(h)
        self.slope = (p.rhs_d1(x) - lam * lam * p.q_h(h)) / D if D != 0.0 else 0.0

    def solve(self, x, h):
        p = self.p
        a = p.A0
        q = p.q(h)
        lam_rhs = p.rhs(x)
        guess = self.lam + self.slope * (x - self.x)
        if a == 0.0:
            if q == 0.0:
                raise _Lost("linear coefficient vanished")
            return lam_rhs / q
        root = guess
        for _ in range(40):
            d = 3.0 * a * root * root + q
            if d == 0.0:
                raise _Lost("zero derivative in Newton iteration")
            step = (a * root**3 + q * root - lam_rhs) / d
            root -= step
            if abs(step) <= 4e-16 * (1.0 + abs(root)):
                break
        else:
            raise _Lost("Newton iteration did not converge")
        # the remaining roots solve a·λ² + a·r·λ + (a·r² + q) = 0
        disc = -3.0 * root * root - 4.0 * q / a
        if disc > 0.0:
            sq = math.sqrt(disc)
            for other in ((-root + sq) / 2.0, (-root - sq) / 2.0):
                if abs(other - guess) < abs(root - guess):
                    raise _Lost("continuation would switch branches")
        return root


def _integrate_side(params, branch, x0, h0, lam0, nodes, x_end, rtol, atol, eps_D):
    """Integrate from x0 towards x_end, returning node values and a stop record."""
    out = []
    if not nodes:
        return out, None
    sign0 = math.copysign(1.0, lam0)
    pending = list(nodes)

    def fun(x, y):
        try:
            return np.array([branch.solve(x, y[0])])
        except _Lost:
            return np.array([np.nan])

    # a node sitting exactly on x0 takes the initial data verbatim
    while pending and pending[0] == x0:
        out.append((x0, h0, lam0))
        pending.pop(0)
    if not pending:
        return out, None
    solver = DOP853(fun, x0, np.array([h0]), x_end, rtol=rtol, atol=atol)
    direction = 1.0 if x_end > x0 else -1.0
    stop = None
    while pending:
        message = solver.step()
        if solver.status == "failed":
            x_last, h_last = solver.t, solver.y[0]
            D = 3.0 * params.A0 * branch.lam**2 + params.q(h_last)
            rel = abs(D) / _scale(params, x_last, h_last, branch.lam)
            reason = "RootCollision" if rel < 1e-3 else "StepFailure"
            stop = {"reason": reason, "x_stop": float(x_last), "message": str(message)}
            break
        x_new, h_new = solver.t, solver.y[0]
        try:
            lam_new = branch.solve(x_new, h_new)
        except _Lost as exc:
            stop = {"reason": "RootCollision", "x_stop": float(solver.t_old), "message": str(exc)}
            break
        dense = solver.dense_output()
        while pending and direction * (pending[0] - x_new) <= 0:
            xn = pending.pop(0)
            hn = float(dense(xn)[0])
            try:
                lam_n = branch.solve(xn, hn)
            except _Lost as exc:
                stop = {"reason": "RootCollision", "x_stop": float(xn), "message": str(exc)}
                pending.clear()
                break
            if lam_n == 0.0 or math.copysign(1.0, lam_n) != sign0:
                stop = {"reason": "MetricDegenerate", "x_stop": float(xn),
                        "message": "h_x changes sign"}
                pending.clear()
                break
            Dn = 3.0 * params.A0 * lam_n**2 + params.q(hn)
            if abs(Dn) <= eps_D * _scale(params, xn, hn, lam_n):
                stop = {"reason": "RootCollision", "x_stop": float(xn),
                        "message": "tracked root became multiple"}
                pending.clear()
                break
            out.append((xn, hn, lam_n))
        if stop is not None:
            break
        if lam_new == 0.0 or math.copysign(1.0, lam_new) != sign0:
            stop = {"reason": "MetricDegenerate", "x_stop": float(x_new), "message": "h_x changes sign"}
            break
        D = 3.0 * params.A0 * lam_new**2 + params.q(h_new)
        if abs(D) <= eps_D * _scale(params, x_new, h_new, lam_new):
            stop = {"reason": "RootCollision", "x_stop": float(x_new),
                    "message": "tracked root became multiple"}
            break
        branch.reset(x_new, h_new, lam_new)
        if solver.status == "finished":
            break
    return out, stop


def solve_profile(params: PrincipalParams, x0: float, h0: float, root_selector,
                  x_range: tuple[float, float], n: int = 401, tol: float = RTOL, *,
                  atol: float = ATOL, tol_alg: float = TOL_ALG, eps_D: float = EPS_D,
                  strict: bool = False) -> HProfile:
    """Integrate h' = λ(x, h) from (x0, h0) over a uniform grid of n nodes.

    The root of the cubic at x0 is chosen by ``root_selector`` and then
    followed by nearest-root continuation. Integration runs outward in both
    directions. If a root collision or a zero of h_x is met the profile is
    truncated at the last good node and the side is flagged in
    ``truncation_flags`` (or the matching error is raised when ``strict``).
    """
    a, b = (float(v) for v in x_range)
    if not a < b:
        raise ValueError(f"empty range [{a}, {b}]")
    if not a <= x0 <= b:
        raise ValueError(f"x0={x0} outside the range [{a}, {b}]")
    if n < 2:
        raise ValueError("need at least two grid nodes")
    x0, h0 = float(x0), float(h0)
    try:
        roots = hx_candidates(params, x0, h0)
    except NoRoot as exc:
        raise NoRootAtStart(str(exc)) from exc
    if not roots:
        raise NoRootAtStart("no real root at the initial point")
    chosen = root_selector.choose(roots)
    if chosen.multiplicity != 1:
        raise RootCollision(f"selected root {chosen.value!r} has multiplicity {chosen.multiplicity}")
    lam0 = chosen.value
    if lam0 == 0.0:
        raise MetricDegenerate("selected root h_x(x0) = 0")
    D0 = 3.0 * params.A0 * lam0 * lam0 + params.q(h0)
    if abs(D0) <= eps_D * _scale(params, x0, h0, lam0):
        raise RootCollision("selected root is numerically multiple")

    grid = np.linspace(a, b, n)
    right_nodes = [float(v) for v in grid if v >= x0]
    left_nodes = [float(v) for v in grid[::-1] if v < x0]
    flags = {"left": None, "right": None}
    right, flags["right"] = _integrate_side(params, _Branch(params, x0, h0, lam0), x0, h0, lam0,
                                            right_nodes, b, tol, atol, eps_D)
    left, flags["left"] = _integrate_side(params, _Branch(params, x0, h0, lam0), x0, h0, lam0,
                                          left_nodes, a, tol, atol, eps_D)
    rows = left[::-1] + right
    if len(rows) < 2:
        reason = flags["right"] or flags["left"] or {"reason": "StepFailure"}
        exc = MetricDegenerate if reason["reason"] == "MetricDegenerate" else RootCollision
        raise exc(f"profile could not be continued from x0: {reason}")
    if strict:
        for side in ("left", "right"):
            if flags[side] is not None:
                exc = MetricDegenerate if flags[side]["reason"] == "MetricDegenerate" else RootCollision
                raise exc(f"{side} side stopped: {flags[side]}")
    xs = np.array([r[0] for r in rows])
    hs = np.array([r[1] for r in rows])
    hxs = np.array([r[2] for r in rows])
    hxx = np.empty_like(xs)
    hxxx = np.empty_like(xs)
    for i, (x, h, lam) in enumerate(rows):
        hxx[i], hxxx[i] = implicit_derivatives(params, x, h, lam, eps_D=0.0)
        res = residual(params, x, h, lam)
        if abs(res) > tol_alg * residual_scale(params, x, h, lam):
            raise SingularBranch(f"constraint residual {res:.3e} at x={x!r} exceeds tol_alg")
    branch = {
        "x0": x0, "h0": h0, "selector": str(root_selector),
        "value": lam0, "index": roots.index(chosen),
        "candidates": [[r.value, r.multiplicity] for r in roots],
    }
    return HProfile(params, xs, hs, hxs, hxx, hxxx, root_branch=branch, truncation_flags=flags)
