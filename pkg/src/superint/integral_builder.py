"""Cubic integrals L³, L·H, F1, F2 of a solved profile.

Every integral here is a polynomial in the momenta whose y-dependence is a
finite combination of modes closed under ∂/∂y (one exponential, a cos/sin
pair, or the monomials 1, y, y²). An element is stored as

    E(x, y, px, py) = Σ_m φ_m(y) · Σ_k C[m, k](x) · px^(n−k) py^k

together with the matrix M such that φ'(y) = M · φ(y). This makes ∂/∂y of
an element exact and lets the bracket check run mode by mode.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .principal_ode import Case, HProfile


class PhasePoint(NamedTuple):
    x: float
    y: float
    px: float
    py: float


# y-mode families: values φ(y) with shape (M, ...) and the closure matrix
def _modes_one(y):
    return np.ones((1,) + np.shape(y))


def _modes_exp(sign, mu):
    def modes(y):
        return np.exp(sign * mu * np.asarray(y, dtype=float))[None]
    return modes


def _modes_trig(mu):
    def modes(y):
        y = np.asarray(y, dtype=float)
        return np.stack([np.cos(mu * y), np.sin(mu * y)])
    return modes


def _modes_poly(y):
    y = np.asarray(y, dtype=float)
    return np.stack([np.ones_like(y), y, y * y])


_POLY_DY = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])


@dataclass(frozen=True, eq=False)
class BasisElement:
    """One phase-space polynomial integral in mode form.

    ``coef_fn(x)`` returns (C, C_x), both shaped (M, degree+1, *x.shape):
    the coefficient of px^(degree−k) py^k in mode m and its x-derivative.
    """

    name: str
    degree: int
    modes: Callable
    dy_matrix: np.ndarray
    coef_fn: Callable
    profile: HProfile = field(repr=False)

    def coefficients(self, x):
        return self.coef_fn(np.asarray(x, dtype=float))

    def evaluate(self, x, y, px, py):
        """Vectorized value at arrays of phase points."""
        x, y, px, py = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, px, py)))
        C, _ = self.coefficients(x)
        phi = self.modes(y)
        n = self.degree
        mono = np.stack([px ** (n - k) * py**k for k in range(n + 1)])
        return np.einsum("m...,mk...,k...->...", phi, C, mono)

    def __call__(self, P) -> float:
        return float(self.evaluate(P[0], P[1], P[2], P[3]))

    def term_magnitude(self, x, y, px, py):
        """Σ |φ_m · C[m, k] · monomial_k|: the size of the terms before cancellation."""
        x, y, px, py = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, px, py)))
        C, _ = self.coefficients(x)
        phi = self.modes(y)
        n = self.degree
        mono = np.stack([px ** (n - k) * py**k for k in range(n + 1)])
        return np.einsum("m...,mk...,k...->...", np.abs(phi), np.abs(C), np.abs(mono))

    def gradient(self, x, y, px, py):
        """Exact partial derivatives (∂x, ∂y, ∂px, ∂py) from the mode form."""
        x, y, px, py = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, px, py)))
        C, Cx = self.coefficients(x)
        phi = self.modes(y)
        dphi = np.einsum("ij,j...->i...", self.dy_matrix, phi)
        n = self.degree
        mono = np.stack([px ** (n - k) * py**k for k in range(n + 1)])
        dmono_px = np.stack([(n - k) * px ** max(n - k - 1, 0) * py**k for k in range(n + 1)])
        dmono_py = np.stack([k * px ** (n - k) * py ** max(k - 1, 0) for k in range(n + 1)])
        ein = "m...,mk...,k...->..."
        return (np.einsum(ein, phi, Cx, mono), np.einsum(ein, dphi, C, mono),
                np.einsum(ein, phi, C, dmono_px), np.einsum(ein, phi, C, dmono_py))

    def d_dy(self) -> "BasisElement":
        """The element ∂E/∂y, still in mode form with the same modes."""
        M = self.dy_matrix
        base = self.coef_fn

        def coef(x):
            C, Cx = base(x)
            return np.einsum("ji,j...->i...", M, C), np.einsum("ji,j...->i...", M, Cx)

        return BasisElement(f"d_dy({self.name})", self.degree, self.modes, M, coef, self.profile)

    def scaled(self, factor: float, name: str | None = None) -> "BasisElement":
        base = self.coef_fn

        def coef(x):
            C, Cx = base(x)
            return factor * C, factor * Cx

        return BasisElement(name or f"{factor}*{self.name}", self.degree, self.modes,
                            self.dy_matrix, coef, self.profile)


def _profile_state(profile: HProfile, x):
    h, hx, hxx, hxxx = profile.evaluate(x)
    return h, hx, hxx, hxxx


def _coeffs_and_dx(profile: HProfile, x, params=None):
    """(a0..a3) and their x-derivatives for the profile's case, shape (4, *x.shape).

    ``params`` substitutes the constants in the coefficient formulas while h
    and its derivatives still come from the profile.
    """
    p = profile.params if params is None else params
    x = np.asarray(x, dtype=float)
    h, hx, hxx, hxxx = _profile_state(profile, x)
    A0, A1, A2, A3, A4 = p.A
    sig = p._sigma()
    q = sig * A0 * h * h - A1 * h + A2
    qh = 2.0 * sig * A0 * h - A1
    D = 3.0 * A0 * hx * hx + q
    Dx = 6.0 * A0 * hx * hxx + qh * hx
    a0 = A0 * hx**3
    a0x = 3.0 * A0 * hx * hx * hxx
    a2 = 0.5 * D * hx
    a2x = 0.5 * (Dx * hx + D * hxx)
    if p.case is Case.PARABOLIC:
        a1 = -A0 * hx * hx * h
        a1x = -A0 * (2.0 * hx * hxx * h + hx**3)
        a3 = -0.25 * (4.0 * A0 * hx * hx * h + A3 * x * x + 2.0 * A4 * x)
        a3x = -0.25 * (4.0 * A0 * (2.0 * hx * hxx * h + hx**3) + 2.0 * A3 * x + 2.0 * A4)
    else:
        mu = p.mu
        # case i carries −μA0h, case ii +μA0h
        c1 = (-mu if p.case is Case.HYPERBOLIC else mu) * A0
        k = c1 * h + A1 / (2.0 * mu)
        a1 = k * hx * hx
        a1x = c1 * hx**3 + k * 2.0 * hx * hxx
        a3 = D * hxx / (2.0 * mu)
        a3x = (Dx * hxx + D * hxxx) / (2.0 * mu)
    return np.stack([a0, a1, a2, a3]), np.stack([a0x, a1x, a2x, a3x]), (h, hx, hxx)


def coeffs(profile: HProfile, x: float) -> tuple[float, float, float, float]:
    """(a0, a1, a2, a3) at x for the profile's case."""
    if not profile.contains(x):
        profile.at(x)  # raises OutOfRange
    a, _, _ = _coeffs_and_dx(profile, np.asarray([x], dtype=float))
    return tuple(float(v[0]) for v in a)


def coeffs_dx(profile: HProfile, x: float) -> tuple[float, float, float, float]:
    _, ax, _ = _coeffs_and_dx(profile, np.asarray([x], dtype=float))
    return tuple(float(v[0]) for v in ax)


@dataclass(frozen=True, eq=False)
class CubicIntegralBasis:
    profile: HProfile
    elements: tuple
    params: object = None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.elements)

    def __getitem__(self, key):
        if isinstance(key, str):
            for e in self.elements:
                if e.name == key:
                    return e
            raise KeyError(key)
        return self.elements[key]

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)

    @property
    def Lcubed(self):
        return self.elements[0]

    @property
    def LH(self):
        return self.elements[1]

    @property
    def F1(self):
        return self.elements[2]

    @property
    def F2(self):
        return self.elements[3]

    def coeffs(self, x):
        return coeffs(self.profile, x)

    def evaluate_all(self, x, y, px, py) -> np.ndarray:
        """Values of the four elements, shape (4, *broadcast shape)."""
        return np.stack([e.evaluate(x, y, px, py) for e in self.elements])

    def metadata(self) -> dict:
        p = self.params or self.profile.params
        if p.case is Case.HYPERBOLIC:
            constants = {"F1": {"C_plus": 1.0, "C_minus": 0.0}, "F2": {"C_plus": 0.0, "C_minus": 1.0}}
        elif p.case is Case.ELLIPTIC:
            constants = {"F1": {"C_e": 1.0, "phi0": 0.0}, "F2": {"C_e": 1.0, "phi0": -math.pi / 2}}
        else:
            constants = {"F1": {"C1": 1.0, "C2": 0.0}, "F2": {"C1": 0.0, "C2": 1.0}}
        return {"case": p.case.value, "params": p.to_dict(), "elements": list(self.names),
                "constants": constants, "x_range": list(self.profile.x_range)}

    def to_json(self) -> str:
        return json.dumps(self.metadata())

    def coefficient_table(self, xs=None) -> str:
        """CSV text with columns x, a0, a1, a2, a3."""
        xs = self.profile.grid if xs is None else np.asarray(xs, dtype=float)
        a, _, _ = _coeffs_and_dx(self.profile, xs)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "a0", "a1", "a2", "a3"])
        for i, x in enumerate(xs):
            writer.writerow([repr(float(x))] + [repr(float(a[k][i])) for k in range(4)])
        return buf.getvalue()


def _zeros_like_modes(M, x, degree=3):
    return np.zeros((M, degree + 1) + np.shape(x))


def build_basis(profile: HProfile, params=None) -> CubicIntegralBasis:
    """The basis [Lcubed, LH, F1, F2] for the profile's case.

    ``params`` overrides the constants used in the coefficients (the profile
    is unchanged); with mismatched constants F1, F2 are no longer integrals.
    """
    p = profile.params if params is None else params
    one = np.zeros((1, 1))

    def lcubed(x):
        C = _zeros_like_modes(1, x)
        C[0, 3] = 1.0
        return C, np.zeros_like(C)

    def lh(x):
        _, hx, hxx, _ = _profile_state(profile, x)
        C = _zeros_like_modes(1, x)
        Cx = np.zeros_like(C)
        C[0, 1] = C[0, 3] = 0.5 * hx * hx
        Cx[0, 1] = Cx[0, 3] = hx * hxx
        return C, Cx

    elements = [BasisElement("Lcubed", 3, _modes_one, one, lcubed, profile),
                BasisElement("LH", 3, _modes_one, one, lh, profile)]

    if p.case is Case.HYPERBOLIC:
        mu = p.mu

        def exp_coef(sign):
            def coef(x):
                a, ax, _ = _coeffs_and_dx(profile, x, p)
                s = np.array([1.0, sign, 1.0, sign]).reshape((4,) + (1,) * np.ndim(x))
                return (s * a)[None], (s * ax)[None]
            return coef

        elements += [BasisElement("F1", 3, _modes_exp(1.0, mu), np.array([[mu]]), exp_coef(1.0), profile),
                     BasisElement("F2", 3, _modes_exp(-1.0, mu), np.array([[-mu]]), exp_coef(-1.0), profile)]
    elif p.case is Case.ELLIPTIC:
        mu = p.mu
        rot = np.array([[0.0, -mu], [mu, 0.0]])

        def trig_coef(phase):
            # phase 0: cos·(a0,·,a2,·) + sin·(·,a1,·,a3); phase −π/2 rotates the pair
            def coef(x):
                a, ax, _ = _coeffs_and_dx(profile, x, p)
                out = []
                for arr in (a, ax):
                    even = np.stack([arr[0], 0 * arr[0], arr[2], 0 * arr[0]])
                    odd = np.stack([0 * arr[0], arr[1], 0 * arr[0], arr[3]])
                    out.append(np.stack([even, odd]) if phase == 0 else np.stack([-odd, even]))
                return tuple(out)
            return coef

        elements += [BasisElement("F1", 3, _modes_trig(mu), rot, trig_coef(0), profile),
                     BasisElement("F2", 3, _modes_trig(mu), rot, trig_coef(1), profile)]
    else:
        A1, A3 = p.A1, p.A3

        def poly_coef(which):
            def coef(x):
                a, ax, (h, hx, hxx) = _coeffs_and_dx(profile, x, p)
                z = np.zeros_like(a[0])
                b1, b1x = 0.5 * A1 * hx * hx, A1 * hx * hxx
                b3, b3x = 0.5 * (A1 * hx * hx + A3), A1 * hx * hxx
                if which == 1:
                    C = np.stack([np.stack([a[0], z, a[2], z]),
                                  np.stack([z, b1, z, b3]),
                                  np.stack([z, z, z, z])])
                    Cx = np.stack([np.stack([ax[0], z, ax[2], z]),
                                   np.stack([z, b1x, z, b3x]),
                                   np.stack([z, z, z, z])])
                else:
                    C = np.stack([np.stack([z, a[1], z, a[3]]),
                                  np.stack([a[0], z, a[2], z]),
                                  np.stack([z, 0.5 * b1, z, 0.5 * b3])])
                    Cx = np.stack([np.stack([z, ax[1], z, ax[3]]),
                                   np.stack([ax[0], z, ax[2], z]),
                                   np.stack([z, 0.5 * b1x, z, 0.5 * b3x])])
                return C, Cx
            return coef

        elements += [BasisElement("F1", 3, _modes_poly, _POLY_DY, poly_coef(1), profile),
                     BasisElement("F2", 3, _modes_poly, _POLY_DY, poly_coef(2), profile)]
    return CubicIntegralBasis(profile, tuple(elements), p)


def eval(element: BasisElement, P) -> float:  # noqa: A001 - mirrors the operation name
    """Value of one basis element at a phase point."""
    return element(P)


def darboux_factorization(basis: CubicIntegralBasis, profile: HProfile | None = None):
    """Q = F1/py as a quadratic integral when A0 = 0, else None.

    With A0 = 0 the px³ coefficient vanishes identically, so every monomial
    of F1 carries a factor py; Q is built from the remaining coefficients and
    never divides by py.
    """
    profile = basis.profile if profile is None else profile
    if profile.params.A0 != 0.0:
        return None
    F1 = basis.F1

    def coef(x):
        C, Cx = F1.coef_fn(x)
        return C[:, 1:], Cx[:, 1:]

    return BasisElement("Q", 2, F1.modes, F1.dy_matrix, coef, profile)


@dataclass(frozen=True)
class Decomposition:
    coefficients: dict
    residual_rms: float
    relative_residual: float
    rank: int


def decompose(basis: CubicIntegralBasis, func: Callable, points) -> Decomposition:
    """Least-squares fit of a phase-space function onto the four basis elements."""
    pts = np.asarray(points, dtype=float)
    values = np.array([func(PhasePoint(*row)) for row in pts])
    A = basis.evaluate_all(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]).T
    sol, _, rank, _ = np.linalg.lstsq(A, values, rcond=None)
    res = values - A @ sol
    rms = float(np.sqrt(np.mean(res**2)))
    return Decomposition(dict(zip(basis.names, map(float, sol))), rms,
                         rms / (float(np.sqrt(np.mean(values**2))) + 1e-300), int(rank))
