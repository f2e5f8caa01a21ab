"""Piecewise septic Hermite interpolation from values and three derivatives."""
from __future__ import annotations

import bisect

import numpy as np

from .errors import OutOfRange

# end conditions p(1), p'(1), p''(1), p'''(1) for the s^4..s^7 coefficients
_END = np.array([[1.0, 1.0, 1.0, 1.0],
                 [4.0, 5.0, 6.0, 7.0],
                 [12.0, 20.0, 30.0, 42.0],
                 [24.0, 60.0, 120.0, 210.0]])


class SepticHermite:
    """C³ piecewise polynomial matching y, y', y'', y''' at every node.

    Evaluation returns the value and the first three derivatives. The
    interpolation error on a cell of width d is O(d^8) for the value.
    """

    order = 7

    def __init__(self, x, y0, y1, y2, y3, slack=1e-12):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be a strictly increasing 1-D array of length >= 2")
        y0, y1, y2, y3 = (np.asarray(v, dtype=float) for v in (y0, y1, y2, y3))
        d = np.diff(x)
        c0 = y0[:-1]
        c1 = d * y1[:-1]
        c2 = d**2 * y2[:-1] / 2.0
        c3 = d**3 * y3[:-1] / 6.0
        rhs = np.vstack([
            y0[1:] - (c0 + c1 + c2 + c3),
            d * y1[1:] - (c1 + 2.0 * c2 + 3.0 * c3),
            d**2 * y2[1:] - (2.0 * c2 + 6.0 * c3),
            d**3 * y3[1:] - 6.0 * c3,
        ])
        high = np.linalg.solve(_END, rhs)
        self.coef = np.vstack([c0, c1, c2, c3, high]).T  # (cells, 8)
        self.x = x
        self.width = d
        self.lo = float(x[0])
        self.hi = float(x[-1])
        self._slack = slack * (self.hi - self.lo)
        self._xs = x.tolist()
        self._rows = [tuple(r) for r in self.coef[:, ::-1].tolist()]
        self._inv = [(1.0 / w, 1.0 / w**2, 1.0 / w**3) for w in d.tolist()]

    def contains(self, x) -> bool:
        return self.lo - self._slack <= x <= self.hi + self._slack

    def _cell(self, x):
        if not self.contains(x):
            raise OutOfRange(f"x={x!r} outside [{self.lo!r}, {self.hi!r}]")
        i = bisect.bisect_right(self._xs, x) - 1
        return min(max(i, 0), len(self._rows) - 1)

    def __call__(self, x, extrapolate: float = 0.0):
        """Return (y, y', y'', y''') at a scalar x.

        ``extrapolate`` admits points up to that many edge-cell widths outside
        the node range, evaluated from the edge cell's polynomial.
        """
        x = float(x)
        if extrapolate and not self.contains(x):
            if not (self.lo - extrapolate * self.width[0] <= x <= self.hi + extrapolate * self.width[-1]):
                raise OutOfRange(f"x={x!r} more than {extrapolate} cells outside [{self.lo!r}, {self.hi!r}]")
            i = 0 if x < self.lo else len(self._rows) - 1
        else:
            i = self._cell(x)
        inv1, inv2, inv3 = self._inv[i]
        s = (x - self._xs[i]) * inv1
        row = self._rows[i]
        p = row[0]
        d1 = d2 = d3 = 0.0
        for c in row[1:]:
            d3 = d3 * s + d2
            d2 = d2 * s + d1
            d1 = d1 * s + p
            p = p * s + c
        return p, d1 * inv1, 2.0 * d2 * inv2, 6.0 * d3 * inv3

    def evaluate(self, xs):
        """Vectorized evaluation; returns four arrays shaped like xs."""
        xs = np.asarray(xs, dtype=float)
        flat = xs.ravel()
        if flat.size and (flat.min() < self.lo - self._slack or flat.max() > self.hi + self._slack):
            raise OutOfRange(f"points outside [{self.lo!r}, {self.hi!r}]")
        idx = np.clip(np.searchsorted(self.x, flat, side="right") - 1, 0, len(self.width) - 1)
        w = self.width[idx]
        s = (flat - self.x[idx]) / w
        c = self.coef[idx]
        p = c[:, 7].copy()
        d1 = np.zeros_like(p)
        d2 = np.zeros_like(p)
        d3 = np.zeros_like(p)
        for k in range(6, -1, -1):
            d3 = d3 * s + d2
            d2 = d2 * s + d1
            d1 = d1 * s + p
            p = p * s + c[:, k]
        out = (p, d1 / w, 2.0 * d2 / w**2, 6.0 * d3 / w**3)
        return tuple(o.reshape(xs.shape) for o in out)
