"""Vocal-tract area function built from sampled data.

A monotone piecewise cubic Hermite interpolant (PCHIP) turns the sampled
areas into a C1 function that never overshoots the local data range, so
constrictions stay constrictions and the area stays positive. Endpoint
slopes follow the standard one-sided three-point shape-preserving rule of
that scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator


@dataclass
class AreaFunction:
    """Smooth cross-sectional area A(x) over [0, l] and circumference S(x).

    x_knots / A_knots are the input samples; slopes holds the interpolant's
    derivative at the knots (the Hermite data on each interval).
    """

    x_knots: np.ndarray
    A_knots: np.ndarray
    slopes: np.ndarray
    l: float
    _poly: PchipInterpolator = field(repr=False, default=None)
    _dpoly: PchipInterpolator = field(repr=False, default=None)

    def area(self, x):
        """Interpolated area, m^2. x may be scalar or array, inside [0, l]."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > self.l):
            raise ValueError("position outside [0, l]")
        return self._poly(x)

    def darea(self, x):
        """dA/dx of the interpolant."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > self.l):
            raise ValueError("position outside [0, l]")
        return self._dpoly(x)

    @property
    def A_0(self):
        """Area at the glottis end."""
        return float(self.A_knots[0])

    @property
    def A_l(self):
        """Area at the open end."""
        return float(self.A_knots[-1])


def build_area_function(samples, l):
    """Interpolate (position, area) samples spanning [0, l].

    Requires at least two samples with strictly ascending positions, the
    first at 0 and the last at l, and strictly positive areas.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (position, area) samples")
    x, A = pts[:, 0], pts[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ValueError("sample positions must be strictly ascending")
    if abs(x[0]) > 1e-12 * l or abs(x[-1] - l) > 1e-12 * l:
        raise ValueError("samples must span [0, l] exactly")
    if np.any(A <= 0):
        raise ValueError("areas must be positive")
    x = x.copy()
    x[0], x[-1] = 0.0, l
    poly = PchipInterpolator(x, A, extrapolate=False)
    dpoly = poly.derivative()
    return AreaFunction(x, A.copy(), dpoly(x), float(l), poly, dpoly)


def eval_area(af: AreaFunction, x):
    """Area and circumference at x, assuming a circular cross-section."""
    A = af.area(x)
    return A, 2.0 * np.sqrt(np.pi * A)


def load_area_table(path):
    """Read a two-column (position m, area m^2) text file.

    Blank lines and '#' comments are ignored.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples")
    return np.asarray(rows, dtype=float)
