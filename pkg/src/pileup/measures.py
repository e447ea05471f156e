"""Empirical measures, the discrete density estimate, CDFs and W1 distances."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class DuplicatePositionError(ZeroDivisionError):
    """Two walls share a position, so the local spacing vanishes."""


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Atoms with equal weight 1/n."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("need at least one atom")
        if np.any(np.diff(a) < 0):
            raise ValueError("atoms must be sorted")
        object.__setattr__(self, "atoms", a)

    @property
    def n(self) -> int:
        return self.atoms.size

    @property
    def weight(self) -> float:
        return 1.0 / self.atoms.size

    def mass(self) -> float:
        return self.n * self.weight

    def mean(self) -> float:
        return float(np.mean(self.atoms))

    def cdf(self, x):
        """Right-continuous CDF."""
        return np.searchsorted(self.atoms, np.asarray(x, dtype=float), side="right") / self.n


def empirical_from_config(x) -> EmpiricalMeasure:
    """Empirical measure of x_1..x_n; the pinned wall at 0 is not an atom."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0 or x[0] < 0 or np.any(np.diff(x) < 0):
        raise ValueError("configuration must be a sorted nonnegative vector")
    return EmpiricalMeasure(x)


@dataclass
class DensityEstimate:
    x: np.ndarray
    rho: np.ndarray
    area_factor: float  # A_n
    extended: bool = False
    meta: dict = field(default_factory=dict)


def density_estimate(x, extend: bool = False) -> DensityEstimate:
    """Discrete density rho_n(x_i) = 2 A / (x_{i+1} - x_{i-1}) at i = 2..n-1.

    A is chosen so the trapezoidal area under the piecewise-linear
    interpolant of the returned samples equals one. With ``extend`` the
    interpolant is linearly extrapolated to x_1 and x_n before normalising.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("density estimate needs n >= 3 walls")
    span = x[2:] - x[:-2]
    gaps = np.diff(x)
    if np.any(gaps <= 0):
        bad = np.flatnonzero(gaps <= 0)
        raise DuplicatePositionError(
            f"coincident walls at indices {[(int(i) + 1, int(i) + 2) for i in bad]}"
        )
    raw = 2.0 / span
    xs = x[1:-1]
    if extend:
        if xs.size >= 2:
            left = raw[0] + (raw[1] - raw[0]) * (x[0] - xs[0]) / (xs[1] - xs[0])
            right = raw[-1] + (raw[-1] - raw[-2]) * (x[-1] - xs[-1]) / (xs[-1] - xs[-2])
        else:
            left = right = raw[0]
        xs = x.copy()
        raw = np.concatenate(([max(left, 0.0)], raw, [max(right, 0.0)]))
    area = float(np.trapezoid(raw, xs))
    if not area > 0:
        # a single interior sample has no area; fall back to the unit-mass width
        A = 1.0
    else:
        A = 1.0 / area
    return DensityEstimate(xs, A * raw, A, extended=extend,
                           meta={"endpoints": "linear extension" if extend else "interior only"})


# ---------------------------------------------------------------------------
# W1 via exact integration of |F_a - F_b|


def _cdf_pieces(obj):
    """Breakpoints of a piecewise-linear (possibly jumping) CDF.

    Returns (kind, data): kind 'atoms' with sorted atoms, or 'linear' with
    knots t and CDF values at them (continuous, piecewise linear).
    """
    if isinstance(obj, EmpiricalMeasure):
        return "atoms", obj.atoms
    cdf_knots = getattr(obj, "cdf_knots", None)
    if cdf_knots is None:
        raise TypeError(f"unsupported measure type {type(obj).__name__}")
    return "linear", cdf_knots()


def _eval_cdf(kind, data, t, left=False):
    if kind == "atoms":
        side = "left" if left else "right"
        return np.searchsorted(data, t, side=side) / data.size
    knots, vals = data
    return np.interp(t, knots, vals, left=0.0, right=1.0)


def _abs_linear_integral(d0, d1, w):
    """Integral over a segment of width w of |linear function from d0 to d1|."""
    out = 0.5 * w * (np.abs(d0) + np.abs(d1))
    cross = d0 * d1 < 0
    if np.any(cross):
        a, b = np.abs(d0[cross]), np.abs(d1[cross])
        out[cross] = 0.5 * w[cross] * (a * a + b * b) / (a + b)
    return out


def w1_distance(a, b) -> float:
    """Wasserstein-1 distance, computed as the L1 norm of the CDF difference.

    Both arguments are either an :class:`EmpiricalMeasure` or any object with
    a ``cdf_knots()`` method (such as a continuum density grid). Between
    consecutive breakpoints the CDF difference is linear, so the integral is
    exact up to rounding.
    """
    ka, da = _cdf_pieces(a)
    kb, db = _cdf_pieces(b)
    pts = []
    for kind, data in ((ka, da), (kb, db)):
        pts.append(data if kind == "atoms" else data[0])
    t = np.unique(np.concatenate(pts))
    if t.size < 2:
        return 0.0
    lo, hi = t[:-1], t[1:]
    # right limit at segment start, left limit at segment end
    d0 = _eval_cdf(ka, da, lo) - _eval_cdf(kb, db, lo)
    d1 = _eval_cdf(ka, da, hi, left=True) - _eval_cdf(kb, db, hi, left=True)
    return float(np.sum(_abs_linear_integral(d0, d1, hi - lo)))


# ---------------------------------------------------------------------------
# quantile recovery points


class ResolutionWarning(UserWarning):
    pass


def quantile_points(density, n: int) -> np.ndarray:
    """Points x_i with mass i/n to their left, i = 1..n.

    ``density`` needs ``cdf_knots()`` (a continuous piecewise-linear CDF).
    Plateaus in the CDF are resolved with the left-continuous inverse.
    """
    if n < 1:
        raise ValueError("n must be positive")
    knots, vals = density.cdf_knots()
    m = getattr(density, "m", knots.size)
    if n > 10 * m:
        warnings.warn(f"n={n} exceeds 10x the density resolution m={m}", ResolutionWarning)
    q = np.arange(1, n + 1) / n
    return _inverse_cdf(knots, vals, q)


def _inverse_cdf(knots, vals, q):
    # smallest t with F(t) >= q
    idx = np.searchsorted(vals, q, side="left")
    idx = np.clip(idx, 1, vals.size - 1)
    f0, f1 = vals[idx - 1], vals[idx]
    t0, t1 = knots[idx - 1], knots[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(f1 > f0, (q - f0) / (f1 - f0), 0.0)
    out = t0 + np.clip(frac, 0.0, 1.0) * (t1 - t0)
    out = np.where(q <= vals[0], knots[0], out)
    return out
