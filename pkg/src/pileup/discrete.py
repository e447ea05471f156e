"""Discrete wall pile-up energies in the five rescaled regimes.

Positions are rescaled, nondimensional and sorted; a pinned wall sits at
x_0 = 0 and takes part in every pair sum. For a configuration
x = (x_1, ..., x_n) the rescaled energies are

    case 1:    1/n^2 sum_{pairs} Vt_n(n^2 b^2 dx) + mean(x)
    cases 2-4: b/n   sum_{pairs} V(n b dx)        + mean(x)
    case 5:    b^2/(n a) sum_{pairs} V(n a dx)    + mean(x),  a = log(2 b^2/pi)/(2 pi)

with b = beta, Vt_n(s) = V(s) + (log(2 pi n^2 b^2) - 1)/pi^2, and the sums
running over all pairs 0 <= j < i <= n.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .potential import PI, PI2, truncation_radius, v, v_prime

# pairs whose scaled distance exceeds this have V == 0.0 exactly in double precision
_ZERO_RANGE = 120.0
# up to this many walls, pair sums use one vectorised pass over all index pairs
_DENSE_MAX = 1500


@functools.lru_cache(maxsize=8)
def _pair_index(n):
    i, j = np.triu_indices(n + 1, 1)
    return i, j


class SingularEnergyError(ValueError):
    """Two walls (or a wall and the pinned wall) coincide."""


class RegimeMismatchError(ValueError):
    """The parameters are inconsistent with the requested regime."""


class InvalidConfigurationError(ValueError):
    """Positions are negative, unsorted or have the wrong length."""


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional material and loading parameters (SI units)."""

    G: float
    b: float
    nu: float
    sigma: float
    h: float
    n: int

    def __post_init__(self):
        for name in ("G", "b", "sigma", "h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.nu < 1.0:
            raise ValueError("nu must lie in [0, 1)")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")

    @property
    def K(self) -> float:
        return self.G * self.b * PI / (2.0 * (1.0 - self.nu))


class RegimeTag(enum.IntEnum):
    SUBCRITICAL = 1
    FIRST_CRITICAL = 2
    INTERMEDIATE = 3
    SECOND_CRITICAL = 4
    SUPERCRITICAL = 5


_TAG_NAMES = {t.name.lower().replace("_", ""): t for t in RegimeTag}


@dataclass(frozen=True)
class Regime:
    """Active scaling regime; ``c`` is the limit constant for cases 2 and 4."""

    tag: RegimeTag
    c: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "tag", RegimeTag(self.tag))
        if self.c is not None:
            if self.tag not in (RegimeTag.FIRST_CRITICAL, RegimeTag.SECOND_CRITICAL):
                raise ValueError("c is only meaningful for cases 2 and 4")
            if not self.c > 0:
                raise ValueError("c must be positive")
            object.__setattr__(self, "c", float(self.c))

    @property
    def k(self) -> int:
        return int(self.tag)

    @classmethod
    def parse(cls, value, c=None) -> "Regime":
        """Build a regime from a Regime, an int 1..5 or a tag name."""
        if isinstance(value, Regime):
            return value if c is None else cls(value.tag, c)
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "").replace("-", "")
            if key.isdigit():
                return cls(RegimeTag(int(key)), c)
            if key not in _TAG_NAMES:
                raise ValueError(f"unknown regime {value!r}")
            return cls(_TAG_NAMES[key], c)
        return cls(RegimeTag(int(value)), c)


RegimeLike = Union[Regime, int, str]


def beta(params: PhysicalParams) -> float:
    """Dimensionless parameter sqrt(K / (n sigma h))."""
    return math.sqrt(params.K / (params.n * params.sigma * params.h))


def alpha(beta_n: float) -> float:
    """Case-5 length scale log((2/pi) beta^2) / (2 pi); requires beta^2 > pi/2."""
    arg = 2.0 * beta_n * beta_n / PI
    if not arg > 1.0:
        raise RegimeMismatchError("case 5 needs (2/pi) beta^2 > 1")
    return math.log(arg) / (2.0 * PI)


# ---------------------------------------------------------------------------
# regime heuristics


@dataclass(frozen=True)
class ClassifyThresholds:
    """A ratio r counts as "<< 1" when r <= small and ">> 1" when r >= large."""

    small: float = 0.1
    large: float = 10.0


@dataclass(frozen=True)
class Classification:
    regime: Regime
    n_beta: float
    beta: float


def classify(beta_n: float, n: int, thresholds: ClassifyThresholds = ClassifyThresholds()):
    """Suggest a regime from the finite-n values of n*beta and beta.

    This is a diagnostic only; callers pick the regime they want to study.
    """
    if not beta_n > 0:
        raise ValueError("beta must be positive")
    nb = n * beta_n
    lo, hi = thresholds.small, thresholds.large
    if nb <= lo:
        reg = Regime(RegimeTag.SUBCRITICAL)
    elif nb < hi:
        reg = Regime(RegimeTag.FIRST_CRITICAL, nb)
    elif beta_n <= lo:
        reg = Regime(RegimeTag.INTERMEDIATE)
    elif beta_n < hi:
        reg = Regime(RegimeTag.SECOND_CRITICAL, beta_n)
    else:
        reg = Regime(RegimeTag.SUPERCRITICAL)
    return Classification(reg, nb, beta_n)


# ---------------------------------------------------------------------------
# rescaling between physical and nondimensional positions


def rescale_factor(regime: RegimeLike, params: PhysicalParams) -> float:
    k = Regime.parse(regime).k
    K, n, s, h = params.K, params.n, params.sigma, params.h
    if k == 1:
        return s / (n * K)
    if k in (2, 3, 4):
        return math.sqrt(s / (n * K * h))
    arg = (2.0 / PI) * K / (n * h * s)
    if not arg > 1.0:
        raise RegimeMismatchError("case 5 rescaling needs (2/pi) K/(n h sigma) > 1")
    return 1.0 / (n * h * math.log(arg) / (2.0 * PI))


def rescale_positions(regime: RegimeLike, params: PhysicalParams, physical) -> np.ndarray:
    """Map physical wall positions (metres) to rescaled positions."""
    x = np.asarray(physical, dtype=float)
    if x.ndim != 1 or np.any(x < 0) or np.any(np.diff(x) < 0):
        raise InvalidConfigurationError("physical positions must be sorted and nonnegative")
    return x * rescale_factor(regime, params)


def unrescale_positions(regime: RegimeLike, params: PhysicalParams, x) -> np.ndarray:
    return np.asarray(x, dtype=float) / rescale_factor(regime, params)


# ---------------------------------------------------------------------------
# energies


@dataclass(frozen=True)
class PairScaling:
    """E = prefactor * sum_pairs [V(scale * dx) + shift] + mean(x)."""

    prefactor: float
    scale: float
    shift: float = 0.0


def pair_scaling(regime: RegimeLike, beta_n: float, n: int) -> PairScaling:
    reg = Regime.parse(regime)
    k = reg.k
    if not beta_n > 0:
        raise ValueError("beta must be positive")
    if k == 1:
        s = n * n * beta_n * beta_n
        return PairScaling(1.0 / (n * n), s, (math.log(2.0 * PI * s) - 1.0) / PI2)
    if k in (2, 3, 4):
        if reg.c is not None:
            implied = n * beta_n if k == 2 else beta_n
            if abs(implied - reg.c) > 1e-9 * reg.c:
                raise RegimeMismatchError(
                    f"regime constant c={reg.c} does not match beta={beta_n} at n={n}"
                )
        return PairScaling(beta_n / n, n * beta_n)
    a = alpha(beta_n)
    return PairScaling(beta_n * beta_n / (n * a), n * a)


def check_configuration(x, n=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidConfigurationError("configuration must be a nonempty vector")
    if n is not None and x.size != n:
        raise InvalidConfigurationError(f"expected {n} positions, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidConfigurationError("positions must be finite")
    if x[0] < 0 or np.any(np.diff(x) < 0):
        raise InvalidConfigurationError("positions must satisfy 0 <= x_1 <= ... <= x_n")
    return x


def _with_pin(x):
    return np.concatenate(([0.0], x))


def _ensure_distinct(X):
    gaps = np.diff(X)
    if np.any(gaps <= 0):
        idx = int(np.argmin(gaps))
        raise SingularEnergyError(f"walls {idx} and {idx + 1} coincide")


@dataclass
class PairSum:
    """Result of a (possibly truncated) pair sum over sorted walls incl. the pin."""

    value: float
    force: np.ndarray  # d value / d x_i, i = 1..n
    skipped: int
    bound: float  # certified |truncated - exact| <= bound


def pair_sum_truncated(x, scale: float, epsilon: Optional[float] = None, forces=True) -> PairSum:
    """Sum V(scale * (x_j - x_i)) over all pairs of {0, x_1, ..., x_n}.

    With ``epsilon`` set, pairs farther apart than s_cut(epsilon)/scale are
    skipped; each skipped term is below epsilon because V decreases on
    (0, inf). With ``epsilon=None`` the sum is exact: it only stops once
    every remaining term underflows to zero.
    """
    X = _with_pin(check_configuration(x))
    _ensure_distinct(X)
    n = X.size - 1
    cut = _ZERO_RANGE if epsilon is None else min(truncation_radius(epsilon).s_cut, _ZERO_RANGE)
    total = 0.0
    grad = np.zeros(n + 1)
    skipped = 0
    if n <= _DENSE_MAX:
        i, j = _pair_index(n)
        d = scale * (X[j] - X[i])
        live = d <= cut
        skipped = int(d.size - np.count_nonzero(live))
        dl = d[live]
        total = float(np.sum(v(dl)))
        if forces:
            f = scale * v_prime(dl)
            grad += np.bincount(j[live], f, n + 1) - np.bincount(i[live], f, n + 1)
    else:
        for k in range(1, n + 1):
            d = scale * (X[k:] - X[:-k])
            live = d <= cut
            nlive = int(np.count_nonzero(live))
            skipped += d.size - nlive
            if nlive == 0:
                skipped += sum(n + 1 - kk for kk in range(k + 1, n + 1))
                break
            dl = d[live] if nlive < d.size else d
            total += float(np.sum(v(dl)))
            if forces:
                f = np.zeros(d.size)
                f[live] = scale * v_prime(dl)
                grad[k:] += f
                grad[:-k] -= f
    bound = 0.0 if epsilon is None else skipped * float(epsilon)
    return PairSum(total, grad[1:], skipped, bound)


def _pair_sum_full(X, scale):
    """Reference O(n^2) pair sum with an explicit distance matrix."""
    iu = np.triu_indices(X.size, 1)
    d = scale * (X[iu[1]] - X[iu[0]])
    return float(np.sum(v(d)))


def energy(regime: RegimeLike, x, beta_n: float, n: Optional[int] = None,
           epsilon: Optional[float] = None) -> float:
    """Rescaled discrete energy E_n^(k) of the configuration ``x``."""
    x = check_configuration(x, n)
    n = x.size
    ps = pair_scaling(regime, beta_n, n)
    res = pair_sum_truncated(x, ps.scale, epsilon, forces=False)
    npairs = n * (n + 1) // 2
    return ps.prefactor * (res.value + ps.shift * npairs) + float(np.mean(x))


def gradient(regime: RegimeLike, x, beta_n: float, n: Optional[int] = None,
             epsilon: Optional[float] = None) -> np.ndarray:
    """Exact partial derivatives of E_n^(k) with respect to x_1..x_n."""
    x = check_configuration(x, n)
    n = x.size
    ps = pair_scaling(regime, beta_n, n)
    res = pair_sum_truncated(x, ps.scale, epsilon, forces=True)
    return ps.prefactor * res.force + 1.0 / n


def energy_and_gradient(regime: RegimeLike, x, beta_n: float, epsilon=None):
    x = check_configuration(x)
    n = x.size
    ps = pair_scaling(regime, beta_n, n)
    res = pair_sum_truncated(x, ps.scale, epsilon, forces=True)
    npairs = n * (n + 1) // 2
    e = ps.prefactor * (res.value + ps.shift * npairs) + float(np.mean(x))
    return e, ps.prefactor * res.force + 1.0 / n


# 5-point Gauss-Legendre rule on [0, 1]
_GL_T, _GL_W = np.polynomial.legendre.leggauss(5)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


def v_difference(a, b=None, delta=None):
    """V(b) - V(a) for positive a, b, accurate even when b is close to a.

    Pass ``delta = b - a`` instead of ``b`` when the increment is known more
    precisely than b itself. Close arguments are handled by integrating V'
    with Gauss-Legendre, which avoids subtracting two nearby values.
    """
    a = np.asarray(a, dtype=float)
    if delta is None:
        b = np.asarray(b, dtype=float)
        a, b = np.broadcast_arrays(a, b)
        delta = b - a
    else:
        delta = np.asarray(delta, dtype=float)
        a, delta = np.broadcast_arrays(a, delta)
        b = a + delta
    out = np.empty(a.shape)
    near = np.abs(delta) <= 0.25 * np.minimum(a, b)
    if np.any(near):
        an, w = a[near], delta[near]
        pts = an[:, None] + w[:, None] * _GL_T[None, :]
        out[near] = w * (v_prime(pts) @ _GL_W)
    far = ~near
    if np.any(far):
        out[far] = v(b[far]) - v(a[far])
    return out


def energy_difference_gaps(regime: RegimeLike, gaps, dgaps, beta_n: float) -> float:
    """E(gaps + dgaps) - E(gaps) in gap variables g_i = x_i - x_{i-1}.

    Pair distances and their increments are accumulated from the gaps and
    the gap increments separately, so the result stays accurate relative to
    the size of the step even when the step is far below the resolution of
    the positions.
    """
    g = np.asarray(gaps, dtype=float)
    dg = np.asarray(dgaps, dtype=float)
    n = g.size
    if dg.shape != g.shape:
        raise InvalidConfigurationError("gap increment has the wrong length")
    g_new = g + dg
    if np.any(g <= 0) or np.any(g_new <= 0):
        raise SingularEnergyError("a gap is not positive")
    ps = pair_scaling(regime, beta_n, n)
    sc = ps.scale
    load = float(np.dot(n - np.arange(n), dg)) / n
    if n <= _DENSE_MAX:
        i, j = _pair_index(n)
        X = np.concatenate(([0.0], np.cumsum(g)))
        Xn = np.concatenate(([0.0], np.cumsum(g_new)))
        C = np.concatenate(([0.0], np.cumsum(dg)))
        do = sc * (X[j] - X[i])
        dn = sc * (Xn[j] - Xn[i])
        dd = sc * (C[j] - C[i])
        # pairs whose distance is far below the position scale lose digits in
        # the cumsum difference; those are re-summed gap by gap
        lost = np.flatnonzero(np.minimum(do, dn) < _RESOLVE * sc * np.maximum(X[j], Xn[j]))
        if lost.size:
            idx = np.column_stack((i[lost], j[lost])).ravel()
            do[lost] = sc * _segment_sums(g, idx)
            dn[lost] = sc * _segment_sums(g_new, idx)
            dd[lost] = sc * _segment_sums(dg, idx)
        return ps.prefactor * _pair_differences(do, dn, dd) + load
    total = _diagonal_differences(g, dg, g_new, sc, n)
    return ps.prefactor * total + load


# relative precision below which a cumsum difference is not trusted
_RESOLVE = 1e-6


def _segment_sums(a, idx):
    """sum(a[i:j]) for consecutive (i, j) pairs in ``idx``."""
    return np.add.reduceat(np.append(a, 0.0), idx)[::2]


def _pair_differences(do, dn, dd):
    live = (do <= _ZERO_RANGE) | (dn <= _ZERO_RANGE)
    do, dn, dd = do[live], dn[live], dd[live]
    if np.any(dn <= 0):
        raise SingularEnergyError("step makes two walls coincide")
    # GL on the increment for close arguments, plain difference otherwise
    near = np.abs(dd) <= 0.25 * np.minimum(do, dn)
    out = float(np.sum(v_difference(do[near], delta=dd[near])))
    return out + float(np.sum(v(dn[~near]) - v(do[~near])))


def _diagonal_differences(g, dg, g_new, sc, kmax):
    """Pair differences on diagonals k = 1..kmax from sliding gap sums."""
    total = 0.0
    d = g.copy()
    dn = g_new.copy()
    dd = dg.copy()
    for k in range(1, kmax + 1):
        if k > 1:
            d = d[:-1] + g[k - 1:]
            dn = dn[:-1] + g_new[k - 1:]
            dd = dd[:-1] + dg[k - 1:]
        if min(np.min(d), np.min(dn)) * sc > _ZERO_RANGE:
            break
        total += _pair_differences(sc * d, sc * dn, sc * dd)
    return total


def energy_difference(regime: RegimeLike, x_old, x_new, beta_n: float) -> float:
    """E(x_new) - E(x_old), computed without forming the two totals.

    Resolves decreases far below the rounding level of the energy itself,
    which a line search on a stiff energy needs.
    """
    x_old = check_configuration(x_old)
    x_new = check_configuration(x_new, x_old.size)
    _ensure_distinct(_with_pin(x_old))
    _ensure_distinct(_with_pin(x_new))
    g = np.diff(_with_pin(x_old))
    dg = np.diff(_with_pin(x_new - x_old))
    return energy_difference_gaps(regime, g, dg, beta_n)
