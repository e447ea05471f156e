"""Continuum limit energies, their minimizers, Euler-Lagrange residuals and stresses.

Densities live on m uniform cells of [0, L] and are stored as cell averages,
so a DensityGrid is an honest piecewise-constant density. All five energies
are evaluated exactly for such densities, up to quadrature of smooth kernels:

    k = 1:  -(1/2pi^2) int int log|x - y| rho rho + int x rho
    k = 2:  (c/2) int int V(c(x - y)) rho rho     + int x rho
    k = 3:  (a/2) int rho^2                        + int x rho,   a = int V = 1/(3 pi)
    k = 4:  c int V_eff(c / rho) rho               + int x rho
    k = 5:  int x rho if rho <= 1, +inf otherwise
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.linalg import matmul_toeplitz

from . import potential as pot

log = logging.getLogger(__name__)

A_INT = pot.INTEGRAL_V  # a = int V
LAMBDA3 = math.sqrt(2.0 * A_INT)  # support end of the k = 3 minimizer
C_HEAD_LOUAT = 2.0 / pot.PI2  # support end of the k = 1 minimizer

K5_TOL = 1e-9
MASS_TOL = 1e-10


class DomainTooSmallError(RuntimeError):
    """The computed minimizer still has mass at the right end of [0, L]."""

    def __init__(self, msg, suggested_L):
        super().__init__(msg)
        self.suggested_L = suggested_L


class UnsupportedClosedForm(ValueError):
    pass


class NonInvertibleWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# data types


@dataclass
class DensityGrid:
    """Nonnegative unit-mass density given by its averages on m cells of [0, L].

    ``profile`` optionally holds the exact pointwise density the averages were
    taken from; ``support`` its support interval when known.
    """

    L: float
    rho: np.ndarray
    profile: Optional[Callable] = field(default=None, repr=False, compare=False)
    support: Optional[Tuple[float, float]] = None
    info: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.ndim != 1 or self.rho.size < 2:
            raise ValueError("need at least two cells")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if np.any(self.rho < 0) or not np.all(np.isfinite(self.rho)):
            raise ValueError("density must be finite and nonnegative")
        if abs(self.mass() - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {self.mass():.15g} differs from 1")

    @property
    def m(self) -> int:
        return self.rho.size

    @property
    def h(self) -> float:
        return self.L / self.m

    @property
    def x(self) -> np.ndarray:
        """Cell centres."""
        return (np.arange(self.m) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.m + 1)

    def mass(self) -> float:
        return float(self.h * np.sum(self.rho))

    def cdf_knots(self):
        """Knots and values of the (piecewise-linear) CDF."""
        F = np.concatenate(([0.0], np.cumsum(self.rho) * self.h))
        F = np.minimum(F / F[-1], 1.0)
        return self.edges, F

    def cdf(self, t):
        e, F = self.cdf_knots()
        return np.interp(t, e, F, left=0.0, right=1.0)

    def support_cells(self, rel=1e-12):
        return self.rho > rel * float(np.max(self.rho))

    def support_end(self) -> float:
        idx = np.flatnonzero(self.support_cells())
        return float((idx[-1] + 1) * self.h)

    @classmethod
    def from_cdf(cls, F: Callable, L: float, m: int, **kw) -> "DensityGrid":
        """Cell averages (F(b) - F(a)) / h of a CDF given in closed form."""
        e = np.linspace(0.0, L, m + 1)
        Fe = np.asarray(F(e), dtype=float)
        rho = np.diff(Fe) / (L / m)
        rho = np.maximum(rho, 0.0)
        rho /= np.sum(rho) * (L / m)
        return cls(L, rho, **kw)

    @classmethod
    def from_function(cls, f: Callable, L: float, m: int, **kw) -> "DensityGrid":
        """Cell averages of a pointwise density by Gauss-Legendre per cell, renormalised."""
        t, w = np.polynomial.legendre.leggauss(6)
        h = L / m
        left = np.arange(m) * h
        pts = left[:, None] + 0.5 * h * (t[None, :] + 1.0)
        vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
        rho = np.maximum(0.5 * vals @ w, 0.0)
        rho /= np.sum(rho) * h
        kw.setdefault("profile", f)
        return cls(L, rho, **kw)


@dataclass
class XiProfile:
    """Samples xi_j = xi(j/m), j = 0..m, of a nondecreasing map (0,1) -> [0, inf).

    Between samples xi is linear, which corresponds to a density that is
    constant between consecutive quantiles.
    """

    xi: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.ndim != 1 or self.xi.size < 2:
            raise ValueError("need at least two samples")
        if self.xi[0] < 0 or np.any(np.diff(self.xi) < 0):
            raise ValueError("xi must be nondecreasing and start at a nonnegative value")

    @property
    def m(self) -> int:
        return self.xi.size - 1

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    def slopes(self) -> np.ndarray:
        return np.diff(self.xi) * self.m


def density_to_xi(density: DensityGrid, m: Optional[int] = None) -> XiProfile:
    """Quantile function xi = F^{-1} sampled at s_j = j/m (left-continuous inverse)."""
    m = m or density.m
    e, F = density.cdf_knots()
    first, last = np.flatnonzero(F > 0)[0], np.flatnonzero(F >= 1.0)[0]
    if np.any(np.diff(F)[first - 1:last] <= 0):
        warnings.warn("density vanishes inside its support; using the left-continuous inverse",
                      NonInvertibleWarning)
    s = np.linspace(0.0, 1.0, m + 1)
    idx = np.clip(np.searchsorted(F, s, side="left"), 1, F.size - 1)
    f0, f1 = F[idx - 1], F[idx]
    frac = np.where(f1 > f0, (s - f0) / np.where(f1 > f0, f1 - f0, 1.0), 0.0)
    xi = e[idx - 1] + np.clip(frac, 0.0, 1.0) * (e[idx] - e[idx - 1])
    xi[0] = e[first - 1]
    return XiProfile(np.maximum.accumulate(xi))


def xi_to_density(xi: XiProfile, L: Optional[float] = None, m: Optional[int] = None) -> DensityGrid:
    """Rebin the density mu(dy) = dy / xi'(xi^{-1}(y)) onto uniform cells."""
    L = L or float(xi.xi[-1]) * (1.0 + 1e-12) or 1.0
    m = m or xi.m
    if xi.xi[-1] > L:
        raise ValueError("L must cover the range of xi")
    e = np.linspace(0.0, L, m + 1)
    F = np.interp(e, xi.xi, xi.s, left=0.0, right=1.0)
    return DensityGrid.from_cdf(lambda t: np.interp(t, e, F), L, m)


# ---------------------------------------------------------------------------
# closed-form minimizers


def _cdf_k1(t):
    t = np.clip(np.asarray(t, dtype=float), 0.0, C_HEAD_LOUAT)
    C = C_HEAD_LOUAT
    return pot.PI * (np.sqrt(t * (C - t)) + C * np.arcsin(np.sqrt(t / C)))


def _rho_k1(t):
    t = np.asarray(t, dtype=float)
    C = C_HEAD_LOUAT
    out = np.zeros_like(t)
    inside = (t > 0) & (t < C)
    out[inside] = pot.PI * np.sqrt((C - t[inside]) / t[inside])
    return out


def _cdf_k3(t):
    t = np.clip(np.asarray(t, dtype=float), 0.0, LAMBDA3)
    return (LAMBDA3 * t - 0.5 * t * t) / A_INT


def _rho_k3(t):
    t = np.asarray(t, dtype=float)
    return np.where((t >= 0) & (t <= LAMBDA3), (LAMBDA3 - t) / A_INT, 0.0)


def _cdf_k5(t):
    return np.clip(np.asarray(t, dtype=float), 0.0, 1.0)


def _rho_k5(t):
    t = np.asarray(t, dtype=float)
    return np.where((t >= 0) & (t <= 1.0), 1.0, 0.0)


_CLOSED = {
    1: (_cdf_k1, _rho_k1, C_HEAD_LOUAT),
    3: (_cdf_k3, _rho_k3, LAMBDA3),
    5: (_cdf_k5, _rho_k5, 1.0),
}


def minimizer_closed_form(k: int, L: Optional[float] = None, m: int = 4000) -> DensityGrid:
    """Exact minimizer for k = 1 (Head-Louat), 3 (triangle) and 5 (indicator).

    Returned as exact cell averages; ``profile`` holds the pointwise density.
    """
    if k not in _CLOSED:
        raise UnsupportedClosedForm(f"no closed-form minimizer for k={k}")
    cdf, rho, end = _CLOSED[k]
    L = L or end
    if L < end:
        raise DomainTooSmallError(f"L={L} cuts the support [0, {end:.6g}]", end)
    return DensityGrid.from_cdf(cdf, L, m, profile=rho, support=(0.0, end))


def closed_form_cdf(k: int) -> Callable:
    return _CLOSED[k][0]


# ---------------------------------------------------------------------------
# cell-integrated kernels


_GL_T, _GL_W = np.polynomial.legendre.leggauss(10)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W  # rule on [0, 1]


def _phi2(t):
    # second antiderivative of log|t|, zero at the origin
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    nz = t != 0
    out[nz] = 0.25 * t[nz] ** 2 * (2.0 * np.log(np.abs(t[nz])) - 3.0)
    return out


def log_cell_kernel(h: float, m: int) -> np.ndarray:
    """K_j = int_{cell_0} int_{cell_j} log|x - y| dy dx for j = 0..m-1."""
    D = np.arange(m) * h
    K = np.empty(m)
    near = np.arange(m) < 2
    Dn = D[near]
    K[near] = _phi2(Dn + h) - 2.0 * _phi2(Dn) + _phi2(Dn - h)
    Df = D[~near]
    if Df.size:
        # h^2 int_{-1}^{1} (1 - |t|) log|D + h t| dt, expanded around log D
        eps = h / Df
        corr = np.zeros_like(Df)
        for t, w in zip(_GL_T, _GL_W):
            corr += w * (1.0 - t) * (np.log1p(eps * t) + np.log1p(-eps * t))
        K[~near] = h * h * (np.log(Df) + corr)
    return K


def v_cell_kernel(c: float, h: float, m: int) -> np.ndarray:
    """K_j = int_{cell_0} int_{cell_j} V(c (x - y)) dy dx for j = 0..m-1.

    V(c u) = R(c u) - (log c + log|u|)/pi^2 with R smooth; the log part is
    integrated exactly and R by Gauss-Legendre. Cells whose scaled distance
    exceeds 2 are integrated directly.
    """
    D = np.arange(m) * h
    K = np.empty(m)
    far = c * (D - h) > 2.0
    near = ~far
    tt = _GL_T[None, :]
    ww = (_GL_W * (1.0 - _GL_T))[None, :]
    if np.any(near):
        Dn = D[near][:, None]
        smooth = h * h * np.sum(ww * (pot.v_regular(c * (Dn + h * tt)) + pot.v_regular(c * (Dn - h * tt))), axis=1)
        logpart = h * h * math.log(c) + log_cell_kernel(h, m)[near]
        K[near] = smooth - logpart / pot.PI2
    if np.any(far):
        Df = D[far][:, None]
        K[far] = h * h * np.sum(ww * (pot.v(c * (Df + h * tt)) + pot.v(c * (Df - h * tt))), axis=1)
    return K


def _toeplitz_apply(col, rho):
    return matmul_toeplitz((col, col), rho, check_finite=False)


@dataclass
class _Operator:
    """Quadratic part of E^(1) and E^(2): E_int = (1/2) rho^T M rho."""

    col: np.ndarray  # first column of the symmetric Toeplitz matrix M

    def apply(self, rho):
        return _toeplitz_apply(self.col, rho)


def _interaction_operator(k, c, h, m) -> _Operator:
    if k == 1:
        return _Operator(-log_cell_kernel(h, m) / pot.PI2)
    if k == 2:
        return _Operator(c * v_cell_kernel(c, h, m))
    raise ValueError("only k = 1, 2 have a nonlocal interaction")


# ---------------------------------------------------------------------------
# local (k = 4) integrand f(rho) = c rho V_eff(c / rho)


def f4(rho, c):
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    pos = rho > 0
    if np.any(pos):
        out[pos] = c * rho[pos] * pot.v_eff(c / rho[pos])
    return out


def f4_prime(rho, c):
    """c [V_eff(s) - s V_eff'(s)] with s = c / rho; zero at rho = 0."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    pos = rho > 0
    if np.any(pos):
        s = c / rho[pos]
        out[pos] = c * (np.asarray(pot.v_eff(s)) - s * np.asarray(pot.v_eff_prime(s)))
    return out


def f4_second(rho, c):
    """s^3 V_eff''(s) with s = c / rho."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    pos = rho > 0
    if np.any(pos):
        s = c / rho[pos]
        out[pos] = s ** 3 * np.asarray(pot.v_eff_second(s))
    return out


# ---------------------------------------------------------------------------
# energies


def _need_c(k, c):
    if k in (2, 4):
        if c is None or not c > 0:
            raise ValueError(f"k={k} needs a positive constant c")
        return float(c)
    return None


def limit_energy(k: int, density: Union[DensityGrid, XiProfile], c: Optional[float] = None) -> float:
    """E^(k) of a density (or of a quantile profile, for k = 3, 4, 5)."""
    c = _need_c(k, c)
    if isinstance(density, XiProfile):
        if k in (3, 4, 5):
            return _xi_energy(k, density, c)
        density = xi_to_density(density)
    rho, h, x = density.rho, density.h, density.x
    linear = float(h * np.dot(rho, x))
    if k == 5:
        return linear if float(np.max(rho)) <= 1.0 + K5_TOL else math.inf
    if k == 3:
        return 0.5 * A_INT * float(h * np.dot(rho, rho)) + linear
    if k == 4:
        return float(h * np.sum(f4(rho, c))) + linear
    op = _interaction_operator(k, c, h, density.m)
    return 0.5 * float(np.dot(rho, op.apply(rho))) + linear


def _xi_energy(k, xi: XiProfile, c):
    m = xi.m
    d = np.diff(xi.xi)
    linear = float(np.sum(0.5 * (xi.xi[1:] + xi.xi[:-1])) / m)
    slope = d * m
    if k == 5:
        return linear if float(np.min(slope)) >= 1.0 - K5_TOL else math.inf
    if np.any(slope <= 0):
        return math.inf
    if k == 3:
        return 0.5 * A_INT * float(np.sum(1.0 / slope)) / m + linear
    return c * float(np.sum(pot.v_eff(c * slope))) / m + linear


def energy_gradient(k: int, density: DensityGrid, c: Optional[float] = None, op=None) -> np.ndarray:
    """First variation dE/drho at the cell centres (per unit length)."""
    c = _need_c(k, c)
    rho, x = density.rho, density.x
    if k == 5:
        return x.copy()
    if k == 3:
        return A_INT * rho + x
    if k == 4:
        return f4_prime(rho, c) + x
    op = op or _interaction_operator(k, c, density.h, density.m)
    return op.apply(rho) / density.h + x


# ---------------------------------------------------------------------------
# minimizers


@dataclass
class ContinuumOptions:
    m: int = 2000
    L: Optional[float] = None  # None picks a default and enlarges it if needed
    tol: float = 1e-8  # KKT residual target
    max_iters: int = 50_000
    method: str = "auto"  # "auto", "pgd" or "exact"
    max_doublings: int = 6


_DEFAULT_L = {1: 0.25, 2: 1.0, 3: 0.6, 4: 1.0, 5: 2.0}
_TAIL_TOL = 1e-6


def _project(v, h, ub=None):
    """Euclidean projection onto {0 <= r <= ub, h sum r = 1}."""
    hi_cap = np.inf if ub is None else ub
    lo_t = float(np.min(v)) - 1.0 / (h * v.size) - (0.0 if ub is None else 0.0)
    hi_t = float(np.max(v))

    def mass(t):
        return h * np.sum(np.clip(v - t, 0.0, hi_cap))

    while mass(lo_t) < 1.0:
        lo_t -= max(1.0, abs(lo_t))
    for _ in range(200):
        mid = 0.5 * (lo_t + hi_t)
        if mass(mid) >= 1.0:
            lo_t = mid
        else:
            hi_t = mid
        if hi_t - lo_t <= 4e-16 * max(1.0, abs(mid)):
            break
    t = lo_t
    r = np.clip(v - t, 0.0, hi_cap)
    free = (r > 0) & (r < hi_cap)
    if np.any(free):
        capped = np.count_nonzero(r >= hi_cap) * (0.0 if ub is None else ub)
        t = (np.sum(v[free]) + capped - 1.0 / h) / np.count_nonzero(free)
        r = np.clip(v - t, 0.0, hi_cap)
    r *= 1.0 / (h * np.sum(r)) if ub is None else 1.0
    return r


def kkt_residual(grad, rho, ub=None) -> Tuple[float, float]:
    """Residual of the first-order conditions on the simplex; returns (res, lambda)."""
    scale = max(float(np.max(rho)), 1.0)
    pos = rho > 1e-14 * scale
    at_ub = np.zeros_like(pos) if ub is None else rho >= ub * (1 - 1e-12)
    free = pos & ~at_ub
    if not np.any(free):
        free = pos
    lam = float(np.median(grad[free]))
    res = float(np.max(np.abs(grad[free] - lam)))
    zero = ~pos
    if np.any(zero):
        res = max(res, float(np.max(np.maximum(lam - grad[zero], 0.0))))
    if np.any(at_ub):
        res = max(res, float(np.max(np.maximum(grad[at_ub] - lam, 0.0))))
    return res, lam


def _lipschitz(k, c, op, h, m, rho):
    if k == 3:
        return A_INT
    if k == 4:
        s = np.geomspace(1e-3, 50.0, 400)
        return float(np.max(s ** 3 * pot.v_eff_second(s))) * 1.05
    rng = np.random.default_rng(0)
    v = rng.standard_normal(m)
    lam = 1.0
    for _ in range(60):
        v -= v.mean()
        w = op.apply(v) / h
        w -= w.mean()
        lam = float(np.linalg.norm(w) / np.linalg.norm(v))
        v = w / np.linalg.norm(w)
    return 1.1 * lam


def _solve_pgd(k, c, L, opts, init=None):
    m = opts.m
    h = L / m
    ub = 1.0 if k == 5 else None
    x = (np.arange(m) + 0.5) * h
    op = _interaction_operator(k, c, h, m) if k in (1, 2) else None
    if init is None:
        rho = np.full(m, 1.0 / L)
        if ub is not None and 1.0 / L > ub:
            raise DomainTooSmallError("L < 1 cannot hold a density bounded by 1", 2.0)
    else:
        rho = _project(np.asarray(init, dtype=float), h, ub)
    grid_tmp = DensityGrid(L, rho)

    def grad(r):
        grid_tmp.rho = r
        return energy_gradient(k, grid_tmp, c, op)

    if k == 5:
        step = 10.0 * L
    else:
        step = 1.0 / _lipschitz(k, c, op, h, m, rho)
    y = rho.copy()
    tk = 1.0
    res = np.inf
    it = 0
    g = grad(rho)
    for it in range(1, opts.max_iters + 1):
        gy = grad(y)
        new = _project(y - step * gy, h, ub)
        # gradient-based adaptive restart keeps the accelerated scheme monotone enough
        if np.dot(gy, new - rho) > 0:
            tk = 1.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = new + ((tk - 1.0) / t_next) * (new - rho)
        rho, tk = new, t_next
        if it % 10 == 0 or it == opts.max_iters:
            g = grad(rho)
            res, _ = kkt_residual(g, rho, ub)
            if res < opts.tol:
                break
    g = grad(rho)
    res, lam = kkt_residual(g, rho, ub)
    return rho, {"iterations": it, "kkt": res, "multiplier": lam, "method": "pgd",
                 "converged": bool(res < opts.tol)}


def _f4_inverse(y, c, iters=80):
    """rho >= 0 with f4'(rho) = y (vectorised; f4' is increasing with f4'(0) = 0)."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    pos = y > 0
    if not np.any(pos):
        return out
    yp = y[pos]
    # bracket in log(rho)
    lo = np.full(yp.shape, -40.0)
    hi = np.full(yp.shape, 5.0)
    while np.any(f4_prime(np.exp(hi), c) < yp):
        hi = np.where(f4_prime(np.exp(hi), c) < yp, hi + 5.0, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = f4_prime(np.exp(mid), c) < yp
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
        if np.max(hi - lo) < 1e-15:
            break
    r = np.exp(0.5 * (lo + hi))
    # Newton polish
    for _ in range(3):
        r = np.maximum(r - (f4_prime(r, c) - yp) / f4_second(r, c), 0.5 * r)
    out[pos] = r
    return out


def _solve_exact(k, c, L, opts):
    """Cellwise exact KKT solve for the local energies (k = 3, 4, 5)."""
    m = opts.m
    h = L / m
    x = (np.arange(m) + 0.5) * h
    if k == 5:
        if L < 1.0:
            raise DomainTooSmallError("L < 1 cannot hold a density bounded by 1", 2.0)
        rho = np.zeros(m)
        full = int(math.floor(1.0 / h + 1e-9))
        rho[:full] = 1.0
        rest = 1.0 - full * h
        if rest > 1e-15 and full < m:
            rho[full] = rest / h
        return rho, {"iterations": 0, "kkt": 0.0, "multiplier": float(x[min(full, m - 1)]),
                     "method": "exact", "converged": True}

    if k == 3:
        def density_for(lam):
            return np.maximum(lam - x, 0.0) / A_INT
    else:
        # tabulate f4' on a log grid, invert by interpolation, polish at the end
        rt = np.geomspace(1e-8, 1e3, 3000)
        ft = f4_prime(rt, c)
        keep = ft > 0
        rt, ft = rt[keep], ft[keep]

        def density_for(lam):
            y = lam - x
            out = np.zeros(m)
            pos = y > 0
            out[pos] = np.exp(np.interp(np.log(y[pos]), np.log(ft), np.log(rt)))
            return out

    lo, hi = 0.0, 1.0
    while h * np.sum(density_for(hi)) < 1.0:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h * np.sum(density_for(mid)) < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * hi:
            break
    lam = 0.5 * (lo + hi)
    if k == 4:
        for _ in range(4):
            rho = _f4_inverse(lam - x, c)
            pos = rho > 0
            dm = h * np.sum(1.0 / f4_second(rho[pos], c))
            lam -= (h * np.sum(rho) - 1.0) / dm
        rho = _f4_inverse(lam - x, c)
    else:
        rho = density_for(lam)
    rho /= h * np.sum(rho)
    grid_tmp = DensityGrid(L, rho)
    res, lam2 = kkt_residual(energy_gradient(k, grid_tmp, c), rho)
    return rho, {"iterations": 0, "kkt": res, "multiplier": lam2, "method": "exact",
                 "converged": bool(res < max(opts.tol, 1e-9))}


def minimizer_numerical(k: int, c: Optional[float] = None,
                        opts: Optional[ContinuumOptions] = None, init=None) -> DensityGrid:
    """Minimize the discretized E^(k) over unit-mass nonnegative cell densities.

    The nonlocal energies (k = 1, 2) use accelerated projected gradient with
    restarts; the local ones (k = 3, 4, 5) are solved cell by cell from the
    KKT conditions unless ``method="pgd"``. With ``L=None`` the domain
    doubles until the density vanishes at its right end.
    """
    opts = opts or ContinuumOptions()
    c = _need_c(k, c)
    if k not in (1, 2, 3, 4, 5):
        raise ValueError("k must be in 1..5")
    auto = opts.L is None
    L = opts.L or _DEFAULT_L[k]
    method = opts.method
    if method == "auto":
        method = "exact" if k in (3, 4, 5) else "pgd"
    if method == "exact" and k in (1, 2):
        raise ValueError("the exact cellwise solver only handles k = 3, 4, 5")
    for attempt in range(opts.max_doublings + 1):
        if method == "exact":
            rho, info = _solve_exact(k, c, L, opts)
        else:
            rho, info = _solve_pgd(k, c, L, opts, init=None if init is None else np.interp(
                (np.arange(opts.m) + 0.5) * L / opts.m, init.x, init.rho, right=0.0))
        tail = float(rho[-1])
        if k == 5 or tail < _TAIL_TOL:
            break
        if not auto or attempt == opts.max_doublings:
            raise DomainTooSmallError(
                f"density {tail:.3g} at the right end of [0, {L}]", 2.0 * L)
        L *= 2.0
    info["L"] = L
    if not info["converged"]:
        log.warning("continuum solve for k=%d stopped with KKT residual %.3g", k, info["kkt"])
    return DensityGrid(L, rho, info=info)


# ---------------------------------------------------------------------------
# internal stresses and Euler-Lagrange residuals


@dataclass
class StressField:
    x: np.ndarray
    sigma: np.ndarray
    mask: np.ndarray  # nodes where sigma is defined
    gcz: Optional[np.ndarray] = None  # -rho'/rho for comparison (k = 4 only)


def _pv_log_derivative(profile, support_end, x):
    """(1/pi^2) PV int rho(y) / (x - y) dy for a pointwise profile."""
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        a = 0.5 * xi
        left, _ = integrate.quad(lambda y: profile(np.array([y]))[0] / (xi - y), 0.0, a,
                                 limit=200, epsabs=1e-12, epsrel=1e-10)
        # quad's Cauchy weight integrates f(y) / (y - wvar)
        right, _ = integrate.quad(lambda y: profile(np.array([y]))[0], a, support_end,
                                  weight="cauchy", wvar=xi, limit=200,
                                  epsabs=1e-12, epsrel=1e-10)
        out[i] = (left - right) / pot.PI2
    return out


def internal_stress(k: int, density: DensityGrid, c: Optional[float] = None,
                    use_profile: bool = True) -> StressField:
    """Internal stress at cell centres, signed so that equilibrium reads sigma = 1.

    k = 1:  (1/pi^2) d/dx (log * rho)
    k = 2:  -d/dx (c V(c .) * rho)
    k = 3:  -a rho'
    k = 4:  -(c/rho)^3 V_eff''(c/rho) rho'  =  -d/dx f'(rho)
    On the grid, the convolutions are cell averages of the exact potential of
    the piecewise-constant density, and d/dx is a central difference. For
    k = 1 with a pointwise ``profile`` the principal value integral is
    evaluated by adaptive quadrature instead.
    """
    c = _need_c(k, c)
    x = density.x
    rho = density.rho
    h = density.h
    mask = np.ones(x.size, dtype=bool)
    gcz = None
    if k == 1 and use_profile and density.profile is not None and density.support is not None:
        sup = density.support[1]
        mask = (x > density.support[0]) & (x < sup)
        sigma = np.full(x.size, np.nan)
        sigma[mask] = _pv_log_derivative(density.profile, sup, x[mask])
        return StressField(x, sigma, mask)
    if k in (1, 2):
        op = _interaction_operator(k, c, h, density.m)
        sigma = -np.gradient(op.apply(rho) / h, h)
    elif k == 3:
        sigma = -A_INT * np.gradient(rho, h)
    elif k == 4:
        mask = rho > 0
        sigma = -np.gradient(f4_prime(rho, c), h)
        sigma[~mask] = np.nan
        gcz = gcz_stress(density)
    else:
        raise ValueError("internal stress is defined for k = 1..4")
    return StressField(x, sigma, mask, gcz)


def gcz_stress(density: DensityGrid) -> np.ndarray:
    """The comparison stress -rho'/rho on cells with rho > 0 (NaN elsewhere)."""
    rho = density.rho
    d = np.gradient(rho, density.h)
    out = np.full(rho.size, np.nan)
    pos = rho > 0
    out[pos] = -d[pos] / rho[pos]
    return out


def el_residual(k: int, density: DensityGrid, c: Optional[float] = None,
                exclude: int = 2, use_profile: bool = True) -> float:
    """sup |sigma_int - 1| over the support, dropping ``exclude`` cells at each edge."""
    if k == 5:
        raise ValueError("no internal stress for k = 5")
    st = internal_stress(k, density, c, use_profile=use_profile)
    if density.support is not None:
        sup = (density.x > density.support[0]) & (density.x < density.support[1])
    else:
        sup = density.support_cells()
    idx = np.flatnonzero(sup & st.mask)
    if idx.size <= 2 * exclude:
        raise ValueError("support too small for the requested edge exclusion")
    # drop cells at both ends of every contiguous run of the support
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [idx.size - 1]))
    keep = np.ones(idx.size, dtype=bool)
    for s0, e0 in zip(starts, ends):
        keep[s0:s0 + exclude] = False
        keep[max(e0 - exclude + 1, 0):e0 + 1] = False
    sel = idx[keep]
    return float(np.max(np.abs(st.sigma[sel] - 1.0)))
