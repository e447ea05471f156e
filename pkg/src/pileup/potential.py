"""Wall-wall interaction potential and derived kernels.

All functions accept scalars or numpy arrays and return the same shape.
The potential is

    V(s) = (1/pi) s coth(pi s) - (1/pi^2) log(2 sinh(pi s))
         = (2/pi) |s| / (exp(2 pi |s|) - 1) - (1/pi^2) log(1 - exp(-2 pi |s|)),

an even, positive function with a logarithmic singularity at the origin and
an exponential tail.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PI = np.pi
PI2 = PI * PI
LN2 = np.log(2.0)

#: Total integral of V over the real line, equal to the Fourier transform at zero.
INTEGRAL_V = 1.0 / (3.0 * PI)


class SingularInputError(ValueError):
    """Raised when the potential is evaluated at a coincidence point s = 0."""


class PotentialDomainError(ValueError):
    """Raised when an argument lies outside the domain of a derived kernel."""


def _as_nonzero(s):
    s = np.asarray(s, dtype=float)
    if np.any(s == 0.0):
        raise SingularInputError("V diverges logarithmically at s = 0")
    return s


def _as_positive(s, name="s"):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0.0)):
        raise PotentialDomainError(f"{name} must be strictly positive")
    return s


def _out(x):
    return x.item() if np.ndim(x) == 0 else x


def _log1mexp(x):
    """log(1 - e^{-x}) for x > 0, accurate at both ends."""
    x = np.asarray(x, dtype=float)
    small = x < LN2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(small, np.log(-np.expm1(-np.where(small, x, 1.0))),
                        np.log1p(-np.exp(-np.where(small, 1.0, x))))


def v(s):
    """Interaction energy V(s) for s != 0.

    Evaluated through the exponential form with ``expm1`` so that it is
    accurate to a few ulps over the whole real line; the hyperbolic form
    loses digits to cancellation once s exceeds ~1.
    """
    a = np.abs(_as_nonzero(s))
    with np.errstate(over="ignore"):
        first = (2.0 / PI) * a / np.expm1(2.0 * PI * a)
    return _out(first - _log1mexp(2.0 * PI * a) / PI2)


def v_coth(s):
    """Hyperbolic closed form of V; overflows for |s| > ~225.

    Kept as an independent evaluation route. It suffers cancellation for
    |s| > 1, so use :func:`v` for production work.
    """
    a = np.abs(_as_nonzero(s))
    with np.errstate(over="ignore"):
        return _out(a / (PI * np.tanh(PI * a)) - np.log(2.0 * np.sinh(PI * a)) / PI2)


def v_regular(s):
    """Smooth part R(s) = V(s) + log|s| / pi^2, with R(0) = (1 - log 2 pi)/pi^2."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    out = np.full(a.shape, (1.0 - np.log(2.0 * PI)) / PI2)
    nz = a > 0
    if np.any(nz):
        t = a[nz]
        with np.errstate(over="ignore"):
            first = (2.0 / PI) * t / np.expm1(2.0 * PI * t)
        # log(t / (1 - e^{-2 pi t})) without cancellation
        out[nz] = first - np.log(-np.expm1(-2.0 * PI * t) / t) / PI2
    return _out(out)


def v_prime(s):
    """Force V'(s) = -s / sinh^2(pi s)."""
    s = _as_nonzero(s)
    a = np.abs(s)
    e = np.exp(-2.0 * PI * a)
    em1 = np.expm1(-2.0 * PI * a)
    return _out(-np.sign(s) * 4.0 * a * e / (em1 * em1))


def v_second(s):
    """Stiffness V''(s) = (2 pi s coth(pi s) - 1) / sinh^2(pi s), positive."""
    a = np.abs(_as_nonzero(s))
    e = np.exp(-2.0 * PI * a)
    em1 = -np.expm1(-2.0 * PI * a)  # 1 - e
    coth = (1.0 + e) / em1
    inv_sinh2 = 4.0 * e / (em1 * em1)
    return _out((2.0 * PI * a * coth - 1.0) * inv_sinh2)


# ---------------------------------------------------------------------------
# effective potential V_eff(s) = sum_k V(k s)


def _tail_integral_bound(T):
    """Upper bound for int_T^inf V(t) dt, valid for T > 0.

    Uses V(t) <= e^{-2 pi t} ((2/pi) t + 1/pi^2) / (1 - e^{-2 pi T}) on [T, inf).
    """
    T = np.asarray(T, dtype=float)
    e = np.exp(-2.0 * PI * T)
    poly = ((2.0 / PI) * T + 1.0 / PI2) / (2.0 * PI) + (2.0 / PI) / (4.0 * PI2)
    return e * poly / (-np.expm1(-2.0 * PI * T))


def _tail_cutoff(threshold):
    """Smallest T (to bisection accuracy) with tail bound <= threshold."""
    threshold = np.asarray(threshold, dtype=float)
    lo = np.full(threshold.shape, 1e-3)
    hi = np.full(threshold.shape, 1.0)
    while np.any(_tail_integral_bound(hi) > threshold):
        grow = _tail_integral_bound(hi) > threshold
        hi = np.where(grow, 2.0 * hi, hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ok = _tail_integral_bound(mid) <= threshold
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def veff_terms(s, tol=1e-12, margin=0.0):
    """Number of terms K so that sum_{k>K} V(k s) <= tol (plus ``margin`` in t).

    Since V is decreasing on (0, inf), the tail is bounded by
    (1/s) int_{K s}^inf V.
    """
    s = _as_positive(s)
    T = _tail_cutoff(tol * s) + margin
    return np.maximum(np.ceil(T / s).astype(int), 1)


def _veff_sum(fun, s, tol, power, margin):
    s = _as_positive(s)
    flat = np.atleast_1d(s).ravel()
    K = veff_terms(flat, tol=tol * np.minimum(flat, 1.0) ** power, margin=margin)
    total = np.zeros_like(flat)
    kmax = int(K.max())
    # process in blocks of k to bound memory
    block = max(1, 2_000_000 // max(flat.size, 1))
    for k0 in range(1, kmax + 1, block):
        ks = np.arange(k0, min(kmax, k0 + block - 1) + 1, dtype=float)
        arg = ks[None, :] * flat[:, None]
        live = ks[None, :] <= K[:, None]
        vals = np.where(live, fun(np.where(live, arg, 1.0), ks[None, :]), 0.0)
        total += vals.sum(axis=1)
    return _out(total.reshape(np.shape(s)))


def v_eff(s, tol=1e-12):
    """Effective potential V_eff(s) = sum_{k>=1} V(k s), s > 0.

    The series is truncated at K terms where the certified tail bound drops
    below ``tol``.
    """
    return _veff_sum(lambda t, k: v(t), s, tol, power=0, margin=0.0)


def v_eff_prime(s, tol=1e-12):
    """Termwise derivative sum_k k V'(k s)."""
    return _veff_sum(lambda t, k: k * v_prime(t), s, tol, power=2, margin=2.0)


def v_eff_second(s, tol=1e-12):
    """Termwise second derivative sum_k k^2 V''(k s); strictly positive."""
    return _veff_sum(lambda t, k: k * k * v_second(t), s, tol, power=3, margin=2.0)


# ---------------------------------------------------------------------------
# Fourier side

# coefficients of g'(x)/x for g(x) = x coth x, g'(x)/x = sum c_j x^{2j}
_GPRIME_SERIES = (2.0 / 3.0, -4.0 / 45.0, 12.0 / 945.0, -8.0 / 4725.0, 20.0 / 93555.0)


def v_hat(xi):
    """Fourier transform of V (convention f^(xi) = int e^{-2 pi i xi x} f(x) dx).

    V^(xi) = (1 / (2 pi^2 xi)) d/dxi [xi coth(pi xi)], with V^(0) = 1/(3 pi).
    """
    xi = np.asarray(xi, dtype=float)
    x = PI * np.abs(xi)
    out = np.empty_like(x)
    small = x < 0.15
    if np.any(small):
        x2 = x[small] ** 2
        acc = np.zeros_like(x2)
        for c in reversed(_GPRIME_SERIES):
            acc = acc * x2 + c
        out[small] = acc / (2.0 * PI)
    big = ~small
    if np.any(big):
        xb = x[big]
        e = np.exp(-2.0 * xb)
        one_minus = -np.expm1(-2.0 * xb)
        gprime = (1.0 + e) / one_minus - xb * 4.0 * e / (one_minus * one_minus)
        out[big] = gprime / (2.0 * PI * xb)
    return _out(out)


def v_hat_sampled(xi, dx=1e-5, s_max=10.5):
    """Fourier transform of V from midpoint samples on (0, s_max], using evenness.

    Independent of the closed form; the midpoint offset keeps the samples
    away from the logarithmic singularity, leaving an O(dx) error.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    s = (np.arange(int(round(s_max / dx))) + 0.5) * dx
    vs = v(s)
    out = np.array([2.0 * dx * np.dot(vs, np.cos(2.0 * PI * q * s)) for q in xi.ravel()])
    return _out(out.reshape(xi.shape)) if np.ndim(xi) else out


@dataclass
class KernelSample:
    """Convolution square root W of V sampled on a symmetric uniform grid."""

    x: np.ndarray
    w: np.ndarray
    dx: float
    coarse: bool

    def self_convolution(self):
        """Discrete W * W on the same grid (periodic, centred)."""
        n = self.w.size
        wf = np.fft.fft(np.fft.ifftshift(self.w))
        conv = np.real(np.fft.ifft(wf * wf)) * self.dx
        return np.fft.fftshift(conv)

    def integral(self):
        return float(self.w.sum() * self.dx)


def w_kernel(dx=2.5e-4, n_points=2**18):
    """Sample W = inverse FT of sqrt(V^) on x_j = (j - N/2) dx.

    W has an integrable |x|^{-1/2} singularity at 0 and is only meant for
    verification of V = W * W. ``coarse`` is set when dx > 1e-3, which is
    too coarse to resolve the logarithmic core of V.
    """
    n_points = int(n_points)
    if n_points % 2:
        n_points += 1
    freqs = np.fft.fftfreq(n_points, d=dx)
    u = np.sqrt(v_hat(freqs))
    w = np.fft.fftshift(np.real(np.fft.ifft(u))) / dx
    x = (np.arange(n_points) - n_points // 2) * dx
    return KernelSample(x=x, w=w, dx=float(dx), coarse=bool(dx > 1e-3))


# ---------------------------------------------------------------------------
# tail cutoff and inequalities


@dataclass(frozen=True)
class TailBound:
    epsilon: float
    s_cut: float


def truncation_radius(epsilon, grid=1e-3):
    """Smallest grid point s_cut with V(s_cut) <= epsilon.

    V is decreasing on (0, inf), so every pair farther apart than s_cut
    contributes at most epsilon.
    """
    epsilon = float(epsilon)
    if not epsilon > 0.0:
        raise PotentialDomainError("epsilon must be positive")
    lo, hi = 1e-300, 1.0
    while v(hi) > epsilon:
        hi *= 2.0
    if v(lo) <= epsilon:
        return TailBound(epsilon, grid)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if v(mid) > epsilon:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * hi:
            break
    s_cut = max(np.ceil(hi / grid) * grid, grid)
    while v(s_cut) > epsilon:
        s_cut += grid
    return TailBound(epsilon, float(s_cut))


def log_lower_bound(t):
    """(1 - log 2 pi |t|) / pi^2, a lower bound for V."""
    a = np.abs(_as_nonzero(t))
    return _out((1.0 - np.log(2.0 * PI * a)) / PI2)


def log_upper_bound(t):
    """(1 + 2 pi |t| - log 2 pi |t|) / pi^2, an upper bound for V."""
    a = np.abs(_as_nonzero(t))
    return _out((1.0 + 2.0 * PI * a - np.log(2.0 * PI * a)) / PI2)


def log_bounds_check(t, rtol=8 * np.finfo(float).eps):
    """Return (lower_ok, upper_ok) for the logarithmic sandwich of V at t.

    Near the origin V and its lower bound agree to O(t^2), so the check
    allows ``rtol`` relative slack for floating-point rounding.
    """
    val = np.asarray(v(t))
    lo = np.asarray(log_lower_bound(t))
    hi = np.asarray(log_upper_bound(t))
    slack = rtol * np.maximum(np.abs(val), 1e-300)
    lower_ok = val >= lo - slack
    upper_ok = val <= hi + slack
    if lower_ok.ndim == 0:
        return bool(lower_ok), bool(upper_ok)
    return lower_ok, upper_ok
