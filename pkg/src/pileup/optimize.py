"""Minimization and gradient flow of the discrete energies.

The solver works in gap variables g_i = x_i - x_{i-1} >= floor, where the
ordered cone becomes a box and the energy stays convex (cases 2-4).
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import discrete
from .discrete import Regime, RegimeLike, SingularEnergyError

log = logging.getLogger(__name__)


class StagnationError(RuntimeError):
    """The gradient-flow time step underflowed."""


@dataclass
class SolveOptions:
    grad_tol: float = 1e-8
    max_iters: int = 200_000
    initial: Union[None, str, np.ndarray] = None  # None/"uniform" or explicit positions
    shrink: float = 0.5
    armijo: float = 1e-4
    memory: int = 10  # L-BFGS pairs; 0 gives plain projected gradient descent
    gap_floor: float = 1e-14
    epsilon: Optional[float] = None  # pair-sum truncation, None = exact

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.shrink < 1 or not 0 < self.armijo < 1:
            raise ValueError("line search parameters must lie in (0, 1)")


@dataclass
class SolveResult:
    x: np.ndarray
    energy: float
    iterations: int
    converged: bool
    grad_norm: float
    energies: np.ndarray = field(repr=False)
    message: str = ""


def initial_configuration(n: int, rule: Union[None, str, np.ndarray] = None) -> np.ndarray:
    """Uniform spacing x_i = i/n unless explicit positions are given."""
    if rule is None or (isinstance(rule, str) and rule == "uniform"):
        return np.arange(1, n + 1, dtype=float) / n
    if isinstance(rule, str):
        raise ValueError(f"unknown initial rule {rule!r}")
    x = discrete.check_configuration(rule, n)
    if np.any(np.diff(np.concatenate(([0.0], x))) <= 0):
        raise ValueError("initial configuration must be strictly increasing and positive")
    return x.copy()


def _gap_gradient(gx):
    # dE/dg_m = sum_{i >= m} dE/dx_i
    return np.cumsum(gx[::-1])[::-1]


def _projected(gg, g, floor):
    pg = gg.copy()
    at_floor = g <= floor
    pg[at_floor] = np.minimum(gg[at_floor], 0.0)
    return pg


def _lbfgs_direction(grad, pairs):
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def minimize(regime: RegimeLike, beta_n: float, n: int,
             opts: Optional[SolveOptions] = None) -> SolveResult:
    """Minimize E_n^(k) over 0 < x_1 < ... < x_n.

    Projected descent in gap variables with an Armijo backtracking line
    search; the search direction is the L-BFGS two-loop direction restricted
    to free gaps (``memory=0`` reduces it to the projected gradient). Energy
    decreases are measured with :func:`discrete.energy_difference_gaps`, so the
    recorded energy history is non-increasing.
    """
    opts = opts or SolveOptions()
    reg = Regime.parse(regime)
    floor = opts.gap_floor
    x = initial_configuration(n, opts.initial)
    g = np.diff(np.concatenate(([0.0], x)))

    e0, gx = discrete.energy_and_gradient(reg, x, beta_n, opts.epsilon)
    e = e0
    gg = _gap_gradient(gx)
    pg = _projected(gg, g, floor)
    energies = [e0]
    pairs: deque = deque(maxlen=max(opts.memory, 1))
    step = 1.0
    it = 0
    message = "max_iters reached"
    converged = False

    while True:
        gnorm = float(np.max(np.abs(pg)))
        if gnorm < opts.grad_tol:
            converged = True
            message = "projected gradient below tolerance"
            break
        if it >= opts.max_iters:
            break
        it += 1

        free = ~((g <= floor) & (gg > 0))
        gfree = np.where(free, gg, 0.0)
        if opts.memory > 0 and pairs:
            d = _lbfgs_direction(gfree, list(pairs))
            d[~free] = 0.0
            if d.dot(gfree) >= 0:
                pairs.clear()
                d = -gfree
        else:
            d = -gfree
        if not (opts.memory > 0 and pairs):
            # steepest-descent step: do not move any gap by more than half of itself
            ratio = np.max(np.abs(d) / np.maximum(g, floor))
            t = min(2.0 * step, 0.5 / ratio) if ratio > 0 else 1.0
        else:
            t = 1.0

        accepted = False
        while t > 1e-30:
            dg = np.maximum(g + t * d, floor) - g
            g_new = g + dg  # the exact state whose energy change is measured
            x_new = np.cumsum(g_new)
            try:
                de = discrete.energy_difference_gaps(reg, g, dg, beta_n)
            except SingularEnergyError:
                de = np.inf
            if de <= opts.armijo * gg.dot(dg):
                accepted = True
                break
            t *= opts.shrink
        if not accepted:
            message = "line search failed"
            break

        step = t
        e_new, gx_new = discrete.energy_and_gradient(reg, x_new, beta_n, opts.epsilon)
        gg_new = _gap_gradient(gx_new)
        s_vec = dg
        y_vec = gg_new - gg
        sy = s_vec.dot(y_vec)
        if opts.memory > 0 and sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            pairs.append((s_vec, y_vec, 1.0 / sy))
        energies.append(energies[-1] + min(de, 0.0))
        x, g, e, gg = x_new, g_new, e_new, gg_new
        pg = _projected(gg, g, floor)

    return SolveResult(
        x=x,
        energy=discrete.energy(reg, x, beta_n, epsilon=opts.epsilon),
        iterations=it,
        converged=converged,
        grad_norm=float(np.max(np.abs(pg))),
        energies=np.asarray(energies),
        message=message,
    )


def stationarity_residual(regime: RegimeLike, x, beta_n: float) -> float:
    """Sup-norm of the force balance dE/dx_i at a configuration."""
    return float(np.max(np.abs(discrete.gradient(regime, x, beta_n))))


# ---------------------------------------------------------------------------
# gradient flow


@dataclass
class FlowOptions:
    t_end: float = 100.0
    dt_init: float = 1e-3
    mobility: float = 1.0
    grow: float = 1.25  # dt multiplier after an accepted step
    dt_max: float = np.inf
    dt_min: float = 1e-16
    grad_tol: float = 0.0  # stop early once sup|dE/dx| drops below this
    sample_every: int = 1

    def __post_init__(self):
        if not (self.t_end > 0 and self.dt_init > 0):
            raise ValueError("t_end and dt_init must be positive")
        if not self.mobility > 0:
            raise ValueError("mobility must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    configs: np.ndarray  # sampled configurations, one row per sample
    energies: np.ndarray  # energy after every accepted step (index 0 = start)
    step_times: np.ndarray
    accepted: int
    rejected: int
    stopped: str = "t_end"

    @property
    def final(self) -> np.ndarray:
        return self.configs[-1]


def gradient_flow(regime: RegimeLike, beta_n: float, n: int, x0,
                  opts: Optional[FlowOptions] = None) -> Trajectory:
    """Integrate dx_i/dt = -(1/B) dE/dx_i with adaptive explicit Euler.

    A step is accepted only when it keeps the walls strictly ordered and
    lowers the energy; otherwise dt is halved.
    """
    opts = opts or FlowOptions()
    reg = Regime.parse(regime)
    x = initial_configuration(n, np.asarray(x0, dtype=float))
    t = 0.0
    dt = opts.dt_init
    e, gx = discrete.energy_and_gradient(reg, x, beta_n)
    energies = [e]
    step_times = [0.0]
    times = [0.0]
    configs = [x.copy()]
    accepted = rejected = 0
    reason = "t_end"

    while t < opts.t_end:
        if opts.grad_tol > 0 and np.max(np.abs(gx)) < opts.grad_tol:
            reason = "grad_tol"
            break
        h = min(dt, opts.t_end - t)
        x_new = x - (h / opts.mobility) * gx
        if np.array_equal(x_new, x):
            # the update is below the resolution of the positions
            reason = "stationary"
            break
        ok = x_new[0] > 0 and np.all(np.diff(x_new) > 0)
        if ok:
            de = discrete.energy_difference(reg, x, x_new, beta_n)
            ok = de < 0
        if not ok:
            rejected += 1
            dt *= 0.5
            if dt < opts.dt_min:
                raise StagnationError(f"time step underflow at t={t:.6g}")
            continue
        accepted += 1
        t += h
        x = x_new
        e_new, gx = discrete.energy_and_gradient(reg, x, beta_n)
        energies.append(energies[-1] + de)
        step_times.append(t)
        dt = min(dt * opts.grow, opts.dt_max)
        if accepted % opts.sample_every == 0:
            times.append(t)
            configs.append(x.copy())

    if times[-1] != t:
        times.append(t)
        configs.append(x.copy())
    return Trajectory(
        times=np.asarray(times),
        configs=np.vstack(configs),
        energies=np.asarray(energies),
        step_times=np.asarray(step_times),
        accepted=accepted,
        rejected=rejected,
        stopped=reason,
    )
