"""Experiment specs, discrete-vs-continuum sweeps and result persistence."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import continuum, discrete, measures, optimize
from .discrete import Regime

log = logging.getLogger(__name__)

CSV_HEADER = ["n", "beta", "energy_discrete", "energy_continuum", "w1", "el_residual", "iters", "converged"]

BETA_RULES = ("c/n", "c", "1/sqrt(n)", "c/sqrt(n)", "c/(n*sqrt(n))", "constant", "explicit")


class SpecError(ValueError):
    pass


def _fmt(v: float) -> str:
    return "%.17g" % v


@dataclass
class ExperimentSpec:
    regime: int
    n_list: List[int]
    beta_rule: str
    c: Optional[float] = None
    beta: Optional[float] = None  # for beta_rule "constant"
    betas: Optional[List[float]] = None  # for beta_rule "explicit"
    solver: dict = field(default_factory=dict)  # SolveOptions fields
    grid: dict = field(default_factory=dict)  # ContinuumOptions fields
    output: Optional[str] = None
    seed: int = 0
    jitter: float = 0.0  # relative random perturbation of the initial gaps
    jobs: int = 1

    def __post_init__(self):
        self.regime = Regime.parse(self.regime).k
        if not self.n_list:
            raise SpecError("n_list must be nonempty")
        self.n_list = [int(n) for n in self.n_list]
        if any(n < 1 for n in self.n_list) or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise SpecError("n_list must hold increasing positive integers")
        if self.beta_rule not in BETA_RULES:
            raise SpecError(f"unknown beta_rule {self.beta_rule!r}; expected one of {BETA_RULES}")
        if "c" in self.beta_rule and self.beta_rule != "explicit" and self.c is None:
            raise SpecError(f"beta_rule {self.beta_rule!r} needs c")
        if self.beta_rule == "constant" and not (self.beta and self.beta > 0):
            raise SpecError("beta_rule 'constant' needs a positive beta")
        if self.beta_rule == "explicit":
            if not self.betas or len(self.betas) != len(self.n_list):
                raise SpecError("beta_rule 'explicit' needs one beta per n")
        if self.c is not None and not self.c > 0:
            raise SpecError("c must be positive")
        k = self.regime
        if k == 2 and self.beta_rule not in ("c/n", "explicit", "constant"):
            raise SpecError("case 2 needs n*beta fixed, e.g. beta_rule 'c/n'")
        if k == 4 and self.beta_rule not in ("c", "constant", "explicit"):
            raise SpecError("case 4 needs beta fixed, e.g. beta_rule 'c'")
        if k in (2, 4) and self.c is None:
            raise SpecError(f"case {k} needs c")
        for n, b in zip(self.n_list, self.beta_values()):
            if k == 2 and abs(n * b - self.c) > 1e-9 * self.c:
                raise SpecError(f"n*beta={n * b} does not match c={self.c}")
            if k == 4 and abs(b - self.c) > 1e-9 * self.c:
                raise SpecError(f"beta={b} does not match c={self.c}")
            if k == 5:
                discrete.alpha(b)
        if self.jobs < 1:
            raise SpecError("jobs must be >= 1")
        optimize.SolveOptions(**self.solver)
        continuum.ContinuumOptions(**self.grid)

    def beta_for(self, i: int) -> float:
        n = self.n_list[i]
        rule = self.beta_rule
        c = self.c
        if rule == "c/n":
            return c / n
        if rule == "c":
            return c
        if rule == "1/sqrt(n)":
            return 1.0 / math.sqrt(n)
        if rule == "c/sqrt(n)":
            return c / math.sqrt(n)
        if rule == "c/(n*sqrt(n))":
            return c / (n * math.sqrt(n))
        if rule == "constant":
            return float(self.beta)
        return float(self.betas[i])

    def beta_values(self) -> List[float]:
        return [self.beta_for(i) for i in range(len(self.n_list))]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise SpecError(f"unknown spec keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NRecord:
    n: int
    beta: float
    x: List[float]
    energy_discrete: float
    energy_continuum: float
    w1: float
    el_residual: float  # sup-norm of the discrete force balance at the minimizer
    iters: int
    converged: bool
    message: str = ""
    density_x: List[float] = field(default_factory=list)
    density_rho: List[float] = field(default_factory=list)


@dataclass
class ContinuumRecord:
    k: int
    c: Optional[float]
    L: float
    x: List[float]
    rho: List[float]
    energy: float
    el_residual: Optional[float]


@dataclass
class RunResult:
    spec: dict
    records: List[NRecord]
    continuum: ContinuumRecord

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        d = json.loads(text)
        return cls(
            spec=d["spec"],
            records=[NRecord(**r) for r in d["records"]],
            continuum=ContinuumRecord(**d["continuum"]),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow([r.n, _fmt(r.beta), _fmt(r.energy_discrete), _fmt(r.energy_continuum),
                        _fmt(r.w1), _fmt(r.el_residual), r.iters, int(r.converged)])
        return buf.getvalue()


def density_csv(x, rho) -> str:
    buf = io.StringIO()
    buf.write("x,rho\n")
    for a, b in zip(x, rho):
        buf.write(f"{_fmt(a)},{_fmt(b)}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------


def continuum_reference(k: int, c: Optional[float], grid: Optional[dict] = None) -> continuum.DensityGrid:
    """The limit minimizer used as reference: closed form when known."""
    grid = dict(grid or {})
    if k in (1, 3, 5):
        m = grid.get("m", 4000)
        return continuum.minimizer_closed_form(k, L=grid.get("L"), m=m)
    return continuum.minimizer_numerical(k, c, continuum.ContinuumOptions(**grid))


def _initial(n, seed, jitter):
    x = optimize.initial_configuration(n)
    if jitter > 0:
        rng = np.random.default_rng([seed, n])
        g = np.diff(np.concatenate(([0.0], x)))
        g *= 1.0 + jitter * rng.uniform(-1.0, 1.0, n)
        x = np.cumsum(g)
    return x


def _solve_one(args):
    k, c, n, beta, solver, seed, jitter = args
    opts = optimize.SolveOptions(**solver)
    opts.initial = _initial(n, seed, jitter)
    reg = Regime(k, c) if k in (2, 4) else Regime(k)
    res = optimize.minimize(reg, beta, n, opts)
    return res


def run(spec: ExperimentSpec, jobs: Optional[int] = None) -> RunResult:
    """Minimize for every n, compare with the continuum minimizer and collect records."""
    k, c = spec.regime, spec.c
    ref = continuum_reference(k, c, spec.grid)
    e_cont = continuum.limit_energy(k, ref, c)
    try:
        el_cont = continuum.el_residual(k, ref, c) if k in (2, 3, 4) else None
    except ValueError:
        el_cont = None
    cont = ContinuumRecord(k, c, float(ref.L), ref.x.tolist(), ref.rho.tolist(), float(e_cont),
                           None if el_cont is None else float(el_cont))

    betas = spec.beta_values()
    tasks = [(k, c, n, b, spec.solver, spec.seed, spec.jitter) for n, b in zip(spec.n_list, betas)]
    jobs = jobs or spec.jobs
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_solve_one, tasks))
    else:
        results = [_solve_one(t) for t in tasks]

    records = []
    for n, b, res in zip(spec.n_list, betas, results):
        if not res.converged:
            log.warning("n=%d did not converge: %s", n, res.message)
        emp = measures.empirical_from_config(res.x)
        force = optimize.stationarity_residual(k, res.x, b)
        if n >= 3:
            est = measures.density_estimate(res.x)
            dx, dr = est.x.tolist(), est.rho.tolist()
        else:
            dx, dr = [], []
        records.append(NRecord(
            n=n, beta=float(b), x=res.x.tolist(), energy_discrete=float(res.energy),
            energy_continuum=float(e_cont), w1=measures.w1_distance(emp, ref),
            el_residual=force, iters=int(res.iterations), converged=bool(res.converged),
            message=res.message, density_x=dx, density_rho=dr,
        ))
    return RunResult(spec.to_dict(), records, cont)


def emit(result: RunResult, out_dir, formats=("csv", "json")) -> List[str]:
    """Write results.csv / results.json and x,rho density files into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)

    if "csv" in formats:
        put("results.csv", result.to_csv())
    if "json" in formats:
        put("results.json", result.to_json())
    put("continuum_density.csv", density_csv(result.continuum.x, result.continuum.rho))
    for r in result.records:
        if r.density_x:
            put(f"density_n{r.n}.csv", density_csv(r.density_x, r.density_rho))
    return written
