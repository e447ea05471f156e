"""Command-line entry point: ``pileup run|minimize|continuum|potential``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import continuum, discrete, experiment, optimize, potential

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_IO = 3


def _write(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def cmd_run(args) -> int:
    spec = experiment.ExperimentSpec.from_json(args.spec)
    result = experiment.run(spec, jobs=args.jobs)
    out = args.out or spec.output
    if out:
        experiment.emit(result, out, formats=tuple(args.format.split(",")))
    else:
        sys.stdout.write(result.to_csv())
    return EXIT_OK if result.all_converged else EXIT_NOT_CONVERGED


def cmd_minimize(args) -> int:
    reg = discrete.Regime.parse(args.regime, args.c)
    opts = optimize.SolveOptions(grad_tol=args.tol, max_iters=args.max_iters)
    res = optimize.minimize(reg, args.beta, args.n, opts)
    payload = {
        "regime": reg.k, "c": reg.c, "n": args.n, "beta": args.beta,
        "energy": res.energy, "iterations": res.iterations, "converged": res.converged,
        "grad_norm": res.grad_norm, "message": res.message, "x": res.x.tolist(),
    }
    _write(json.dumps(payload, indent=1) + "\n", args.out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_continuum(args) -> int:
    k = discrete.Regime.parse(args.regime).k
    if args.closed_form:
        dens = continuum.minimizer_closed_form(k, L=args.L, m=args.m)
        ok = True
    else:
        dens = continuum.minimizer_numerical(
            k, args.c, continuum.ContinuumOptions(m=args.m, L=args.L, tol=args.tol))
        ok = bool(dens.info.get("converged", True))
    _write(experiment.density_csv(dens.x, dens.rho), args.out)
    e = continuum.limit_energy(k, dens, args.c)
    print(f"# k={k} energy={e:.17g} L={dens.L:.6g}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_potential(args) -> int:
    if args.log:
        s = np.geomspace(args.smin, args.smax, args.num)
    else:
        s = np.linspace(args.smin, args.smax, args.num)
    cols = [s, potential.v(s), potential.v_prime(s), potential.v_eff(s), potential.v_hat(s)]
    lines = ["s,V,V_prime,V_eff,V_hat"]
    for row in zip(*cols):
        lines.append(",".join("%.17g" % v for v in row))
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pileup", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec (JSON)")
    r.add_argument("spec")
    r.add_argument("--out", help="output directory (default: spec 'output' or CSV on stdout)")
    r.add_argument("--jobs", type=int, default=None)
    r.add_argument("--format", default="csv,json")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("minimize", help="single discrete minimization")
    m.add_argument("--regime", required=True)
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--beta", type=float, required=True)
    m.add_argument("--c", type=float, default=None)
    m.add_argument("--tol", type=float, default=1e-8)
    m.add_argument("--max-iters", type=int, default=200_000)
    m.add_argument("--out")
    m.set_defaults(func=cmd_minimize)

    c = sub.add_parser("continuum", help="continuum minimizer as x,rho")
    c.add_argument("--regime", required=True)
    c.add_argument("--c", type=float, default=None)
    c.add_argument("--m", type=int, default=2000)
    c.add_argument("--L", type=float, default=None)
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--closed-form", action="store_true")
    c.add_argument("--out")
    c.set_defaults(func=cmd_continuum)

    t = sub.add_parser("potential", help="table of V, V', V_eff and V^")
    t.add_argument("--smin", type=float, default=0.01)
    t.add_argument("--smax", type=float, default=5.0)
    t.add_argument("--num", type=int, default=50)
    t.add_argument("--log", action="store_true")
    t.add_argument("--out")
    t.set_defaults(func=cmd_potential)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"pileup: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (experiment.SpecError, ValueError) as exc:
        print(f"pileup: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
