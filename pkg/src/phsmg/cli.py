"""Command-line driver.

Exit status is 0 when every run converged, 2 when a run diverged or hit the
iteration limit, and 1 for usage or configuration errors.  Log verbosity is
read from ``PHSMG_LOG_LEVEL`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from dataclasses import replace

from .harness import BenchmarkConfig, HarnessError, level_sweep, run_benchmark
from .solver import SolverError

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2

_GEOMETRIES = {"square": "square", "annulus": "annulus", "square-hole": "square_with_hole",
               "square_with_hole": "square_with_hole"}
_BCS = {"dirichlet": "dirichlet", "neumann": "all_neumann", "all_neumann": "all_neumann"}
_SOLVERS = {"ml": "ml", "gmres-ml": "ml_gmres", "ml_gmres": "ml_gmres", "ml-gmres": "ml_gmres"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_levels(text: str) -> tuple[int | None, int]:
    """``"5"`` -> ``(None, 5)``; ``"3..5"`` -> ``(3, 5)``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if lo > hi:
                raise ValueError
            return lo, hi
        return None, int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be INT or INT..INT, got {text!r}") from None


def _choice(table):
    def conv(text):
        try:
            return table[text]
        except KeyError:
            raise argparse.ArgumentTypeError(
                f"invalid choice {text!r} (choose from {', '.join(table)})"
            ) from None
    return conv


def _common(p: argparse.ArgumentParser, multi: bool):
    nargs = "+" if multi else None
    p.add_argument("--geometry", type=_choice(_GEOMETRIES), default=["square"] if multi else "square",
                   nargs=nargs, help="square | annulus | square-hole")
    p.add_argument("--bc", type=_choice(_BCS), default=["dirichlet"] if multi else "dirichlet",
                   nargs=nargs, help="dirichlet | neumann (all boundaries)")
    p.add_argument("--k", type=int, default=[1] if multi else 1, nargs=nargs, help="wavenumber")
    p.add_argument("--degree", type=int, default=[3] if multi else 3, nargs=nargs,
                   help="appended polynomial degree on the finest level")
    p.add_argument("--p", type=int, default=1, help="PHS exponent, kernel r^(2p+1)")
    p.add_argument("--levels", type=parse_levels, default=(None, 5),
                   help="finest level, or coarsest..finest")
    p.add_argument("--coarsest-level", type=int, default=None)
    p.add_argument("--sweep-levels", action="store_true",
                   help="solve once per finest level in --levels and fit the error slope")
    p.add_argument("--solver", type=_choice(_SOLVERS), default="ml", help="ml | gmres-ml")
    p.add_argument("--sweeps", type=int, default=5, help="SOR sweeps per smoothing step")
    p.add_argument("--coarse-sweeps", type=int, default=None)
    p.add_argument("--coarse-solver", choices=("sor", "direct"), default="sor")
    p.add_argument("--omega", type=float, default=1.4)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-cycles", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points-file", action="append", default=[], metavar="PATH",
                   help="point set for one level, coarsest first (repeatable)")
    p.add_argument("--out", default="results", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phsmg", description="Multilevel PHS-RBF Poisson benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("solve", aliases=["run"], help="single run"), multi=False)
    _common(sub.add_parser("sweep", help="parameter matrix"), multi=True)
    return parser


def _config(args, geometry, bc, k, degree) -> BenchmarkConfig:
    lo, hi = args.levels
    if args.coarsest_level is not None:
        coarsest = args.coarsest_level
    else:
        coarsest = 1 if lo is None else lo
    return BenchmarkConfig(
        geometry=geometry, bc=bc, k=k, degree=degree, p=args.p,
        finest_level=hi, coarsest_level=coarsest, solver=args.solver, nu=args.sweeps,
        nu_coarse=args.coarse_sweeps, omega=args.omega, tol=args.tol,
        max_cycles=args.max_cycles, seed=args.seed, coarse_solver=args.coarse_solver,
        points_files=tuple(args.points_file),
    ).validate()


def _run_one(args, cfg: BenchmarkConfig) -> bool:
    if args.sweep_levels:
        lo, hi = args.levels
        # In sweep mode LO..HI is the range of finest levels; hierarchies start at level 1.
        base = replace(cfg, coarsest_level=1 if args.coarsest_level is None else args.coarsest_level)
        table = level_sweep(base, range(hi if lo is None else lo, hi + 1), out=args.out)
        for r in table["rows"]:
            print(f"level {r['level']}  n={r['n_points']}  dx={r['dx']:.4e}  "
                  f"error={r['error_l1']}  cycles={r['cycles']}")
        print(f"slope {table['slope']:.3f}")
        return table["all_converged"]
    res = run_benchmark(cfg, out=args.out)
    rep = res.report
    status = "converged" if rep.converged else ("diverged" if rep.diverged else "not converged")
    print(json.dumps({
        "run": cfg.tag, "status": status, "cycles": rep.cycles,
        "final_residual": rep.final_residual, "error_l1": res.error, "dx": res.dx,
        "summary": res.files.get("summary"),
    }))
    return rep.converged


def main(argv=None) -> int:
    level = os.environ.get("PHSMG_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("solve", "run"):
            cfgs = [_config(args, args.geometry, args.bc, args.k, args.degree)]
        else:
            cfgs = [
                _config(args, g, b, k, d)
                for g, b, k, d in itertools.product(args.geometry, args.bc, args.k, args.degree)
            ]
        ok = True
        for cfg in cfgs:
            ok &= _run_one(args, cfg)
    except SolverError as exc:
        print(f"phsmg: solver failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (HarnessError, ValueError, OSError) as exc:
        print(f"phsmg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
