"""Manufactured-solution benchmarks: build a hierarchy, solve, measure, report.

A run writes two files into its output directory: ``convergence_<tag>.csv``
(iteration index and relative L1 residual) and ``summary_<tag>.json``.
Error norms are only reported for converged runs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .assembly import DiscreteProblem, assemble_poisson, regularize_all_neumann
from .cloud import build_clouds
from .pointset import (
    DIRICHLET,
    NEUMANN,
    LEVEL_COUNTS,
    Geometry,
    PointSet,
    average_spacing,
    generate_pointset,
    load_pointset,
)
from .rbf import cloud_size
from .solver import (
    LevelHierarchy,
    SolveReport,
    relative_residual_l1,
    solve_ml_gmres,
    solve_multilevel,
)

log = logging.getLogger(__name__)

BC_TYPES = ("dirichlet", "all_neumann")
SOLVERS = ("ml", "ml_gmres")
N_LEVELS = 5


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class ManufacturedCase:
    """``T = cos(k pi x) cos(k pi y)`` with ``lap T = -2 pi^2 k^2 T``."""

    k: int = 1

    def exact(self, x, y):
        w = self.k * np.pi
        return np.cos(w * np.asarray(x)) * np.cos(w * np.asarray(y))

    def source(self, x, y):
        return -2.0 * (self.k * np.pi) ** 2 * self.exact(x, y)

    def gradient(self, x, y):
        w = self.k * np.pi
        x, y = np.asarray(x), np.asarray(y)
        return -w * np.sin(w * x) * np.cos(w * y), -w * np.cos(w * x) * np.sin(w * y)

    def flux(self, x, y, nx, ny):
        gx, gy = self.gradient(x, y)
        return gx * nx + gy * ny


@dataclass(frozen=True)
class BenchmarkConfig:
    geometry: str = "square"
    bc: str = "dirichlet"
    k: int = 1
    degree: int = 3
    coarse_degree: int = 3
    transfer_degree: int = 3
    p: int = 1
    finest_level: int = 5
    coarsest_level: int = 1
    solver: str = "ml"
    nu: int = 5
    nu_coarse: int | None = None
    omega: float = 1.4
    tol: float = 1e-10
    max_cycles: int = 100
    seed: int = 0
    coarse_solver: str = "sor"
    points_files: tuple = ()

    def validate(self) -> BenchmarkConfig:
        try:
            Geometry.from_name(self.geometry)
        except ValueError as exc:
            raise HarnessError(str(exc)) from None
        if self.bc not in BC_TYPES:
            raise HarnessError(f"bc must be one of {BC_TYPES}, got {self.bc!r}")
        if self.solver not in SOLVERS:
            raise HarnessError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.k < 1:
            raise HarnessError("k must be a positive integer")
        for name in ("degree", "coarse_degree", "transfer_degree"):
            if getattr(self, name) < 1:
                raise HarnessError(f"{name} must be >= 1")
        if self.p < 1:
            raise HarnessError("p must be >= 1")
        if not self.points_files and not 1 <= self.coarsest_level <= self.finest_level <= N_LEVELS:
            raise HarnessError(
                f"need 1 <= coarsest_level <= finest_level <= {N_LEVELS}, got "
                f"{self.coarsest_level}..{self.finest_level}"
            )
        if not 0.0 < self.omega < 2.0:
            raise HarnessError("omega must lie in (0, 2)")
        if self.nu < 1 or self.max_cycles < 1:
            raise HarnessError("nu and max_cycles must be positive")
        if not self.tol > 0.0:
            raise HarnessError("tol must be positive")
        return self

    @property
    def tag(self) -> str:
        return (
            f"{Geometry.from_name(self.geometry).name}_{self.bc}_k{self.k}_l{self.degree}"
            f"_L{self.coarsest_level}-{self.finest_level}_{self.solver}"
        )


@lru_cache(maxsize=64)
def level_pointset(geometry: str, level: int, bc: str, seed: int = 0) -> PointSet:
    """Generated set for ``level`` (1-based) at the tabulated count; cached."""
    geom = Geometry.from_name(geometry)
    counts = LEVEL_COUNTS[geom.name]
    if not 1 <= level <= len(counts):
        raise HarnessError(f"level must lie in 1..{len(counts)}, got {level}")
    kind = DIRICHLET if bc == "dirichlet" else NEUMANN
    return generate_pointset(
        geom, counts[level - 1], seed=seed + 1000 * level, boundary_kind=kind, level_id=level
    )


def build_problem(ps: PointSet, case: ManufacturedCase, degree: int, p: int = 1) -> DiscreteProblem:
    """Assemble (and for all-Neumann sets, regularize) the manufactured problem on ``ps``."""
    clouds = build_clouds(ps, cloud_size(degree))
    prob = assemble_poisson(
        ps, clouds, case.source, dirichlet=case.exact, neumann=case.flux, p=p, degree=degree
    )
    if prob.all_neumann:
        prob = regularize_all_neumann(prob)
    return prob


def config_pointsets(config: BenchmarkConfig) -> list[PointSet]:
    if config.points_files:
        kind = DIRICHLET if config.bc == "dirichlet" else NEUMANN
        return [
            load_pointset(path, level_id=i + 1).with_boundary_kind(kind)
            for i, path in enumerate(config.points_files)
        ]
    return [
        level_pointset(config.geometry, lvl, config.bc, config.seed)
        for lvl in range(config.coarsest_level, config.finest_level + 1)
    ]


def build_hierarchy(config: BenchmarkConfig, case: ManufacturedCase | None = None):
    """Problems on every level (finest at ``degree``, coarser at ``coarse_degree``) and transfers."""
    config.validate()
    case = case or ManufacturedCase(config.k)
    sets = config_pointsets(config)
    problems = []
    for i, ps in enumerate(sets):
        deg = config.degree if i == len(sets) - 1 else config.coarse_degree
        try:
            problems.append(build_problem(ps, case, deg, config.p))
        except Exception as exc:
            raise HarnessError(
                f"{config.geometry} level {ps.level_id} ({len(ps)} points): {exc}"
            ) from exc
        log.info("level %d: %d points, %d unknowns, degree %d",
                 ps.level_id, len(ps), problems[-1].n, deg)
    return LevelHierarchy.from_problems(
        problems,
        p=config.p,
        transfer_degree=config.transfer_degree,
        nu=config.nu,
        nu_coarse=config.nu_coarse,
        omega=config.omega,
        coarse_solver=config.coarse_solver,
    )


def error_norm(x: np.ndarray, problem: DiscreteProblem, case: ManufacturedCase) -> float:
    """Relative L1 error over all points, boundary values included.

    For all-Neumann problems both fields are shifted to zero mean first.
    """
    u = problem.full_field(x)
    pts = problem.pointset.points
    te = case.exact(pts[:, 0], pts[:, 1])
    if problem.all_neumann:
        u = u - u.mean()
        te = te - te.mean()
    den = float(np.abs(te).sum())
    num = float(np.abs(u - te).sum())
    return num / den if den > 0.0 else num


def residual_norm(A, x, b) -> float:
    """Relative L1 residual ``sum|b - A x| / sum|b|`` (absolute if ``b = 0``)."""
    b = np.asarray(b, dtype=float)
    if A.shape[1] != len(x) or A.shape[0] != len(b):
        raise ValueError(f"dimension mismatch: operator {A.shape}, x {len(x)}, b {len(b)}")
    return relative_residual_l1(b - A @ x, b)


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    report: SolveReport
    x: np.ndarray
    problem: DiscreteProblem
    error: float | None
    dx: float
    setup_time: float
    files: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.report.converged

    def summary(self) -> dict:
        out = {
            "config": asdict(self.config),
            "converged": self.report.converged,
            "diverged": self.report.diverged,
            "cycles": self.report.cycles,
            "final_residual": self.report.final_residual,
            "error_l1": self.error,
            "dx": self.dx,
            "n_points": len(self.problem.pointset),
            "n_unknowns": self.problem.n,
            "solve_time": self.report.wall_time,
            "setup_time": self.setup_time,
            "solver": self.report.config,
            "error_points": "all points; boundary values from Dirichlet data or flux recovery",
        }
        if self.problem.regularized:
            out["mean"] = float(self.x.mean())
            out["compat_shift"] = self.problem.compat_shift
        return out


def solve(h: LevelHierarchy, config: BenchmarkConfig):
    if config.solver == "ml":
        return solve_multilevel(h, tol=config.tol, max_cycles=config.max_cycles)
    return solve_ml_gmres(h, tol=config.tol, max_iters=config.max_cycles)


def run_benchmark(config: BenchmarkConfig, out=None, hierarchy=None) -> BenchmarkResult:
    """Run one configuration; write CSV and JSON reports into ``out`` if given."""
    config.validate()
    case = ManufacturedCase(config.k)
    t0 = time.perf_counter()
    h = hierarchy if hierarchy is not None else build_hierarchy(config, case)
    setup = time.perf_counter() - t0
    x, rep = solve(h, config)
    prob = h.finest.problem
    err = error_norm(x, prob, case) if rep.converged else None
    res = BenchmarkResult(config, rep, x, prob, err, average_spacing(prob.pointset), setup)
    log.info("%s: cycles=%d converged=%s error=%s", config.tag, rep.cycles, rep.converged, err)
    if out is not None:
        write_reports(res, Path(out))
    return res


def write_reports(res: BenchmarkResult, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    tag = res.config.tag
    conv = out / f"convergence_{tag}.csv"
    with conv.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "relative_residual"])
        for i, r in enumerate(res.report.residual_history):
            w.writerow([i, repr(float(r))])
    summ = out / f"summary_{tag}.json"
    summ.write_text(json.dumps(res.summary(), indent=2) + "\n")
    res.files = {"convergence": str(conv), "summary": str(summ)}
    return res.files


def convergence_slope(dx, err) -> float:
    """Least-squares slope of ``log(err)`` against ``log(dx)``."""
    dx, err = np.asarray(dx, dtype=float), np.asarray(err, dtype=float)
    if len(dx) < 2 or np.any(err <= 0.0):
        return math.nan
    return float(np.polyfit(np.log(dx), np.log(err), 1)[0])


def level_sweep(config: BenchmarkConfig, finest_levels, out=None) -> dict:
    """Solve with each finest level in turn and fit the error-vs-spacing slope."""
    rows = []
    for lvl in finest_levels:
        cfg = replace(config, finest_level=lvl, coarsest_level=min(config.coarsest_level, lvl))
        res = run_benchmark(cfg, out=out)
        rows.append({
            "level": lvl,
            "n_points": len(res.problem.pointset),
            "dx": res.dx,
            "error_l1": res.error,
            "cycles": res.report.cycles,
            "converged": res.converged,
        })
    ok = [r for r in rows if r["converged"]]
    slope = convergence_slope([r["dx"] for r in ok], [r["error_l1"] for r in ok])
    table = {"config": asdict(config), "rows": rows, "slope": slope,
             "all_converged": len(ok) == len(rows)}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"sweep_{Geometry.from_name(config.geometry).name}_{config.bc}_k{config.k}_l{config.degree}"
        with (out / f"{stem}.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "n_points", "dx", "error_l1", "cycles", "converged"])
            for r in rows:
                w.writerow([r[c] for c in ("level", "n_points", "dx", "error_l1", "cycles", "converged")])
        (out / f"{stem}.json").write_text(json.dumps(table, indent=2) + "\n")
    return table
