"""SOR smoothing, non-nested multilevel V-cycles and ML-preconditioned GMRES.

Levels are stored coarsest first.  ``restrictions[l]`` maps level ``l + 1``
residuals to level ``l``; ``prolongations[l]`` maps level ``l`` corrections to
level ``l + 1``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .assembly import DiscreteProblem
from .transfer import PROLONGATION, RESTRICTION, TransferOperator, build_transfer

DIVERGENCE_FACTOR = 1e6


class SolverError(RuntimeError):
    pass


def relative_residual_l1(r: np.ndarray, b: np.ndarray) -> float:
    """``sum|r| / sum|b|``, falling back to ``sum|r|`` when ``b`` vanishes."""
    nb = float(np.abs(b).sum())
    nr = float(np.abs(r).sum())
    return nr / nb if nb > 0.0 else nr


class Smoother:
    """Point SOR on a CSR matrix, sweeping in stored row order."""

    def __init__(self, A: sp.spmatrix, omega: float = 1.4):
        if not 0.0 < omega < 2.0:
            raise ValueError(f"omega must lie in (0, 2), got {omega}")
        A = sp.csr_matrix(A)
        A.sort_indices()
        self.A = A
        self.omega = float(omega)
        self.diag_pos = _kernels.diagonal_positions(A.indptr, A.indices)
        missing = np.flatnonzero(self.diag_pos < 0)
        if len(missing) == 0:
            zero = np.flatnonzero(A.data[self.diag_pos] == 0.0)
            missing = zero
        if len(missing):
            raise SolverError(f"zero diagonal entry in row {missing[0]}")

    def __call__(self, x, b, nsweeps=1, mean_free=False):
        kern = _kernels.sor_sweeps_mean_free if mean_free else _kernels.sor_sweeps
        A = self.A
        return kern(
            A.indptr, A.indices, A.data, self.diag_pos, x, np.asarray(b, dtype=float),
            self.omega, int(nsweeps),
        )


def sor_sweep(A, x, b, omega=1.4, nsweeps=1):
    """``nsweeps`` forward SOR sweeps on ``A x = b``; returns the updated copy of ``x``."""
    x = np.array(x, dtype=float)
    return Smoother(A, omega)(x, b, nsweeps)


@dataclass
class Level:
    problem: DiscreteProblem
    smoother: Smoother
    coarse_lu: object = None

    @property
    def A(self):
        return self.problem.A

    @property
    def mean_free(self) -> bool:
        return self.problem.regularized


@dataclass
class LevelHierarchy:
    levels: list[Level]
    restrictions: list[TransferOperator]
    prolongations: list[TransferOperator]
    nu: int = 5
    nu_coarse: int | None = None
    omega: float = 1.4
    coarse_solver: str = "sor"

    @classmethod
    def from_problems(
        cls,
        problems: list[DiscreteProblem],
        p: int = 1,
        transfer_degree: int = 3,
        transfer_size: int | None = None,
        nu: int = 5,
        nu_coarse: int | None = None,
        omega: float = 1.4,
        coarse_solver: str = "sor",
        restrictions=None,
        prolongations=None,
        include_boundary: bool = True,
    ) -> LevelHierarchy:
        """Stack problems (coarsest first) and precompute all transfers."""
        if coarse_solver not in ("sor", "direct"):
            raise ValueError("coarse_solver must be 'sor' or 'direct'")
        levels = [Level(pb, Smoother(pb.A, omega)) for pb in problems]
        if restrictions is None:
            restrictions = [
                build_transfer(problems[i + 1], problems[i], p, transfer_degree, transfer_size,
                               RESTRICTION, include_boundary)
                for i in range(len(problems) - 1)
            ]
        if prolongations is None:
            prolongations = [
                build_transfer(problems[i], problems[i + 1], p, transfer_degree, transfer_size,
                               PROLONGATION, include_boundary)
                for i in range(len(problems) - 1)
            ]
        h = cls(levels, list(restrictions), list(prolongations), nu, nu_coarse, omega,
                coarse_solver)
        h.check()
        if coarse_solver == "direct":
            h._factor_coarsest()
        return h

    def check(self):
        for i, (R, P) in enumerate(zip(self.restrictions, self.prolongations)):
            nc, nf = self.levels[i].problem.n, self.levels[i + 1].problem.n
            if R.shape != (nc, nf) or P.shape != (nf, nc):
                raise ValueError(f"transfer shapes do not conform between levels {i} and {i + 1}")

    def _factor_coarsest(self):
        lvl = self.levels[0]
        A = lvl.A
        if lvl.mean_free:
            n = A.shape[0]
            ones = np.ones((n, 1))
            A = sp.bmat([[A, ones], [ones.T, None]])
        lvl.coarse_lu = spla.splu(sp.csc_matrix(A))

    @property
    def finest(self) -> Level:
        return self.levels[-1]

    def __len__(self):
        return len(self.levels)


def _compatible(problem: DiscreteProblem, r: np.ndarray) -> np.ndarray:
    # Remove the part of a restricted residual outside the range of a singular A.
    if problem.left_null is not None:
        r = r - float(problem.left_null @ r)
    return r


def _coarse_solve(h: LevelHierarchy, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    lvl = h.levels[0]
    if lvl.coarse_lu is not None:
        if lvl.mean_free:
            sol = lvl.coarse_lu.solve(np.concatenate([b, [0.0]]))[:-1]
        else:
            sol = lvl.coarse_lu.solve(b)
        x[:] = sol
        return x
    nsw = h.nu if h.nu_coarse is None else h.nu_coarse
    return lvl.smoother(x, b, nsw, lvl.mean_free)


def v_cycle(h: LevelHierarchy, level: int, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One V-cycle on ``level`` (0 = coarsest), updating ``x`` in place."""
    if level < 0 or level >= len(h.levels):
        raise IndexError(f"level {level} outside hierarchy of {len(h.levels)}")
    if level == 0:
        return _coarse_solve(h, b, x)
    lvl = h.levels[level]
    lvl.smoother(x, b, h.nu, lvl.mean_free)
    r = b - lvl.A @ x
    coarse = h.levels[level - 1]
    rc = _compatible(coarse.problem, h.restrictions[level - 1] @ r)
    dc = v_cycle(h, level - 1, rc, np.zeros(coarse.problem.n))
    x += h.prolongations[level - 1] @ dc
    if lvl.mean_free:
        x -= x.mean()
    lvl.smoother(x, b, h.nu, lvl.mean_free)
    return x


@dataclass
class SolveReport:
    residual_history: list[float]
    cycles: int
    converged: bool
    diverged: bool = False
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)
    l1_history: list[float] | None = None
    final_residual: float | None = None

    def as_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "converged": self.converged,
            "diverged": self.diverged,
            "wall_time": self.wall_time,
            "final_residual": self.final_residual,
            "config": self.config,
        }


def _rhs(h: LevelHierarchy, b):
    return np.array(h.finest.problem.b if b is None else b, dtype=float)


def solve_multilevel(h: LevelHierarchy, b=None, tol=1e-10, max_cycles=100, x0=None):
    """Repeat V-cycles from the finest level until the L1 relative residual is below ``tol``."""
    t0 = time.perf_counter()
    b = _rhs(h, b)
    top = len(h.levels) - 1
    A = h.finest.A
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    history = [relative_residual_l1(b - A @ x, b)]
    converged = history[0] < tol
    diverged = False
    while not converged and len(history) <= max_cycles:
        v_cycle(h, top, b, x)
        res = relative_residual_l1(b - A @ x, b)
        history.append(res)
        if res < tol:
            converged = True
        elif not np.isfinite(res) or res > DIVERGENCE_FACTOR * history[0]:
            diverged = True
            break
    report = SolveReport(
        residual_history=history,
        cycles=len(history) - 1,
        converged=converged,
        diverged=diverged,
        wall_time=time.perf_counter() - t0,
        config=_config_echo(h, "ml", tol, max_cycles),
        l1_history=history,
        final_residual=history[-1],
    )
    return x, report


def _config_echo(h, solver, tol, max_iters):
    return {
        "solver": solver,
        "levels": [lv.problem.n for lv in h.levels],
        "nu": h.nu,
        "nu_coarse": h.nu if h.nu_coarse is None else h.nu_coarse,
        "omega": h.omega,
        "coarse_solver": h.coarse_solver,
        "tol": tol,
        "max_iters": max_iters,
    }


def gcr(A, b, precond=None, tol=1e-10, max_iters=100, verbatim=False, mean_free=False):
    """Preconditioned minimal-residual Krylov solve with full orthogonalization.

    Search directions ``p_k`` are made ``A^T A``-orthogonal with modified
    Gram-Schmidt on their images ``w_k = A p_k``; the step
    ``alpha = w_k . r / w_k . w_k`` minimizes ``||r - alpha w_k||``, so the
    2-norm residual never increases.  With ``verbatim=True`` the step is
    ``w_k . (A r) / w_k . w_k`` instead, for comparison only.

    Returns ``(x, l2_history, l1_history, converged)``; histories are relative
    to ``b`` and start with 1.
    """
    b = np.asarray(b, dtype=float)
    matvec = (lambda v: A @ v) if not callable(A) else A
    x = np.zeros_like(b)
    r = b.copy()
    nb2 = float(np.linalg.norm(b))
    if nb2 == 0.0:
        return x, [0.0], [0.0], True
    l2 = [1.0]
    l1 = [relative_residual_l1(r, b)]
    dirs, imgs, imgs_nn = [], [], []
    converged = False
    for _ in range(max_iters):
        z = r.copy() if precond is None else precond(r)
        p = np.array(z, dtype=float)
        w = matvec(p)
        for pi, wi, wwi in zip(dirs, imgs, imgs_nn):
            beta = float(wi @ w) / wwi
            p -= beta * pi
            w -= beta * wi
        # Recompute the image so that x and r stay consistent.
        w = matvec(p)
        ww = float(w @ w)
        if ww <= (1e-30 * nb2) ** 2:
            raise SolverError("breakdown: preconditioned direction has no new image (||w|| = 0)")
        alpha = float(w @ (matvec(r) if verbatim else r)) / ww
        x += alpha * p
        r -= alpha * w
        dirs.append(p)
        imgs.append(w)
        imgs_nn.append(ww)
        l2.append(float(np.linalg.norm(r)) / nb2)
        l1.append(relative_residual_l1(r, b))
        if l2[-1] < tol and l1[-1] < tol:
            converged = True
            break
    if mean_free:
        x -= x.mean()
    return x, l2, l1, converged


def solve_ml_gmres(h, b=None, tol=1e-10, max_iters=100, verbatim=False, precond=None):
    """GMRES-type iteration preconditioned by one V-cycle from a zero initial guess.

    ``h`` is a :class:`LevelHierarchy`, or a bare matrix, in which case ``b``
    is required and the preconditioner defaults to the identity.
    ``precond`` overrides the V-cycle (``callable(r) -> z``).
    """
    t0 = time.perf_counter()
    if not isinstance(h, LevelHierarchy):
        if b is None:
            raise ValueError("b is required when solving with a bare matrix")
        A = h
        b = np.array(b, dtype=float)
        x, l2, l1, converged = gcr(A, b, precond, tol=tol, max_iters=max_iters,
                                   verbatim=verbatim)
        report = SolveReport(
            residual_history=l2, cycles=len(l2) - 1, converged=converged,
            wall_time=time.perf_counter() - t0,
            config={"solver": "gmres", "tol": tol, "max_iters": max_iters},
            l1_history=l1, final_residual=relative_residual_l1(b - A @ x, b),
        )
        return x, report
    b = _rhs(h, b)
    top = len(h.levels) - 1
    A = h.finest.A
    if precond is None:
        def precond(r):
            return v_cycle(h, top, r, np.zeros_like(r))
    x, l2, l1, converged = gcr(
        A, b, precond, tol=tol, max_iters=max_iters, verbatim=verbatim,
        mean_free=h.finest.mean_free,
    )
    report = SolveReport(
        residual_history=l2,
        cycles=len(l2) - 1,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        config=_config_echo(h, "ml_gmres", tol, max_iters),
        l1_history=l1,
        final_residual=relative_residual_l1(b - A @ x, b),
    )
    return x, report
