"""Local polyharmonic-spline interpolation with appended monomials.

Each cloud gives the symmetric saddle matrix ``D = [[Phi, P], [P.T, 0]]``
built in shifted and scaled local coordinates.  Applying a linear operator
``L`` to the interpolant and evaluating at a point gives a weight row on the
cloud values: ``w = D^{-1} [L phi(x_e); L p(x_e)]`` truncated to the first
``N`` entries (``D`` is symmetric, so no transpose is needed).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

IDENTITY = "identity"
LAPLACIAN = "laplacian"
NORMAL_DERIVATIVE = "normal_derivative"

RCOND_MIN = 1e-12


class DegenerateCloudError(np.linalg.LinAlgError):
    """The local saddle system is singular or numerically rank deficient."""

    def __init__(self, msg, center=None):
        super().__init__(msg if center is None else f"{msg} (cloud center {center})")
        self.center = center


def monomial_count(degree: int, dim: int = 2) -> int:
    """Number of monomials of total degree <= ``degree`` in ``dim`` variables."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    return comb(degree + dim, dim)


def cloud_size(degree: int, dim: int = 2, ratio: float = 2.0) -> int:
    return int(np.ceil(ratio * monomial_count(degree, dim) - 1e-12))


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponent pairs ordered by total degree: 1, x, y, x^2, xy, y^2, ..."""
    ex = np.array(
        [(t - j, j) for t in range(degree + 1) for j in range(t + 1)], dtype=np.int64
    )
    ex.setflags(write=False)
    return ex


def _power_table(v: np.ndarray, degree: int) -> np.ndarray:
    table = np.ones((len(v), degree + 1))
    for k in range(1, degree + 1):
        table[:, k] = table[:, k - 1] * v
    return table


def _tables(xy, degree):
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    return _power_table(xy[:, 0], degree), _power_table(xy[:, 1], degree), monomial_exponents(degree)


def monomials(xy: np.ndarray, degree: int) -> np.ndarray:
    tx, ty, ex = _tables(xy, degree)
    return tx[:, ex[:, 0]] * ty[:, ex[:, 1]]


def monomials_grad(xy: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    tx, ty, ex = _tables(xy, degree)
    ax, ay = ex[:, 0], ex[:, 1]
    dx = ax * tx[:, np.maximum(ax - 1, 0)] * ty[:, ay]
    dy = ay * tx[:, ax] * ty[:, np.maximum(ay - 1, 0)]
    return dx, dy


def monomials_laplacian(xy: np.ndarray, degree: int) -> np.ndarray:
    tx, ty, ex = _tables(xy, degree)
    ax, ay = ex[:, 0], ex[:, 1]
    xx = ax * (ax - 1) * tx[:, np.maximum(ax - 2, 0)] * ty[:, ay]
    yy = ay * (ay - 1) * tx[:, ax] * ty[:, np.maximum(ay - 2, 0)]
    return xx + yy


def phs_kernel(r, p: int = 1):
    """Polyharmonic spline ``r**(2p+1)``."""
    return np.asarray(r, dtype=float) ** (2 * p + 1)


def phs_laplacian(r, p: int = 1, dim: int = 2):
    """Laplacian of ``|x|**(2p+1)`` in ``dim`` dimensions, as a function of ``r``."""
    return (2 * p + 1) * (2 * p + dim - 1) * np.asarray(r, dtype=float) ** (2 * p - 1)


def phs_gradient_factor(r, p: int = 1):
    """``grad phi(|x|) = factor(r) * x``."""
    return (2 * p + 1) * np.asarray(r, dtype=float) ** (2 * p - 1)


@dataclass(frozen=True)
class WeightRow:
    members: np.ndarray
    weights: np.ndarray
    kind: str

    def apply(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values[self.members]))


class LocalSystem:
    """Factorized saddle system for one cloud.

    Parameters
    ----------
    coords : (N, 2) array
        Cloud coordinates.
    p : int
        PHS exponent parameter, kernel ``r**(2p+1)``.
    degree : int
        Appended polynomial degree ``l``.
    center : (2,) array, optional
        Shift origin; defaults to the first cloud point.
    members : array of int, optional
        Global point indices of the cloud, used to label weight rows.
    """

    def __init__(self, coords, p=1, degree=3, center=None, members=None, rcond_min=RCOND_MIN):
        coords = np.asarray(coords, dtype=float)
        n = len(coords)
        m = monomial_count(degree)
        if n < m:
            raise ValueError(f"cloud of {n} points cannot support degree {degree} ({m} monomials)")
        self.p = p
        self.degree = degree
        self.n = n
        self.m = m
        self.center = coords[0].copy() if center is None else np.asarray(center, dtype=float)
        self.members = np.arange(n) if members is None else np.asarray(members)
        rel = coords - self.center
        self.scale = float(np.max(np.linalg.norm(rel, axis=1)))
        if self.scale == 0.0:
            raise DegenerateCloudError("cloud points coincide", self.members[0])
        self.local = rel / self.scale
        diff = self.local[:, None, :] - self.local[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        P = monomials(self.local, degree)
        D = np.zeros((n + m, n + m))
        D[:n, :n] = phs_kernel(dist, p)
        D[:n, n:] = P
        D[n:, :n] = P.T
        self.D = D
        lu, piv, info = lapack.dgetrf(D)
        if info != 0:
            raise DegenerateCloudError("singular saddle matrix", self.members[0])
        anorm = np.abs(D).sum(axis=0).max()
        rcond, info = lapack.dgecon(lu, anorm, norm="1")
        self.rcond = float(rcond)
        if self.rcond < rcond_min:
            raise DegenerateCloudError(
                f"saddle matrix rcond {self.rcond:.2e} below {rcond_min:.0e}", self.members[0]
            )
        self._lu = (lu, piv)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self._lu, rhs, check_finite=False)

    def coefficients(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interpolation coefficients ``(alpha, gamma)`` for cloud data ``f``."""
        sol = self.solve(np.concatenate([np.asarray(f, dtype=float), np.zeros(self.m)]))
        return sol[: self.n], sol[self.n :]

    def evaluate(self, f: np.ndarray, xe) -> float:
        alpha, gamma = self.coefficients(f)
        xl = (np.asarray(xe, dtype=float) - self.center) / self.scale
        r = np.linalg.norm(self.local - xl, axis=1)
        return float(alpha @ phs_kernel(r, self.p) + gamma @ monomials(xl, self.degree)[0])

    def _local_eval(self, xe):
        xl = (np.asarray(xe, dtype=float) - self.center) / self.scale
        rel = xl - self.local
        r = np.linalg.norm(rel, axis=1)
        return xl, rel, r

    def _row(self, rhs, kind):
        return WeightRow(self.members, self.solve(rhs)[: self.n], kind)

    def interpolation_weights(self, xe) -> WeightRow:
        xl, _, r = self._local_eval(xe)
        rhs = np.concatenate([phs_kernel(r, self.p), monomials(xl, self.degree)[0]])
        return self._row(rhs, IDENTITY)

    def laplacian_weights(self, xe) -> WeightRow:
        xl, _, r = self._local_eval(xe)
        rhs = np.concatenate([phs_laplacian(r, self.p), monomials_laplacian(xl, self.degree)[0]])
        return self._row(rhs / self.scale**2, LAPLACIAN)

    def normal_derivative_weights(self, xe, normal) -> WeightRow:
        normal = np.asarray(normal, dtype=float)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise ValueError("normal must be a unit vector")
        xl, rel, r = self._local_eval(xe)
        dx, dy = monomials_grad(xl, self.degree)
        rhs = np.concatenate(
            [phs_gradient_factor(r, self.p) * (rel @ normal), normal[0] * dx[0] + normal[1] * dy[0]]
        )
        return self._row(rhs / self.scale, NORMAL_DERIVATIVE)


def build_local_system(coords, p=1, degree=3, center=None, members=None) -> LocalSystem:
    return LocalSystem(coords, p=p, degree=degree, center=center, members=members)


def interpolation_weights(sys: LocalSystem, xe) -> WeightRow:
    return sys.interpolation_weights(xe)


def laplacian_weights(sys: LocalSystem, xe) -> WeightRow:
    return sys.laplacian_weights(xe)


def normal_derivative_weights(sys: LocalSystem, xe, normal) -> WeightRow:
    return sys.normal_derivative_weights(xe, normal)
