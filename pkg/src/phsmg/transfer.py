"""Restriction and prolongation between non-nested point sets.

Every destination unknown is interpolated from its nearest source points
with a PHS RBF plus monomials of degree ``l_t``.  Both directions are built
the same way, so restriction is not the transpose of prolongation.

By default the source clouds include boundary points.  A residual or
correction on the source level is first extended to all of its points: zero
at Dirichlet points (known values carry no correction, and boundary points
carry no residual), and for prolongated corrections the Neumann recovery rows
give the boundary values from the interior ones.  The operator stored is the
product ``interpolation @ extension``, acting on unknowns only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cloud import knn
from .rbf import LocalSystem, cloud_size

RESTRICTION = "restriction"
PROLONGATION = "prolongation"


@dataclass(frozen=True, eq=False)
class TransferOperator:
    matrix: sp.csr_matrix
    direction: str
    degree: int
    interpolation: sp.csr_matrix | None = None
    extension: sp.csr_matrix | None = None

    def __matmul__(self, v):
        return self.matrix @ v

    @property
    def shape(self):
        return self.matrix.shape


def interpolation_matrix(src: np.ndarray, dst: np.ndarray, p=1, degree=3, n_members=None):
    """Sparse ``(len(dst), len(src))`` PHS interpolation weights."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if n_members is None:
        n_members = cloud_size(degree)
    if n_members > len(src):
        raise ValueError(f"transfer cloud of {n_members} exceeds {len(src)} source points")
    nb = knn(src, dst, n_members)
    vals = np.empty(nb.shape)
    for i, row in enumerate(nb):
        sys = LocalSystem(src[row], p=p, degree=degree, center=dst[i], members=row)
        vals[i] = sys.interpolation_weights(dst[i]).weights
    rows = np.repeat(np.arange(len(dst)), n_members)
    M = sp.csr_matrix((vals.ravel(), (rows, nb.ravel())), shape=(len(dst), len(src)))
    M.sort_indices()
    return M


def extension_matrix(problem, direction: str) -> sp.csr_matrix:
    """Map unknown values of ``problem`` to all of its points.

    Identity on interior points and zero on boundary points, except that for
    prolongation the Neumann points get the homogeneous part of their
    recovery rows (a correction carries no flux data).
    """
    n_all = len(problem.pointset)
    E = sp.csr_matrix(
        (np.ones(problem.n), (problem.unknowns, np.arange(problem.n))), shape=(n_all, problem.n)
    )
    if direction == PROLONGATION and len(problem.neumann_points):
        R = problem.recovery.tocoo()
        E = E + sp.csr_matrix(
            (R.data, (problem.neumann_points[R.row], R.col)), shape=(n_all, problem.n)
        )
    E = E.tocsr()
    E.sort_indices()
    return E


def build_transfer(
    src, dst, p=1, degree=3, n_members=None, direction=None, include_boundary=True
) -> TransferOperator:
    """Transfer from the unknowns of ``src`` to the unknowns of ``dst``.

    ``src`` and ``dst`` are :class:`~phsmg.assembly.DiscreteProblem` objects
    or raw ``(n, 2)`` coordinate arrays (arrays are taken as all-unknown).
    With ``include_boundary=False`` only source unknowns enter the clouds.
    """
    dst_xy = dst if isinstance(dst, np.ndarray) else dst.coords
    n_src = len(src) if isinstance(src, np.ndarray) else src.n
    if direction is None:
        direction = RESTRICTION if len(dst_xy) < n_src else PROLONGATION
    if direction not in (RESTRICTION, PROLONGATION):
        raise ValueError(f"unknown transfer direction {direction!r}")
    if isinstance(src, np.ndarray):
        M = interpolation_matrix(src, dst_xy, p=p, degree=degree, n_members=n_members)
        return TransferOperator(M, direction, degree, M, None)
    if not include_boundary:
        M = interpolation_matrix(src.coords, dst_xy, p=p, degree=degree, n_members=n_members)
        return TransferOperator(M, direction, degree, M, None)
    interp = interpolation_matrix(
        src.pointset.points, dst_xy, p=p, degree=degree, n_members=n_members
    )
    E = extension_matrix(src, direction)
    M = (interp @ E).tocsr()
    M.sort_indices()
    return TransferOperator(M, direction, degree, interp, E)
