"""Global sparse Poisson operator on one point set.

Only interior points are unknowns.  Dirichlet values are moved to the
right-hand side; Neumann boundary values are eliminated through their
discrete flux equation, which makes each boundary value an affine function
of interior unknowns (kept as ``recovery`` for later reconstruction).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cloud import Cloud
from .pointset import DIRICHLET, INTERIOR, NEUMANN, PointSet
from .rbf import DegenerateCloudError, LocalSystem

log = logging.getLogger(__name__)


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """Condensed linear system ``A x = b`` over the interior unknowns.

    Attributes
    ----------
    A : scipy.sparse.csr_matrix
        Square operator in the stored (reordered) unknown ordering.
    b : ndarray
        Right-hand side.  For a regularized problem this is the compatible
        right-hand side (see :func:`regularize_all_neumann`).
    unknowns : ndarray of int
        Point index of every matrix row.
    permutation : ndarray of int
        Ordering applied: stored row ``i`` was assembled row ``permutation[i]``.
    neumann_points, recovery, recovery_const
        ``u[neumann_points] = recovery @ x + recovery_const``.
    dirichlet_points, dirichlet_values
        Known boundary values.
    stencils : scipy.sparse.csr_matrix
        Raw Laplacian rows (stored ordering) over all points, before condensation.
    """

    pointset: PointSet
    A: sp.csr_matrix
    b: np.ndarray
    unknowns: np.ndarray
    permutation: np.ndarray
    neumann_points: np.ndarray
    recovery: sp.csr_matrix
    recovery_const: np.ndarray
    dirichlet_points: np.ndarray
    dirichlet_values: np.ndarray
    stencils: sp.csr_matrix
    source: np.ndarray
    degree: int
    p: int
    regularized: bool = False
    b_raw: np.ndarray | None = None
    compat_shift: float = 0.0
    left_null: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return self.pointset.points[self.unknowns]

    @property
    def all_neumann(self) -> bool:
        return len(self.dirichlet_points) == 0 and len(self.neumann_points) > 0

    def full_field(self, x: np.ndarray) -> np.ndarray:
        """Values at every point of the set, boundary values included."""
        u = np.zeros(len(self.pointset))
        u[self.unknowns] = x
        u[self.dirichlet_points] = self.dirichlet_values
        if len(self.neumann_points):
            u[self.neumann_points] = self.recovery @ x + self.recovery_const
        return u

    def sample(self, func) -> np.ndarray:
        """``func(x, y)`` at the unknowns, in stored ordering."""
        c = self.coords
        return np.asarray(func(c[:, 0], c[:, 1]), dtype=float)


def _neumann_flux_row(ps: PointSet, cloud: Cloud, p: int, degree: int):
    b = cloud.center
    members = np.concatenate([[b], cloud.members])
    sys = LocalSystem(ps.points[members], p=p, degree=degree, members=members)
    return sys.normal_derivative_weights(ps.points[b], ps.normals[b])


def assemble_poisson(
    ps: PointSet,
    clouds: list[Cloud],
    source,
    dirichlet=None,
    neumann=None,
    p: int = 1,
    degree: int = 3,
    reorder: bool = True,
) -> DiscreteProblem:
    """Collocate ``lap(u) = source`` at every interior point.

    Parameters
    ----------
    source : callable ``(x, y) -> f``
    dirichlet : callable ``(x, y) -> u``, needed if the set has Dirichlet points
    neumann : callable ``(x, y, nx, ny) -> du/dn``, needed for Neumann points
    """
    pts = ps.points
    interior = ps.interior
    col_of = np.full(len(ps), -1, dtype=np.int64)
    col_of[interior] = np.arange(len(interior))
    dpts = np.flatnonzero(ps.kind == DIRICHLET)
    npts = np.flatnonzero(ps.kind == NEUMANN)
    if len(dpts) and dirichlet is None:
        raise AssemblyError("point set has Dirichlet points but no Dirichlet data")
    if len(npts) and neumann is None:
        raise AssemblyError("point set has Neumann points but no flux data")
    dvals = (
        np.asarray(dirichlet(pts[dpts, 0], pts[dpts, 1]), dtype=float)
        if len(dpts)
        else np.zeros(0)
    )
    known = np.zeros(len(ps))
    known[dpts] = dvals

    cloud_of = {c.center: c for c in clouds}

    # Neumann elimination: u_b = c_b + sum_j r_bj u_j over interior j.
    nrow_of = np.full(len(ps), -1, dtype=np.int64)
    nrow_of[npts] = np.arange(len(npts))
    rec_rows, rec_cols, rec_vals = [], [], []
    rec_const = np.zeros(len(npts))
    if len(npts):
        g = np.asarray(
            neumann(pts[npts, 0], pts[npts, 1], ps.normals[npts, 0], ps.normals[npts, 1]),
            dtype=float,
        )
        for k, bpt in enumerate(npts):
            try:
                row = _neumann_flux_row(ps, cloud_of[int(bpt)], p, degree)
            except DegenerateCloudError as exc:
                raise AssemblyError(f"level {ps.level_id}, Neumann point {bpt}: {exc}") from exc
            wbb = row.weights[0]
            if abs(wbb) < 1e-14 * np.abs(row.weights).max():
                raise AssemblyError(
                    f"level {ps.level_id}, Neumann point {bpt}: zero self weight in flux stencil"
                )
            rec_const[k] = g[k] / wbb
            rec_rows.append(np.full(len(row.weights) - 1, k))
            rec_cols.append(col_of[row.members[1:]])
            rec_vals.append(-row.weights[1:] / wbb)
    recovery = sp.csr_matrix(
        (
            np.concatenate(rec_vals) if rec_vals else np.zeros(0),
            (
                np.concatenate(rec_rows) if rec_rows else np.zeros(0, dtype=int),
                np.concatenate(rec_cols) if rec_cols else np.zeros(0, dtype=int),
            ),
        ),
        shape=(len(npts), len(interior)),
    )

    f = np.asarray(source(pts[interior, 0], pts[interior, 1]), dtype=float)
    b = f.copy()
    rows, cols, vals = [], [], []
    st_rows, st_cols, st_vals = [], [], []
    rec_indptr, rec_ind, rec_dat = recovery.indptr, recovery.indices, recovery.data
    for i, ipt in enumerate(interior):
        cl = cloud_of[int(ipt)]
        try:
            sys = LocalSystem(pts[cl.members], p=p, degree=degree, members=cl.members)
        except DegenerateCloudError as exc:
            raise AssemblyError(f"level {ps.level_id}, interior point {ipt}: {exc}") from exc
        w = sys.laplacian_weights(pts[ipt]).weights
        mem = cl.members
        st_rows.append(np.full(len(mem), i))
        st_cols.append(mem)
        st_vals.append(w)
        kinds = ps.kind[mem]
        sel = kinds == INTERIOR
        rows.append(np.full(sel.sum(), i))
        cols.append(col_of[mem[sel]])
        vals.append(w[sel])
        sel = kinds == DIRICHLET
        if sel.any():
            b[i] -= w[sel] @ known[mem[sel]]
        for j in np.flatnonzero(kinds == NEUMANN):
            k = nrow_of[mem[j]]
            lo, hi = rec_indptr[k], rec_indptr[k + 1]
            rows.append(np.full(hi - lo, i))
            cols.append(rec_ind[lo:hi])
            vals.append(w[j] * rec_dat[lo:hi])
            b[i] -= w[j] * rec_const[k]
    n = len(interior)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    A.sum_duplicates()
    A.sort_indices()
    stencils = sp.csr_matrix(
        (np.concatenate(st_vals), (np.concatenate(st_rows), np.concatenate(st_cols))),
        shape=(n, len(ps)),
    )

    perm = rcm_ordering(A) if reorder else np.arange(n)
    A = permute(A, perm)
    prob = DiscreteProblem(
        pointset=ps,
        A=A,
        b=b[perm],
        unknowns=interior[perm],
        permutation=perm,
        neumann_points=npts,
        recovery=recovery[:, perm].tocsr(),
        recovery_const=rec_const,
        dirichlet_points=dpts,
        dirichlet_values=dvals,
        stencils=stencils[perm].tocsr(),
        source=f[perm],
        degree=degree,
        p=p,
    )
    log.debug("level %d: %d unknowns, nnz %d", ps.level_id, n, A.nnz)
    return prob


def permute(A: sp.spmatrix, perm: np.ndarray) -> sp.csr_matrix:
    A = sp.csr_matrix(A)[perm][:, perm].tocsr()
    A.sort_indices()
    return A


def bandwidth(A: sp.spmatrix) -> int:
    A = sp.coo_matrix(A)
    if A.nnz == 0:
        return 0
    return int(np.max(np.abs(A.row - A.col)))


def rcm_ordering(A: sp.spmatrix) -> np.ndarray:
    """Reverse Cuthill-McKee ordering of the symmetrized sparsity pattern.

    Each connected component starts from its minimum-degree vertex (ties by
    index); neighbours are queued by increasing degree, ties by index.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError("RCM needs a square matrix")
    S = sp.csr_matrix((np.ones(A.nnz), A.indices, A.indptr), shape=A.shape)
    S = (S + S.T).tocsr()
    S.setdiag(0)
    S.eliminate_zeros()
    S.sort_indices()
    deg = np.diff(S.indptr)
    indptr, indices = S.indptr, S.indices
    visited = np.zeros(n, dtype=bool)
    order = []
    by_degree = np.lexsort((np.arange(n), deg))
    for start in by_degree:
        if visited[start]:
            continue
        visited[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            order.append(v)
            nb = indices[indptr[v] : indptr[v + 1]]
            nb = nb[~visited[nb]]
            if len(nb):
                nb = nb[np.lexsort((nb, deg[nb]))]
                visited[nb] = True
                queue.extend(nb.tolist())
    return np.asarray(order[::-1], dtype=np.int64)


def apply(A: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: operator {A.shape}, vector {x.shape}")
    return A @ x


def residual(A: sp.spmatrix, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: operator {A.shape}, rhs {b.shape}")
    return b - apply(A, x)


def left_null_vector(A: sp.spmatrix) -> np.ndarray:
    """Left null vector ``psi`` of a rank-deficient-by-one ``A``, normalized ``sum(psi) = 1``.

    Solves the bordered system ``[[A.T, 1], [1.T, 0]] [psi; mu] = [0; 1]``,
    which is nonsingular when the right null space of ``A`` is the constants.
    """
    n = A.shape[0]
    ones = np.ones((n, 1))
    K = sp.bmat([[sp.csr_matrix(A).T, ones], [ones.T, None]], format="csc")
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    return spla.splu(K).solve(rhs)[:n]


def regularize_all_neumann(prob: DiscreteProblem) -> DiscreteProblem:
    """Fix the constant null space of an all-Neumann problem by ``sum(x) = 0``.

    The zero-sum row is realized as a Lagrange border: the solution of
    ``A x + lam * 1 = b, sum(x) = 0`` solves ``A x = b - lam * 1`` with
    ``lam = psi . b`` for the left null vector ``psi`` (``sum(psi) = 1``).
    The returned problem carries that compatible right-hand side; iterative
    solvers enforce ``sum(x) = 0`` by subtracting the mean of the iterate.
    """
    if len(prob.dirichlet_points):
        raise AssemblyError("regularization applies only to all-Neumann problems")
    if prob.regularized:
        return prob
    b_raw = prob.b if prob.b_raw is None else prob.b_raw
    psi = left_null_vector(prob.A)
    lam = float(psi @ b_raw)
    info = dict(prob.info)
    info["row_sum_max"] = float(np.abs(prob.A @ np.ones(prob.n)).max())
    return replace(
        prob, b=b_raw - lam, b_raw=b_raw, compat_shift=lam, left_null=psi, regularized=True,
        info=info,
    )


def constraint_residual(x: np.ndarray) -> float:
    """Residual of the zero-sum row, ``|sum(x)| / n``."""
    return abs(float(np.sum(x))) / len(x)


def project_zero_mean(x: np.ndarray) -> np.ndarray:
    x -= x.mean()
    return x


def dump_matrix_market(prob: DiscreteProblem, stem) -> None:
    scipy.io.mmwrite(f"{stem}_A.mtx", prob.A)
    scipy.io.mmwrite(f"{stem}_b.mtx", prob.b.reshape(-1, 1))
