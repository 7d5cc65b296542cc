"""Nearest-neighbour interpolation clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .pointset import DIRICHLET, INTERIOR, NEUMANN, PointSet
from .rbf import cloud_size, monomial_count  # noqa: F401  (re-exported)


class CloudError(ValueError):
    pass


@dataclass(frozen=True)
class Cloud:
    center: int
    members: np.ndarray
    level_id: int = 0


def knn(coords: np.ndarray, queries: np.ndarray, k: int, slack: int = 4) -> np.ndarray:
    """Exact k nearest neighbours, ordered by distance then by index.

    Returns an ``(len(queries), k)`` array of row indices into ``coords``.
    """
    n = len(coords)
    if k > n:
        raise CloudError(f"need {k} neighbours but only {n} candidate points")
    kq = min(k + slack, n)
    _, idx = cKDTree(coords).query(queries, k=kq)
    idx = np.asarray(idx).reshape(len(queries), kq)
    # Recompute distances exactly so ties are resolved by index, not by tree order.
    d2 = np.sum((coords[idx] - queries[:, None, :]) ** 2, axis=2)
    order = np.lexsort((idx, d2), axis=-1)[:, :k]
    return np.take_along_axis(idx, order, axis=1).astype(np.int64)


def build_clouds(ps: PointSet, n_members: int) -> list[Cloud]:
    """One cloud per interior point and per Neumann boundary point.

    Interior clouds hold the ``n_members`` nearest points of any kind
    (the center first).  Neumann clouds hold the ``n_members`` nearest
    interior points.  Dirichlet points get no cloud.
    """
    pts = ps.points
    interior = ps.interior
    if len(interior) < n_members:
        raise CloudError(
            f"level {ps.level_id}: {len(interior)} interior points, cloud size {n_members}"
        )
    clouds: list[Cloud] = []
    centers = np.flatnonzero(ps.kind != DIRICHLET)
    int_centers = centers[ps.kind[centers] == INTERIOR]
    neu_centers = centers[ps.kind[centers] == NEUMANN]
    by_center = {}
    if len(int_centers):
        nb = knn(pts, pts[int_centers], n_members)
        for c, row in zip(int_centers, nb):
            by_center[int(c)] = row
    if len(neu_centers):
        nb = interior[knn(pts[interior], pts[neu_centers], n_members)]
        for c, row in zip(neu_centers, nb):
            by_center[int(c)] = row
    for c in centers:
        clouds.append(Cloud(int(c), by_center[int(c)], ps.level_id))
    return clouds
