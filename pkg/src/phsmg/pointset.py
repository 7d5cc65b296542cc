"""Scattered point sets for the model geometries.

Point sets are generated boundary-first: each boundary curve receives
equispaced points (square corners included), a staggered row of points
follows the boundary one layer inside, and the rest of the interior is filled
with a jittered hexagonal lattice from which candidates closer than
``delta_min`` to an accepted point are rejected.  Files use a small whitespace-delimited text format::

    npoints <n> geometry <name> <params...>
    x y tag [nx ny]

with ``tag`` one of ``i`` (interior), ``d`` (Dirichlet boundary) or ``nm``
(Neumann boundary).  ``#`` starts a comment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

_TAG_TO_KIND = {"i": INTERIOR, "d": DIRICHLET, "nm": NEUMANN}
_KIND_TO_TAG = {v: k for k, v in _TAG_TO_KIND.items()}

# Number of points per level for each geometry, coarsest first.
LEVEL_COUNTS = {
    "square": (98, 169, 607, 2535, 10023),
    "annulus": (90, 188, 650, 2581, 10207),
    "square_with_hole": (89, 176, 640, 2532, 10197),
}

MIN_SEPARATION_FACTOR = 0.7
LAYER_SPACING = math.sqrt(3.0) / 2.0
BOUNDARY_LAYERS = 1


class PointSetError(ValueError):
    """Raised for invalid geometries, malformed files or bad point layouts."""


@dataclass(frozen=True)
class Geometry:
    """Geometry descriptor.

    ``name`` is one of ``square``, ``annulus``, ``square_with_hole``.
    ``params`` holds the shape parameters:

    * square: ``(x0, y0, side)``
    * annulus: ``(r_in, r_out)``, centered at the origin
    * square_with_hole: ``(x0, y0, side, cx, cy, radius)``
    """

    name: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        self.validate()

    @classmethod
    def square(cls, x0=0.0, y0=0.0, side=1.0):
        return cls("square", (x0, y0, side))

    @classmethod
    def annulus(cls, r_in=0.5, r_out=1.0):
        return cls("annulus", (r_in, r_out))

    @classmethod
    def square_with_hole(cls, x0=0.0, y0=0.0, side=1.0, cx=0.5, cy=0.5, radius=0.2):
        return cls("square_with_hole", (x0, y0, side, cx, cy, radius))

    @classmethod
    def from_name(cls, name: str) -> Geometry:
        key = name.replace("-", "_").lower()
        if key in ("square_hole", "square_with_hole"):
            return cls.square_with_hole()
        if key == "square":
            return cls.square()
        if key == "annulus":
            return cls.annulus()
        raise PointSetError(f"unknown geometry {name!r}")

    def validate(self):
        nparams = {"square": 3, "annulus": 2, "square_with_hole": 6}
        if self.name not in nparams:
            raise PointSetError(f"unknown geometry {self.name!r}")
        if len(self.params) != nparams[self.name]:
            raise PointSetError(
                f"{self.name} takes {nparams[self.name]} parameters, got {len(self.params)}"
            )
        if not all(math.isfinite(v) for v in self.params):
            raise PointSetError("geometry parameters must be finite")
        if self.name == "annulus":
            r_in, r_out = self.params
            if not 0.0 < r_in < r_out:
                raise PointSetError(f"annulus needs 0 < r_in < r_out, got {r_in}, {r_out}")
        else:
            side = self.params[2]
            if side <= 0.0:
                raise PointSetError("square side must be positive")
            if self.name == "square_with_hole":
                x0, y0, side, cx, cy, rad = self.params
                if rad <= 0.0 or not (
                    x0 + rad < cx < x0 + side - rad and y0 + rad < cy < y0 + side - rad
                ):
                    raise PointSetError("hole must be a circle strictly inside the square")

    @property
    def area(self) -> float:
        if self.name == "square":
            return self.params[2] ** 2
        if self.name == "annulus":
            r_in, r_out = self.params
            return math.pi * (r_out**2 - r_in**2)
        side, rad = self.params[2], self.params[5]
        return side**2 - math.pi * rad**2

    def signed_distance(self, xy: np.ndarray) -> np.ndarray:
        """Distance to the boundary, positive inside the domain."""
        xy = np.atleast_2d(xy)
        x, y = xy[:, 0], xy[:, 1]
        if self.name == "annulus":
            r_in, r_out = self.params
            r = np.hypot(x, y)
            return np.minimum(r - r_in, r_out - r)
        x0, y0, side = self.params[:3]
        d = np.minimum.reduce([x - x0, x0 + side - x, y - y0, y0 + side - y])
        if self.name == "square_with_hole":
            cx, cy, rad = self.params[3:]
            d = np.minimum(d, np.hypot(x - cx, y - cy) - rad)
        return d

    def to_tokens(self) -> list[str]:
        return [self.name] + [repr(float(v)) for v in self.params]


@dataclass(frozen=True, eq=False)
class PointSet:
    """Scattered points with boundary tags and outward unit normals.

    ``normals`` rows are zero for interior points.
    """

    points: np.ndarray
    kind: np.ndarray
    normals: np.ndarray
    geometry: Geometry
    level_id: int = 0
    min_separation: float | None = field(default=None)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        kind = np.ascontiguousarray(self.kind, dtype=np.int8)
        nrm = np.ascontiguousarray(self.normals, dtype=float)
        for arr in (pts, kind, nrm):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.points)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.kind == INTERIOR)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.kind != INTERIOR)

    def with_boundary_kind(self, kind: int) -> PointSet:
        """Copy with every boundary point retagged as ``kind``."""
        new_kind = np.where(self.kind == INTERIOR, INTERIOR, kind).astype(np.int8)
        return PointSet(
            self.points, new_kind, self.normals, self.geometry, self.level_id, self.min_separation
        )

    def equals(self, other: PointSet, atol: float = 1e-15) -> bool:
        return (
            len(self) == len(other)
            and self.geometry == other.geometry
            and np.array_equal(self.kind, other.kind)
            and np.allclose(self.points, other.points, rtol=0.0, atol=atol)
            and np.allclose(self.normals, other.normals, rtol=0.0, atol=atol)
        )


def average_spacing(ps: PointSet) -> float:
    """Average spacing ``sqrt(area / n)``."""
    if len(ps) == 0:
        raise PointSetError("empty point set")
    return math.sqrt(ps.geometry.area / len(ps))


def _circle_points(cx, cy, radius, m, outward_sign, phase):
    theta = 2.0 * np.pi * (np.arange(m) + phase) / m
    c, s = np.cos(theta), np.sin(theta)
    pts = np.column_stack([cx + radius * c, cy + radius * s])
    nrm = outward_sign * np.column_stack([c, s])
    return pts, nrm


def _square_points(x0, y0, side, m):
    # Each side starts at a corner; corner normals bisect the two sides.
    t = np.arange(m) / m * side
    zeros, ones = np.zeros(m), np.ones(m)
    pts = np.vstack(
        [
            np.column_stack([x0 + t, y0 + zeros]),
            np.column_stack([x0 + side + zeros, y0 + t]),
            np.column_stack([x0 + side - t, y0 + side + zeros]),
            np.column_stack([x0 + zeros, y0 + side - t]),
        ]
    )
    nrm = np.vstack(
        [
            np.column_stack([zeros, -ones]),
            np.column_stack([ones, zeros]),
            np.column_stack([zeros, ones]),
            np.column_stack([-ones, zeros]),
        ]
    )
    c = math.sqrt(0.5)
    for j, corner in enumerate([(-c, -c), (c, -c), (c, c), (-c, c)]):
        nrm[j * m] = corner
    return pts, nrm


def _boundary_points(geom: Geometry, h: float):
    if geom.name == "annulus":
        r_in, r_out = geom.params
        parts = [
            _circle_points(0.0, 0.0, r_out, max(int(round(2 * np.pi * r_out / h)), 8), 1.0, 0.0),
            _circle_points(0.0, 0.0, r_in, max(int(round(2 * np.pi * r_in / h)), 8), -1.0, 0.5),
        ]
    else:
        x0, y0, side = geom.params[:3]
        parts = [_square_points(x0, y0, side, max(int(round(side / h)), 2))]
        if geom.name == "square_with_hole":
            cx, cy, rad = geom.params[3:]
            parts.append(
                _circle_points(cx, cy, rad, max(int(round(2 * np.pi * rad / h)), 8), -1.0, 0.0)
            )
    pts = np.vstack([p for p, _ in parts])
    nrm = np.vstack([n for _, n in parts])
    return pts, nrm


def _bounding_box(geom: Geometry):
    if geom.name == "annulus":
        r = geom.params[1]
        return -r, -r, r, r
    x0, y0, side = geom.params[:3]
    return x0, y0, x0 + side, y0 + side


def _interior_candidates(geom: Geometry, h: float, rng: np.random.Generator, jitter: float):
    # Hexagonal lattice with one point per h**2 of area.
    a = h * math.sqrt(2.0 / math.sqrt(3.0))
    dy = a * math.sqrt(3.0) / 2.0
    xmin, ymin, xmax, ymax = _bounding_box(geom)
    ny = int(math.ceil((ymax - ymin) / dy)) + 1
    nx = int(math.ceil((xmax - xmin) / a)) + 2
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    x = xmin + (ii + 0.5 * (jj % 2)) * a
    y = ymin + (jj + 0.5) * dy
    pts = np.column_stack([x.ravel(), y.ravel()])
    # Polar-uniform jitter inside a disk of radius jitter * a.
    rad = jitter * a * np.sqrt(rng.random(len(pts)))
    ang = 2.0 * np.pi * rng.random(len(pts))
    pts = pts + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    return pts


def _greedy_thin(boundary: np.ndarray, cand: np.ndarray, delta_min: float) -> np.ndarray:
    """Drop candidates within ``delta_min`` of boundary points or earlier survivors."""
    if len(cand) == 0:
        return cand
    near_b = cKDTree(boundary).query(cand, k=1)[0] < delta_min
    cand = cand[~near_b]
    keep = np.ones(len(cand), dtype=bool)
    pairs = cKDTree(cand).query_pairs(delta_min, output_type="ndarray")
    if len(pairs):
        pairs = np.sort(pairs, axis=1)
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        for i, j in pairs:
            if keep[i] and keep[j]:
                keep[j] = False
    return cand[keep]


def _layer_points(geom: Geometry, h: float, nlayers: int) -> np.ndarray:
    """Staggered rows parallel to each boundary curve, ``sqrt(3)/2`` spacings apart."""
    out = []
    for k in range(1, nlayers + 1):
        off = k * LAYER_SPACING * h
        if geom.name == "annulus":
            r_in, r_out = geom.params
            circles = [(0.0, 0.0, r_out - off, 0.5 * k), (0.0, 0.0, r_in + off, 0.5 * (k + 1))]
        else:
            x0, y0, side = geom.params[:3]
            m = max(int(round(side / h)), 2)
            t = (np.arange(m + 1) + 0.5 * k) / m * side
            t = t[(t > off) & (t < side - off)]
            lo, hi = off, side - off
            out += [
                np.column_stack([x0 + t, np.full(len(t), y0 + lo)]),
                np.column_stack([x0 + t, np.full(len(t), y0 + hi)]),
                np.column_stack([np.full(len(t), x0 + lo), y0 + t]),
                np.column_stack([np.full(len(t), x0 + hi), y0 + t]),
            ]
            circles = []
            if geom.name == "square_with_hole":
                cx, cy, rad = geom.params[3:]
                circles = [(cx, cy, rad + off, 0.5 * k)]
        for cx, cy, rad, phase in circles:
            if rad <= 0.0:
                continue
            m = max(int(round(2 * np.pi * rad / h)), 6)
            out.append(_circle_points(cx, cy, rad, m, 1.0, phase)[0])
    if not out:
        return np.zeros((0, 2))
    pts = np.vstack(out)
    return pts[geom.signed_distance(pts) > 0.5 * LAYER_SPACING * h]


def _build(geom: Geometry, h: float, seed: int, delta_min: float, jitter: float, nlayers: int):
    rng = np.random.default_rng(seed)
    bpts, bnrm = _boundary_points(geom, h)
    layers = _greedy_thin(bpts, _layer_points(geom, h, nlayers), delta_min)
    cand = _interior_candidates(geom, h, rng, jitter)
    cand = cand[geom.signed_distance(cand) > (nlayers * LAYER_SPACING + 0.5) * h]
    fixed = np.vstack([bpts, layers])
    ipts = np.vstack([layers, _greedy_thin(fixed, cand, delta_min)])
    return ipts, bpts, bnrm


def generate_pointset(
    geometry: Geometry,
    n_target: int,
    seed: int = 0,
    boundary_kind: int = DIRICHLET,
    level_id: int = 0,
    jitter: float = 0.15,
    layers: int = BOUNDARY_LAYERS,
    max_adjust: int = 8,
) -> PointSet:
    """Generate a quasi-uniform point set with about ``n_target`` points.

    The lattice spacing is adjusted a few times so that the final count is
    within 2% of ``n_target`` when possible (always within 10%).
    """
    geometry.validate()
    if n_target < 20:
        raise PointSetError(f"n_target must be >= 20, got {n_target}")
    if boundary_kind not in (DIRICHLET, NEUMANN):
        raise PointSetError("boundary_kind must be DIRICHLET or NEUMANN")
    area = geometry.area
    delta_min = MIN_SEPARATION_FACTOR * math.sqrt(area / n_target)
    h = math.sqrt(area / n_target)
    best = None
    for _ in range(max_adjust):
        ipts, bpts, bnrm = _build(geometry, h, seed, delta_min, jitter, layers)
        count = len(ipts) + len(bpts)
        if best is None or abs(count - n_target) < abs(best[0] - n_target):
            best = (count, ipts, bpts, bnrm)
        if abs(count - n_target) <= 0.02 * n_target:
            break
        h *= math.sqrt(count / n_target)
    count, ipts, bpts, bnrm = best
    if len(ipts) == 0 or abs(count - n_target) > 0.1 * n_target:
        raise PointSetError(f"could not place {n_target} points in {geometry.name}")
    points = np.vstack([ipts, bpts])
    kind = np.concatenate(
        [np.full(len(ipts), INTERIOR), np.full(len(bpts), boundary_kind)]
    ).astype(np.int8)
    normals = np.vstack([np.zeros_like(ipts), bnrm])
    return PointSet(points, kind, normals, geometry, level_id, delta_min)


def check_pointset(ps: PointSet, delta_min: float | None = None, tol: float = 1e-12):
    """Validate the point-set contract, raising :class:`PointSetError`."""
    pts = ps.points
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PointSetError("points must be an (n, 2) array")
    if not np.all(np.isfinite(pts)):
        raise PointSetError("non-finite coordinates")
    bnd = ps.kind != INTERIOR
    norms = np.linalg.norm(ps.normals[bnd], axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
    if len(bad):
        raise PointSetError(f"boundary point {ps.boundary[bad[0]]} lacks a unit normal")
    if ps.geometry is not None:
        outside = np.flatnonzero(ps.geometry.signed_distance(pts) < -1e-9)
        if len(outside):
            raise PointSetError(f"point {outside[0]} lies outside the {ps.geometry.name} domain")
    sep = delta_min if delta_min is not None else 0.0
    pairs = cKDTree(pts).query_pairs(max(sep, 1e-300), output_type="ndarray")
    if len(pairs):
        i, j = sorted(pairs[0])
        raise PointSetError(f"points {i} and {j} are closer than the minimum separation {sep:g}")


def save_pointset(ps: PointSet, path) -> None:
    lines = [f"npoints {len(ps)} geometry {' '.join(ps.geometry.to_tokens())}"]
    for (x, y), k, (nx, ny) in zip(ps.points.tolist(), ps.kind, ps.normals.tolist()):
        tag = _KIND_TO_TAG[int(k)]
        if k == INTERIOR:
            lines.append(f"{x!r} {y!r} {tag}")
        else:
            lines.append(f"{x!r} {y!r} {tag} {nx!r} {ny!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_pointset(path, level_id: int = 0, delta_min: float | None = None) -> PointSet:
    """Read a point-set file.

    ``delta_min`` defaults to zero, i.e. only coincident points are rejected.
    """
    rows = []
    header = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if header is None:
            if len(tok) < 4 or tok[0] != "npoints" or tok[2] != "geometry":
                raise PointSetError(f"{path}:{lineno}: bad header {raw!r}")
            header = tok
            continue
        rows.append((lineno, tok))
    if header is None:
        raise PointSetError(f"{path}: empty file")
    try:
        n = int(header[1])
        geom = Geometry(header[3], tuple(float(v) for v in header[4:]))
    except ValueError as exc:
        raise PointSetError(f"{path}: bad header: {exc}") from exc
    if len(rows) != n:
        raise PointSetError(f"{path}: header declares {n} points, found {len(rows)}")
    pts = np.zeros((n, 2))
    nrm = np.zeros((n, 2))
    kind = np.zeros(n, dtype=np.int8)
    for idx, (lineno, tok) in enumerate(rows):
        if len(tok) < 3 or tok[2] not in _TAG_TO_KIND:
            raise PointSetError(f"{path}:{lineno}: expected 'x y tag [nx ny]'")
        k = _TAG_TO_KIND[tok[2]]
        want = 3 if k == INTERIOR else 5
        if len(tok) != want:
            what = "interior point must not carry" if k == INTERIOR else "boundary point lacks"
            raise PointSetError(f"{path}:{lineno}: {what} a normal")
        try:
            vals = [float(v) for v in tok[:2] + tok[3:]]
        except ValueError as exc:
            raise PointSetError(f"{path}:{lineno}: {exc}") from exc
        pts[idx] = vals[:2]
        if k != INTERIOR:
            nrm[idx] = vals[2:]
        kind[idx] = k
    ps = PointSet(pts, kind, nrm, geom, level_id, delta_min)
    check_pointset(ps, delta_min)
    return ps


def level_pointsets(
    geometry: Geometry,
    boundary_kind: int = DIRICHLET,
    seed: int = 0,
    counts=None,
    jitter: float = 0.15,
    layers: int = BOUNDARY_LAYERS,
) -> list[PointSet]:
    """Independent (non-nested) point sets for every level, coarsest first."""
    if counts is None:
        counts = LEVEL_COUNTS[geometry.name]
    return [
        generate_pointset(geometry, n, seed=seed + 1000 * lvl, boundary_kind=boundary_kind,
                          level_id=lvl, jitter=jitter, layers=layers)
        for lvl, n in enumerate(counts, start=1)
    ]
