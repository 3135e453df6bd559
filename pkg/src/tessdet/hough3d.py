"""Iterative 3D Hough transform for straight trajectories in (x, y, t) point sets.

Lines use the Roberts parameterization: a unit direction ``b`` taken from a
subdivided icosahedron, plus the coordinates ``(x', y')`` where the line
crosses the plane through the origin perpendicular to ``b``. Each point votes
once per direction into an ``(n_dirs, nb, nb)`` accumulator. The strongest
cell proposes a line; its nearby points are refit by orthogonal least
squares, gathered again around the refit line, recorded, and their votes
withdrawn before the next round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import DegenerateInputError, DetectionUnitResult

__all__ = [
    "HoughParams",
    "TrajectoryLine",
    "Accumulator",
    "AccumulatorTooLarge",
    "tessellate_directions",
    "canonical",
    "roberts_xy",
    "roberts_anchor",
    "bounding_diagonal",
    "vote",
    "orthogonal_lsq",
    "points_close_to_line",
    "extract_lines",
    "extract_trajectories",
]

DIRECTION_CHUNK = 64


class AccumulatorTooLarge(MemoryError):
    pass


@dataclass(frozen=True)
class HoughParams:
    """Extraction settings.

    ``inlier_tolerance=None`` uses ``grid_step``. ``time_scale`` multiplies the
    t coordinate before any geometry. Accumulators up to ``dense_limit`` cells
    are dense arrays, larger ones (up to ``memory_cap``) are sparse.
    """

    tessellation_level: int = 4
    grid_step: float = 4.0
    min_votes: int = 20
    min_points: int = 20
    inlier_tolerance: float | None = None
    time_scale: float = 1.0
    memory_cap: int = 2**30
    dense_limit: int = 2**26

    def __post_init__(self):
        if not 0 <= self.tessellation_level <= 6:
            raise ValueError(f"tessellation level must lie in [0, 6], got {self.tessellation_level}")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if self.min_votes < 1:
            raise ValueError("min_votes must be >= 1")
        if self.min_points < 2:
            raise ValueError("min_points must be >= 2")
        if self.inlier_tolerance is not None and not self.inlier_tolerance > 0:
            raise ValueError("inlier_tolerance must be positive")
        if not self.time_scale > 0:
            raise ValueError("time_scale must be positive")

    @property
    def tolerance(self) -> float:
        return self.grid_step if self.inlier_tolerance is None else self.inlier_tolerance


@dataclass
class TrajectoryLine:
    """An extracted line.

    ``anchor`` and ``direction`` live in the centred, time-scaled frame used
    for voting (``anchor`` is the line point nearest that frame's origin);
    ``offset`` maps it back, so the line is ``offset + anchor + s * direction``
    in time-scaled coordinates. ``inliers`` are the original input points.
    """

    anchor: np.ndarray
    direction: np.ndarray
    inliers: np.ndarray
    indices: np.ndarray
    votes: int
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __len__(self) -> int:
        return len(self.inliers)


# -- directions ------------------------------------------------------------------


def canonical(b) -> np.ndarray:
    """Flip ``b`` into the half-space z > 0 (ties broken by y, then x)."""
    b = np.array(b, dtype=np.float64)
    flat = b.reshape(-1, 3)
    x, y, z = flat[:, 0], flat[:, 1], flat[:, 2]
    keep = (z > 0) | ((z == 0) & ((y > 0) | ((y == 0) & (x > 0))))
    flat[~keep] *= -1
    return b


def _icosahedron() -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    phi = (1 + math.sqrt(5)) / 2
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return verts / np.linalg.norm(verts, axis=1, keepdims=True), faces


def icosphere_vertices(level: int) -> np.ndarray:
    """All ``10 * 4**level + 2`` vertices of the subdivided unit icosahedron."""
    verts, faces = _icosahedron()
    points = [v for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = points[i] + points[j]
                points.append(m / np.linalg.norm(m))
                cache[key] = len(points) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(points)


@lru_cache(maxsize=8)
def _directions(level: int) -> np.ndarray:
    if not 0 <= level <= 6:
        raise ValueError(f"tessellation level must lie in [0, 6], got {level}")
    verts = icosphere_vertices(level)
    # Snap round-off so antipodal partners canonicalize to the same vector.
    verts[np.abs(verts) < 1e-12] = 0.0
    can = canonical(verts)
    _, first = np.unique(np.round(can, 9), axis=0, return_index=True)
    out = can[np.sort(first)]
    out.setflags(write=False)
    return out


def tessellate_directions(level: int) -> np.ndarray:
    """Unoriented unit directions from an icosahedron subdivided ``level`` times.

    Antipodal vertex pairs collapse to one canonical vector, so the result has
    ``(10 * 4**level + 2) / 2`` rows.
    """
    return _directions(level).copy()


# -- Roberts parameterization -----------------------------------------------------


def _basis(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    beta = 1.0 / (1.0 + bz)
    u = np.stack([1 - bx * bx * beta, -bx * by * beta, -bx], axis=-1)
    v = np.stack([-bx * by * beta, 1 - by * by * beta, -by], axis=-1)
    return u, v


def roberts_xy(p, b) -> tuple:
    """Plane coordinates ``(x', y')`` of the line through ``p`` with direction ``b``."""
    p = np.asarray(p, dtype=np.float64)
    u, v = _basis(np.asarray(b, dtype=np.float64))
    xp = (p * u).sum(axis=-1)
    yp = (p * v).sum(axis=-1)
    if np.ndim(xp) == 0:
        return float(xp), float(yp)
    return xp, yp


def roberts_anchor(xp, yp, b) -> np.ndarray:
    """Point of the line ``(x', y', b)`` nearest the origin."""
    u, v = _basis(np.asarray(b, dtype=np.float64))
    return np.asarray(xp)[..., None] * u + np.asarray(yp)[..., None] * v


def bounding_diagonal(points) -> float:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise DegenerateInputError("bounding diagonal of an empty point set")
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


# -- accumulator ------------------------------------------------------------------


class Accumulator:
    """Vote counts over (direction, x' cell, y' cell).

    Dense storage is an ``int64`` array; sparse storage keeps sorted cell keys
    with their counts. Both report the same maxima, with ties going to the
    lowest (direction, x', y') index.
    """

    def __init__(self, directions: np.ndarray, diagonal: float, step: float, dense: bool):
        self.directions = directions
        self.diagonal = diagonal
        self.step = step
        self.bins = max(1, math.ceil(diagonal / step))
        self.dense = dense
        if dense:
            self._counts = np.zeros(self.size, dtype=np.int64)
        else:
            self._keys = np.zeros(0, dtype=np.int64)
            self._counts = np.zeros(0, dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.directions), self.bins, self.bins)

    @property
    def size(self) -> int:
        return len(self.directions) * self.bins * self.bins

    def cells(self, points: np.ndarray, dirs: slice = slice(None)) -> np.ndarray:
        """Flat cell index of every (direction, point) pair, shape ``(n_dirs, n_points)``."""
        b = self.directions[dirs]
        u, v = _basis(b)
        half = self.diagonal / 2
        ix = np.floor((points @ u.T + half) / self.step).astype(np.int64).T
        iy = np.floor((points @ v.T + half) / self.step).astype(np.int64).T
        np.clip(ix, 0, self.bins - 1, out=ix)
        np.clip(iy, 0, self.bins - 1, out=iy)
        k = np.arange(len(self.directions))[dirs][:, None]
        return (k * self.bins + ix) * self.bins + iy

    def _apply(self, points: np.ndarray, sign: int) -> None:
        n = len(self.directions)
        for s in range(0, n, DIRECTION_CHUNK):
            flat = self.cells(points, slice(s, s + DIRECTION_CHUNK)).ravel()
            if self.dense:
                lo = s * self.bins * self.bins
                hi = min(s + DIRECTION_CHUNK, n) * self.bins * self.bins
                self._counts[lo:hi] += sign * np.bincount(flat - lo, minlength=hi - lo)
            else:
                keys, cnt = np.unique(flat, return_counts=True)
                self._merge(keys, sign * cnt)

    def _merge(self, keys: np.ndarray, cnt: np.ndarray) -> None:
        allk = np.concatenate([self._keys, keys])
        allc = np.concatenate([self._counts, cnt])
        uk, inv = np.unique(allk, return_inverse=True)
        summed = np.zeros(len(uk), dtype=np.int64)
        np.add.at(summed, inv, allc)
        nz = summed != 0
        self._keys, self._counts = uk[nz], summed[nz]

    def add(self, points: np.ndarray) -> None:
        self._apply(points, +1)

    def remove(self, points: np.ndarray) -> None:
        self._apply(points, -1)

    def total(self) -> int:
        return int(self._counts.sum())

    def argmax(self) -> tuple[int, tuple[int, int, int]]:
        if self._counts.size == 0:
            return 0, (0, 0, 0)
        i = int(np.argmax(self._counts))
        votes = int(self._counts[i])
        flat = i if self.dense else int(self._keys[i])
        return votes, tuple(int(v) for v in np.unravel_index(flat, self.shape))

    def to_dense(self) -> np.ndarray:
        if self.dense:
            return self._counts.reshape(self.shape).copy()
        out = np.zeros(self.size, dtype=np.int64)
        out[self._keys] = self._counts
        return out.reshape(self.shape)

    def cell_line(self, k: int, ix: int, iy: int) -> tuple[np.ndarray, np.ndarray]:
        """Anchor and direction of the line through the centre of a cell."""
        half = self.diagonal / 2
        b = self.directions[k]
        xp = -half + (ix + 0.5) * self.step
        yp = -half + (iy + 0.5) * self.step
        return roberts_anchor(xp, yp, b), b


def vote(points, directions, params: HoughParams, diagonal: float | None = None) -> Accumulator:
    """Cast every centred point's votes; the x'/y' range is ``[-d/2, d/2]`` with ``d`` the bounding diagonal."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    d = bounding_diagonal(pts) if diagonal is None else diagonal
    bins = max(1, math.ceil(d / params.grid_step))
    cells = len(directions) * bins * bins
    if cells > params.memory_cap:
        raise AccumulatorTooLarge(
            f"accumulator needs {cells} cells (cap {params.memory_cap}); "
            "raise grid_step or lower tessellation_level"
        )
    acc = Accumulator(np.asarray(directions, dtype=np.float64), d, params.grid_step, cells <= params.dense_limit)
    acc.add(pts)
    return acc


# -- fitting ----------------------------------------------------------------------


def orthogonal_lsq(points) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line: centroid and dominant eigenvector of the scatter matrix."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 2:
        raise DegenerateInputError("a line fit needs at least two points")
    centroid = pts.mean(axis=0)
    dev = pts - centroid
    scatter = dev.T @ dev
    if not np.any(scatter):
        raise DegenerateInputError("all points are identical; direction is undefined")
    _, vecs = np.linalg.eigh(scatter)
    return centroid, canonical(vecs[:, -1])


def _distances(points: np.ndarray, anchor: np.ndarray, direction: np.ndarray) -> np.ndarray:
    rel = points - anchor
    along = rel @ direction
    return np.linalg.norm(rel - along[:, None] * direction, axis=1)


def points_close_to_line(points, anchor, direction, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Points within orthogonal distance ``tol`` (inclusive) of the line, and their indices."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    idx = np.flatnonzero(_distances(pts, np.asarray(anchor, float), np.asarray(direction, float)) <= tol)
    return pts[idx], idx


def extract_lines(points, params: HoughParams = HoughParams()) -> list[TrajectoryLine]:
    """Extract lines until the best cell has fewer than ``min_votes`` votes or a candidate has too few points."""
    raw = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(raw) == 0:
        return []
    geo = raw * np.array([1.0, 1.0, params.time_scale])
    # The bounding-box centre keeps every |x'|, |y'| within d/2.
    offset = (geo.min(axis=0) + geo.max(axis=0)) / 2
    pts = geo - offset
    acc = vote(pts, _directions(params.tessellation_level), params)
    tol = params.tolerance
    remaining = np.arange(len(pts))
    lines = []
    while len(remaining):
        votes, cell = acc.argmax()
        if votes < params.min_votes:
            break
        anchor, b = acc.cell_line(*cell)
        _, near = points_close_to_line(pts[remaining], anchor, b, tol)
        if len(near) < params.min_points:
            break
        centroid, b = orthogonal_lsq(pts[remaining[near]])
        _, near = points_close_to_line(pts[remaining], centroid, b, tol)
        if len(near) < params.min_points:
            break
        idx = remaining[near]
        acc.remove(pts[idx])
        remaining = np.delete(remaining, near)
        anchor = centroid - (centroid @ b) * b
        lines.append(TrajectoryLine(anchor, b, raw[idx], idx, votes, offset.copy()))
    return lines


def extract_trajectories(
    result: DetectionUnitResult, params: HoughParams = HoughParams(), pre_threshold: float = 0.0
) -> tuple[DetectionUnitResult, list[TrajectoryLine]]:
    """Keep only detections lying on straight (x, y, T) trajectories.

    Pixels with raw ``P > pre_threshold`` become points ``(x, y, T)``. The
    cleaned result is 255 on the inliers of every extracted line, 0 elsewhere,
    with T copied at the kept pixels.
    """
    if result.thresholded:
        raise ValueError("trajectory extraction needs the raw (unthresholded) P matrix")
    ys, xs = np.nonzero(result.position > pre_threshold)
    pts = np.column_stack([xs, ys, result.time[ys, xs]]).astype(np.float64)
    lines = extract_lines(pts, params)
    pos = np.zeros(result.shape)
    tim = np.zeros(result.shape, dtype=np.int64)
    for line in lines:
        lx = line.inliers[:, 0].astype(np.int64)
        ly = line.inliers[:, 1].astype(np.int64)
        pos[ly, lx] = 255.0
        tim[ly, lx] = result.time[ly, lx]
    return DetectionUnitResult(pos, tim, thresholded=True), lines
