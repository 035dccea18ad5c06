"""Point storage, exact radius queries, core-point subsampling.

Neighborhoods are closed balls: a point ``p`` belongs to the ball of radius
``r`` around ``c`` iff ``sum((p - c) ** 2) <= r ** 2`` evaluated in float64.
Every query in this module honours that exact predicate; the kd-tree is only
used to produce candidate supersets.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError

logger = logging.getLogger(__name__)

# Relative slack for kd-tree candidate searches; results are re-filtered exactly.
_SLACK = 1e-9


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points; row index is the durable point id."""

    points: np.ndarray
    source: str | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"expected an (N, 3) array, got shape {pts.shape}")
        if len(pts) == 0:
            raise DataError("point cloud is empty")
        if not np.isfinite(pts).all():
            bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
            raise DataError(f"non-finite coordinate at point {bad}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def load_xyz(path) -> PointCloud:
    """Read a whitespace-separated ASCII cloud.

    Only the first three columns are used; blank lines and lines starting with
    ``#`` are skipped. Any other line that does not start with three finite
    numbers raises :class:`DataError` naming its 1-based line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc

    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split(None, 3)
        if len(fields) < 3:
            raise DataError(f"{path}:{lineno}: expected 3 coordinates, got {len(fields)} fields")
        try:
            xyz = (float(fields[0]), float(fields[1]), float(fields[2]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric coordinate in {stripped[:60]!r}") from None
        if not all(math.isfinite(v) for v in xyz):
            raise DataError(f"{path}:{lineno}: non-finite coordinate in {stripped[:60]!r}")
        rows.append(xyz)

    if not rows:
        raise DataError(f"{path}: no valid points")
    return PointCloud(np.array(rows, dtype=np.float64), source=str(path))


class SpatialIndex:
    """Immutable kd-tree over a cloud answering exact closed-ball queries.

    Safe to share between threads: all methods are read-only.
    """

    def __init__(self, points, leafsize: int = 16):
        if isinstance(points, PointCloud):
            points = points.points
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise DataError("index needs a non-empty (N, 3) array")
        pts = pts.copy()
        pts.setflags(write=False)
        self.points = pts
        self.leafsize = leafsize
        self.bbox = (pts.min(axis=0), pts.max(axis=0))
        self._tree = cKDTree(pts, leafsize=leafsize, balanced_tree=False, compact_nodes=True)
        self._coord_scale = float(np.abs(pts).max())

    def __len__(self) -> int:
        return len(self.points)

    def _padded(self, radius):
        return radius * (1.0 + _SLACK) + 1e-12 * self._coord_scale

    def radius_query(self, center, radius: float) -> np.ndarray:
        """Sorted indices of points within ``radius`` of ``center`` (closed ball)."""
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        c = np.asarray(center, dtype=np.float64)
        cand = np.asarray(self._tree.query_ball_point(c, self._padded(radius)), dtype=np.intp)
        if len(cand) == 0:
            return cand
        d2 = ((self.points[cand] - c) ** 2).sum(axis=1)
        return np.sort(cand[d2 <= radius * radius])

    def radius_query_many(self, centers, radius: float, workers: int = 1):
        """Candidate-free batched variant: returns ``(flat_indices, offsets, sq_dists)``.

        Neighbors of center ``i`` are ``flat_indices[offsets[i]:offsets[i+1]]``,
        sorted by index, with squared distances alongside.
        """
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
        lists = self._tree.query_ball_point(
            centers, self._padded(radius), workers=workers, return_sorted=True
        )
        lengths = np.fromiter((len(l) for l in lists), dtype=np.intp, count=len(lists))
        flat = np.fromiter(
            (i for l in lists for i in l), dtype=np.intp, count=int(lengths.sum())
        )
        owner = np.repeat(np.arange(len(centers)), lengths)
        d2 = ((self.points[flat] - centers[owner]) ** 2).sum(axis=1)
        keep = d2 <= radius * radius
        counts = np.bincount(owner[keep], minlength=len(centers))
        offsets = np.zeros(len(centers) + 1, dtype=np.intp)
        np.cumsum(counts, out=offsets[1:])
        return flat[keep], offsets, d2[keep]

    def nearest(self, queries, workers: int = 1) -> np.ndarray:
        """Index of the nearest indexed point for each query; ties go to the lowest index."""
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 1:
            return np.zeros(len(q), dtype=np.intp)
        dist, idx = self._tree.query(q, k=2, workers=workers)
        out = idx[:, 0].astype(np.intp)
        # Near-ties are re-examined with the exact predicate so they resolve by
        # index rather than by tree traversal order.
        close = np.flatnonzero(dist[:, 1] <= self._padded(dist[:, 0]))
        if len(close):
            lists = self._tree.query_ball_point(q[close], self._padded(dist[close, 0]))
            for j, cand in zip(close, lists):
                cand = np.asarray(cand, dtype=np.intp)
                d2 = ((self.points[cand] - q[j]) ** 2).sum(axis=1)
                out[j] = cand[d2 == d2.min()].min()
        return out


def build_index(cloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def radius_query(index: SpatialIndex, center, radius: float) -> np.ndarray:
    return index.radius_query(center, radius)


@dataclass(frozen=True)
class CorePointSet:
    """Subset of a source cloud used as feature-computation sites."""

    indices: np.ndarray
    points: np.ndarray
    d_min: float | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_points(cls, points, d_min=None):
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(indices=np.arange(len(pts)), points=pts, d_min=d_min)


def subsample_min_distance(cloud: PointCloud, d_min: float, index: SpatialIndex | None = None) -> CorePointSet:
    """Greedy spacing filter in file order.

    A point is kept iff no previously kept point lies strictly closer than
    ``d_min``; kept points are therefore pairwise ``>= d_min`` apart and every
    dropped point is within ``d_min`` of a kept one.
    """
    if not d_min > 0:
        raise ValueError(f"d_min must be positive, got {d_min}")
    if index is None:
        index = SpatialIndex(cloud)
    pts = index.points
    tree = index._tree
    r2 = d_min * d_min
    pad = index._padded(d_min)
    suppressed = np.zeros(len(pts), dtype=bool)
    kept = []
    for i in range(len(pts)):
        if suppressed[i]:
            continue
        kept.append(i)
        cand = np.asarray(tree.query_ball_point(pts[i], pad), dtype=np.intp)
        d2 = ((pts[cand] - pts[i]) ** 2).sum(axis=1)
        suppressed[cand[d2 < r2]] = True
    idx = np.asarray(kept, dtype=np.intp)
    logger.info("subsampled %d points to %d cores at d_min=%g", len(pts), len(idx), d_min)
    return CorePointSet(indices=idx, points=pts[idx], d_min=float(d_min))


def nearest_core(core_index: SpatialIndex, p) -> int:
    return int(core_index.nearest(np.asarray(p, dtype=np.float64))[0])


def write_cores(path, cores: CorePointSet, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("# x y z source_index\n")
        for (x, y, z), i in zip(cores.points.tolist(), cores.indices.tolist()):
            fh.write(f"{x!r} {y!r} {z!r} {i}\n")
