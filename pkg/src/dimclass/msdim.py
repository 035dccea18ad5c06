"""Multi-scale local dimensionality features.

At each scale (a ball *diameter*) the neighbors of a core point are
mean-centered and their 3x3 covariance eigen-decomposed. The eigenvalue
proportions ``p1 >= p2 >= p3`` (summing to one) are mapped into an
equilateral triangle whose corners are pure 1D ``(0, 0)``, pure 2D ``(1, 0)``
and pure 3D ``(1/2, sqrt(3)/2)``. Concatenating the triangle coordinates over
all scales gives a ``2 * Ns`` feature vector ordered ``(x_1, y_1, ..., x_Ns,
y_Ns)`` with scales ascending.

Eigenvalues come from LAPACK's symmetric solver (``numpy.linalg.eigh``),
accurate to roughly machine precision relative to the largest eigenvalue.
Negative eigenvalues produced by rounding are clamped to zero.
"""

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateError
from .pointcloud import CorePointSet, SpatialIndex

logger = logging.getLogger(__name__)

MIN_NEIGHBORS = 3
CORNER_1D = (0.0, 0.0)
CORNER_2D = (1.0, 0.0)
CORNER_3D = (0.5, math.sqrt(3.0) / 2.0)

FEATURE_MAGIC = "dimclass-features"
FEATURE_VERSION = 1


def make_scales(spec) -> np.ndarray:
    """Parse a scale list.

    Accepts a sequence of diameters or a string: either ``"min:step:max"``
    (inclusive, e.g. ``"0.02:0.01:0.20"`` gives 19 scales) or a comma
    separated list.
    """
    if isinstance(spec, str):
        text = spec.strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise DataError(f"scale range must be min:step:max, got {spec!r}")
            lo, step, hi = (float(p) for p in parts)
            if not step > 0 or hi < lo:
                raise DataError(f"invalid scale range {spec!r}")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            values = [round(lo + i * step, 12) for i in range(n)]
        else:
            values = [float(p) for p in text.replace(",", " ").split()]
    else:
        values = [float(v) for v in spec]
    scales = np.asarray(values, dtype=np.float64)
    if scales.ndim != 1 or len(scales) == 0:
        raise DataError("at least one scale is required")
    if not (np.isfinite(scales).all() and (scales > 0).all()):
        raise DataError("scales must be finite and positive")
    if (np.diff(scales) <= 0).any():
        raise DataError("scales must be strictly increasing")
    return scales


def _sorted_eig(cov: np.ndarray):
    """Descending clamped eigenvalues and matching eigenvectors of symmetric 3x3 batches."""
    lam, vec = np.linalg.eigh(cov)
    lam = lam[..., ::-1]
    vec = vec[..., ::-1]
    return np.maximum(lam, 0.0), vec


def _proportions(lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    total = lam.sum(axis=-1)
    ok = total > 0
    p = np.full(lam.shape, np.nan)
    p[ok] = lam[ok] / total[ok, None]
    return p, ok


def eigen_proportions(neighbors) -> np.ndarray:
    """Variance proportions ``(p1, p2, p3)`` of a neighborhood, largest first."""
    pts = np.asarray(neighbors, dtype=np.float64).reshape(-1, 3)
    if len(pts) < MIN_NEIGHBORS:
        raise DegenerateError(f"need at least {MIN_NEIGHBORS} points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    lam, _ = _sorted_eig(cov)
    p, ok = _proportions(lam)
    if not ok:
        raise DegenerateError("neighborhood has zero total variance")
    return p


def barycentric(p) -> np.ndarray:
    """Triangle coordinates of proportions (works on ``(..., 3)`` arrays)."""
    p = np.asarray(p, dtype=np.float64)
    x = p[..., 1] * CORNER_2D[0] + p[..., 2] * CORNER_3D[0]
    y = p[..., 2] * CORNER_3D[1]
    return np.stack([x, y], axis=-1)


@dataclass
class DimFeature:
    """One core point's multi-scale descriptor."""

    scales: np.ndarray
    coords: np.ndarray  # (Ns, 2) triangle coordinates, NaN when unusable
    counts: np.ndarray  # (Ns,) neighbors per scale
    missing: np.ndarray  # (Ns,) True where the scale had < 3 neighbors or no variance
    vertical_angle: float = math.nan
    density: float = math.nan

    @property
    def usable(self) -> bool:
        return bool(np.isfinite(self.coords).all())

    @property
    def vector(self) -> np.ndarray:
        return self.coords.reshape(-1)


def fill_missing_scales(feature: DimFeature) -> DimFeature:
    """Copy coordinates from the nearest larger valid scale into missing ones.

    Missing scales above the largest valid one take the nearest smaller valid
    scale instead. Missing flags are left untouched.
    """
    coords = _fill_rows(feature.coords[None], feature.missing[None])[0]
    if not np.isfinite(coords).all():
        raise DegenerateError("all scales are missing")
    return DimFeature(
        scales=feature.scales,
        coords=coords,
        counts=feature.counts.copy(),
        missing=feature.missing.copy(),
        vertical_angle=feature.vertical_angle,
        density=feature.density,
    )


def _fill_rows(coords: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Vectorized propagation over ``(M, Ns, 2)`` coordinates."""
    out = coords.copy()
    m, ns = missing.shape
    valid = ~missing
    # Nearest valid scale at or above each position, scanning downward.
    up = np.full((m, ns), -1, dtype=np.intp)
    nxt = np.full(m, -1, dtype=np.intp)
    for k in range(ns - 1, -1, -1):
        nxt = np.where(valid[:, k], k, nxt)
        up[:, k] = nxt
    down = np.full((m, ns), -1, dtype=np.intp)
    prev = np.full(m, -1, dtype=np.intp)
    for k in range(ns):
        prev = np.where(valid[:, k], k, prev)
        down[:, k] = prev
    src = np.where(up >= 0, up, down)
    rows = np.arange(m)[:, None]
    has = src >= 0
    out[has] = coords[np.broadcast_to(rows, (m, ns))[has], src[has]]
    out[~has] = np.nan
    # A row with any unrecoverable scale is unusable as a whole.
    out[~has.all(axis=1)] = np.nan
    return out


@dataclass
class FeatureSet:
    """Features for a set of core points, one row per core."""

    scales: np.ndarray
    core_points: np.ndarray  # (M, 3)
    coords: np.ndarray  # (M, Ns, 2), missing scales already filled
    counts: np.ndarray  # (M, Ns) int
    missing: np.ndarray  # (M, Ns) bool
    vertical_angle: np.ndarray  # (M,)
    density: np.ndarray  # (M,)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.core_points)

    @property
    def n_scales(self) -> int:
        return len(self.scales)

    @property
    def usable(self) -> np.ndarray:
        return np.isfinite(self.coords).all(axis=(1, 2))

    def matrix(self) -> np.ndarray:
        """``(M, 2 * Ns)`` feature matrix; unusable rows are NaN."""
        return self.coords.reshape(len(self), -1)

    def row(self, i: int) -> DimFeature:
        return DimFeature(
            scales=self.scales,
            coords=self.coords[i].copy(),
            counts=self.counts[i].copy(),
            missing=self.missing[i].copy(),
            vertical_angle=float(self.vertical_angle[i]),
            density=float(self.density[i]),
        )

    def subset(self, rows) -> "FeatureSet":
        rows = np.asarray(rows)
        return FeatureSet(
            scales=self.scales,
            core_points=self.core_points[rows],
            coords=self.coords[rows],
            counts=self.counts[rows],
            missing=self.missing[rows],
            vertical_angle=self.vertical_angle[rows],
            density=self.density[rows],
            meta=dict(self.meta),
        )

    def select_scales(self, keep) -> "FeatureSet":
        """Restrict to a subset of scale positions (e.g. for single-scale studies)."""
        keep = np.atleast_1d(np.asarray(keep))
        return FeatureSet(
            scales=self.scales[keep],
            core_points=self.core_points,
            coords=self.coords[:, keep],
            counts=self.counts[:, keep],
            missing=self.missing[:, keep],
            vertical_angle=self.vertical_angle,
            density=self.density,
            meta=dict(self.meta),
        )

    @staticmethod
    def concat(sets) -> "FeatureSet":
        sets = list(sets)
        first = sets[0]
        for s in sets[1:]:
            if not np.array_equal(s.scales, first.scales):
                raise DataError("cannot concatenate feature sets with different scales")
        return FeatureSet(
            scales=first.scales,
            core_points=np.concatenate([s.core_points for s in sets]),
            coords=np.concatenate([s.coords for s in sets]),
            counts=np.concatenate([s.counts for s in sets]),
            missing=np.concatenate([s.missing for s in sets]),
            vertical_angle=np.concatenate([s.vertical_angle for s in sets]),
            density=np.concatenate([s.density for s in sets]),
            meta=dict(first.meta),
        )


def _chunk_features(index: SpatialIndex, centers: np.ndarray, scales: np.ndarray, workers: int):
    m, ns = len(centers), len(scales)
    radii = scales / 2.0
    flat, offsets, d2 = index.radius_query_many(centers, radii[-1], workers=workers)
    owner = np.repeat(np.arange(m), np.diff(offsets))
    rel = index.points[flat] - centers[owner]

    coords = np.full((m, ns, 2), np.nan)
    counts = np.zeros((m, ns), dtype=np.int64)
    missing = np.ones((m, ns), dtype=bool)
    normals_z = np.full((m, ns), np.nan)

    for k, r in enumerate(radii):
        sel = d2 <= r * r
        own = owner[sel]
        d = rel[sel]
        n = np.bincount(own, minlength=m)
        counts[:, k] = n
        enough = n >= MIN_NEIGHBORS
        if not enough.any():
            continue
        safe_n = np.maximum(n, 1)
        mean = np.stack([np.bincount(own, weights=d[:, j], minlength=m) for j in range(3)], axis=1)
        mean /= safe_n[:, None]
        c = d - mean[own]
        cov = np.empty((m, 3, 3))
        for a in range(3):
            for b in range(a, 3):
                v = np.bincount(own, weights=c[:, a] * c[:, b], minlength=m) / safe_n
                cov[:, a, b] = v
                cov[:, b, a] = v
        lam, vec = _sorted_eig(cov[enough])
        p, ok = _proportions(lam)
        rows = np.flatnonzero(enough)[ok]
        coords[rows, k] = barycentric(p[ok])
        missing[rows, k] = False
        normals_z[rows, k] = vec[ok, 2, 2]

    largest = np.where(missing, -1, np.arange(ns)).max(axis=1)
    has = largest >= 0
    vertical = np.full(m, np.nan)
    density = np.full(m, np.nan)
    rows = np.flatnonzero(has)
    nz = np.abs(normals_z[rows, largest[has]])
    vertical[rows] = np.arccos(np.minimum(nz, 1.0))
    vol = 4.0 / 3.0 * math.pi * radii[largest[has]] ** 3
    density[rows] = counts[rows, largest[has]] / vol
    filled = _fill_rows(coords, missing)
    return filled, counts, missing, vertical, density


def compute_features_batch(
    index: SpatialIndex,
    cores,
    scales,
    workers: int = 1,
    max_neighbors_per_chunk: int = 4_000_000,
    meta: dict | None = None,
) -> FeatureSet:
    """Features at every core point, neighborhoods drawn from the full scene index.

    Rows are processed in chunks sized from a neighbor-count estimate so memory
    stays bounded; results do not depend on chunking or on ``workers``.
    """
    scales = make_scales(scales)
    if isinstance(cores, CorePointSet):
        centers = cores.points
    else:
        centers = np.asarray(cores, dtype=np.float64).reshape(-1, 3)
    m = len(centers)
    ns = len(scales)

    # Probe a few cores to size chunks against the largest ball's population.
    probe = centers[:: max(1, m // 64)][:64]
    if len(probe):
        _, off, _ = index.radius_query_many(probe, scales[-1] / 2.0, workers=workers)
        mean_n = max(1.0, float(np.diff(off).mean()))
    else:
        mean_n = 1.0
    chunk = int(max(1, min(m, max_neighbors_per_chunk // (4 * mean_n) + 1)))

    coords = np.empty((m, ns, 2))
    counts = np.empty((m, ns), dtype=np.int64)
    missing = np.empty((m, ns), dtype=bool)
    vertical = np.empty(m)
    density = np.empty(m)
    for start in range(0, m, chunk):
        sl = slice(start, min(m, start + chunk))
        coords[sl], counts[sl], missing[sl], vertical[sl], density[sl] = _chunk_features(
            index, centers[sl], scales, workers
        )
    fs = FeatureSet(
        scales=scales,
        core_points=np.array(centers, dtype=np.float64),
        coords=coords,
        counts=counts,
        missing=missing,
        vertical_angle=vertical,
        density=density,
        meta=dict(meta or {}),
    )
    n_bad = int((~fs.usable).sum())
    if n_bad:
        logger.warning("%d of %d core points have no usable scale", n_bad, m)
    return fs


def compute_feature(index: SpatialIndex, center, scales) -> DimFeature:
    """Single-point convenience wrapper; identical to one row of the batch."""
    return compute_features_batch(index, np.asarray(center, dtype=np.float64)[None], scales).row(0)


# -- feature files ---------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def save_features(path, fs: FeatureSet, provenance: dict | None = None) -> None:
    """Write a FeatureSet; ``.npz`` selects the binary container, anything else text."""
    path = Path(path)
    prov = dict(provenance if provenance is not None else fs.meta)
    if path.suffix == ".npz":
        arrays = dict(
            magic=np.array(FEATURE_MAGIC),
            version=np.array(FEATURE_VERSION),
            provenance=np.array(json.dumps(prov, sort_keys=True)),
            scales=fs.scales,
            core_points=fs.core_points,
            coords=fs.coords,
            counts=fs.counts,
            missing=fs.missing,
            vertical_angle=fs.vertical_angle,
            density=fs.density,
        )
        # np.savez stamps entries with the wall clock; a fixed date keeps reruns byte-identical.
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
        return
    ns = fs.n_scales
    cols = ["x", "y", "z"]
    cols += [f"{a}_{k + 1}" for k in range(ns) for a in ("tx", "ty")]
    cols += [f"n_{k + 1}" for k in range(ns)]
    cols += [f"missing_{k + 1}" for k in range(ns)]
    cols += ["vertical_angle", "density"]
    lines = [
        f"# {FEATURE_MAGIC} {FEATURE_VERSION}",
        "# provenance " + json.dumps(prov, sort_keys=True),
        "# scales " + " ".join(_fmt(s) for s in fs.scales),
        f"# cores {len(fs)}",
        "# columns " + " ".join(cols),
    ]
    flat = fs.matrix()
    for i in range(len(fs)):
        parts = [_fmt(v) for v in fs.core_points[i]]
        parts += [_fmt(v) for v in flat[i]]
        parts += [str(int(v)) for v in fs.counts[i]]
        parts += ["1" if v else "0" for v in fs.missing[i]]
        parts += [_fmt(fs.vertical_angle[i]), _fmt(fs.density[i])]
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def load_features(path) -> FeatureSet:
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as z:
            if str(z["magic"]) != FEATURE_MAGIC:
                raise DataError(f"{path}: not a feature file")
            return FeatureSet(
                scales=z["scales"],
                core_points=z["core_points"],
                coords=z["coords"],
                counts=z["counts"],
                missing=z["missing"],
                vertical_angle=z["vertical_angle"],
                density=z["density"],
                meta=json.loads(str(z["provenance"])),
            )
    header = {}
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(" ")
                header.setdefault(key, value)
                continue
            if line.strip():
                rows.append((lineno, line.split()))
    if header.get(FEATURE_MAGIC) is None:
        raise DataError(f"{path}: missing '{FEATURE_MAGIC}' header")
    if int(header[FEATURE_MAGIC]) != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported version {header[FEATURE_MAGIC]}")
    try:
        scales = np.array([float(v) for v in header["scales"].split()])
        n_cores = int(header["cores"])
        meta = json.loads(header.get("provenance", "{}"))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed header ({exc})") from None
    ns = len(scales)
    width = 3 + 2 * ns + ns + ns + 2
    if len(rows) != n_cores:
        raise DataError(f"{path}: header declares {n_cores} cores, found {len(rows)} rows")
    data = np.empty((n_cores, width))
    for i, (lineno, parts) in enumerate(rows):
        if len(parts) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(parts)}")
        try:
            data[i] = [float(v) for v in parts]
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed number") from None
    c = 3
    return FeatureSet(
        scales=scales,
        core_points=data[:, :3].copy(),
        coords=data[:, c : c + 2 * ns].reshape(n_cores, ns, 2).copy(),
        counts=data[:, c + 2 * ns : c + 3 * ns].astype(np.int64),
        missing=data[:, c + 3 * ns : c + 4 * ns] != 0,
        vertical_angle=data[:, -2].copy(),
        density=data[:, -1].copy(),
        meta=meta,
    )
