"""Deterministic labeled synthetic scenes.

A scene is a ground surface (flat, sinusoidal ripples or fractal roughness)
sampled at a given areal density, plus optional objects:

* vegetation: either uniform balls or composites of a stem (sampled along a
  segment) and a canopy made of small randomly oriented leaf discs;
* boulders: half-buried ellipsoid shells;
* water: noisy quasi-planar sheets replacing the ground in rectangles.

A virtual scanner position enables range-dependent density falloff and
occlusion: ground and water points whose line of sight crosses a vegetation
canopy or boulder are removed, as are boulder points facing away.

Every random draw comes from a substream of ``numpy.random.SeedSequence(seed)``
keyed to the scene component, so identical specs give bit-identical scenes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .pointcloud import PointCloud

GROUND, VEGETATION, BOULDER, WATER = 0, 1, 2, 3
CLASS_NAMES = {GROUND: "ground", VEGETATION: "vegetation", BOULDER: "boulder", WATER: "water"}


@dataclass
class GroundSpec:
    model: str = "flat"  # flat | ripples | fractal
    amplitude: float = 0.0
    wavelength: float = 0.5
    direction_deg: float = 0.0
    hurst: float = 0.8
    noise: float = 0.001
    tilt_deg: float = 0.0


@dataclass
class VegetationSpec:
    count: int = 0
    kind: str = "composite"  # composite | ball
    diameter: tuple = (0.2, 0.5)
    stem_fraction: float = 0.4  # stem height as a fraction of canopy diameter
    leaf_size: float = 0.03
    leaf_area_density: float = 8.0  # m^2 of leaves per m^3 of canopy
    stem_points_per_m: float = 300.0
    ball_density: float = 2.0e5  # points per m^3 for kind=ball
    min_spacing: float = 0.0
    # Grass-like tufts of thin inclined stems, drawn instead of a composite
    # for this fraction of the vegetation objects.
    tuft_fraction: float = 0.0
    tuft_stems: tuple = (4, 10)
    tuft_height: tuple = (0.1, 0.3)
    tuft_spread_deg: float = 35.0


@dataclass
class BoulderSpec:
    count: int = 0
    radii: tuple = (0.3, 0.6)
    flattening: tuple = (0.5, 0.9)


@dataclass
class WaterSpec:
    regions: list = field(default_factory=list)  # [x0, y0, x1, y1] rectangles
    level: float = -0.02
    noise: float = 0.015
    wave_amplitude: float = 0.01
    wave_length: float = 0.7


_TUPLE_FIELDS = {"diameter", "tuft_stems", "tuft_height", "radii", "flattening"}


@dataclass
class SceneSpec:
    seed: int = 0
    extent: tuple = (5.0, 5.0)
    density: float = 4000.0  # points per m^2 on surfaces
    ground: GroundSpec = field(default_factory=GroundSpec)
    vegetation: VegetationSpec = field(default_factory=VegetationSpec)
    boulders: BoulderSpec = field(default_factory=BoulderSpec)
    water: WaterSpec = field(default_factory=WaterSpec)
    scanner: tuple | None = None  # (x, y, z)
    falloff_distance: float | None = None  # full density within this range of the scanner
    occlusion: bool = False
    edge_jitter: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        sub = {"ground": GroundSpec, "vegetation": VegetationSpec, "boulders": BoulderSpec, "water": WaterSpec}
        for key, klass in sub.items():
            if key in d and isinstance(d[key], dict):
                try:
                    fields = {k: tuple(v) if k in _TUPLE_FIELDS else v for k, v in d[key].items()}
                    d[key] = klass(**fields)
                except TypeError as exc:
                    raise DataError(f"invalid scene spec: {exc}") from None
        for key in ("extent", "scanner"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataError(f"invalid scene spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "SceneSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise DataError(f"scene spec not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticScene:
    points: np.ndarray
    labels: np.ndarray
    shadowed: np.ndarray  # positions removed by occlusion (for diagnostics)
    objects: dict

    @property
    def cloud(self) -> PointCloud:
        return PointCloud(self.points)


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def ground_height(spec: SceneSpec, xy: np.ndarray, rng_state=None) -> np.ndarray:
    g = spec.ground
    z = np.tan(math.radians(g.tilt_deg)) * xy[:, 0]
    if g.model == "flat":
        return z
    if g.model == "ripples":
        th = math.radians(g.direction_deg)
        k = 2 * math.pi / g.wavelength
        return z + g.amplitude * np.sin(k * (math.cos(th) * xy[:, 0] + math.sin(th) * xy[:, 1]))
    if g.model == "fractal":
        comps = rng_state if rng_state is not None else _fractal_components(spec)
        for kx, ky, amp, phase in comps:
            z = z + amp * np.sin(kx * xy[:, 0] + ky * xy[:, 1] + phase)
        return z
    raise DataError(f"unknown ground model {g.model!r}")


def _fractal_components(spec: SceneSpec, n: int = 48):
    """Random-phase sinusoids with a power-law amplitude spectrum."""
    g = spec.ground
    rng = _streams(spec.seed, 8)[7]
    kmin = 2 * math.pi / max(spec.extent)
    kmax = 2 * math.pi / 0.02
    ks = np.exp(np.linspace(math.log(kmin), math.log(kmax), n))
    amps = ks ** (-g.hurst)
    amps *= g.amplitude / np.sqrt(0.5 * (amps**2).sum())
    th = rng.uniform(0, 2 * math.pi, n)
    ph = rng.uniform(0, 2 * math.pi, n)
    return [(k * math.cos(t), k * math.sin(t), a, p) for k, t, a, p in zip(ks, th, amps, ph)]


def _random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _in_water(spec, xy):
    inside = np.zeros(len(xy), dtype=bool)
    for x0, y0, x1, y1 in spec.water.regions:
        inside |= (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)
    return inside


def _place(rng, spec, count, radius_of, existing, min_gap=0.0):
    """Non-overlapping centers (rejection sampling, bounded attempts)."""
    ex, ey = spec.extent
    centers, radii = [], []
    attempts = 0
    while len(centers) < count and attempts < 200 * max(count, 1):
        attempts += 1
        r = radius_of(rng)
        c = rng.uniform([r, r], [ex - r, ey - r])
        ok = all(np.hypot(*(c - c2)) >= r + r2 + min_gap for c2, r2 in zip(centers, radii))
        ok = ok and all(np.hypot(*(c - c2)) >= r + r2 + min_gap for c2, r2 in existing)
        if ok and not _in_water(spec, c[None])[0]:
            centers.append(c)
            radii.append(r)
    return list(zip(centers, radii))


def _segment_hits_spheres(P, S, centers, radii):
    """True where the segment P->S passes through any sphere (excluding endpoints' own)."""
    hit = np.zeros(len(P), dtype=bool)
    d = S[None, :] - P
    dd = (d**2).sum(axis=1)
    for c, r in zip(centers, radii):
        f = P - c
        t = np.clip(-(f * d).sum(axis=1) / dd, 0.0, 1.0)
        closest = P + t[:, None] * d
        inside_now = ((P - c) ** 2).sum(axis=1) <= r * r
        hit |= (((closest - c) ** 2).sum(axis=1) < r * r) & ~inside_now & (t > 1e-9)
    return hit


def _segment_hits_ellipsoids(P, S, ellipsoids, skip_self=None):
    """Line-of-sight test against axis-aligned ellipsoids; ``skip_self`` marks each point's own object."""
    hit = np.zeros(len(P), dtype=bool)
    for j, (c, radii) in enumerate(ellipsoids):
        a = (P - c) / radii
        b = (S - c) / radii
        d = b - a
        A = (d**2).sum(axis=1)
        B = 2 * (a * d).sum(axis=1)
        C = (a**2).sum(axis=1) - 1.0
        disc = B * B - 4 * A * C
        ok = disc > 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t1 = (-B - sq) / (2 * A)
        t2 = (-B + sq) / (2 * A)
        eps = 1e-6
        crosses = ok & (((t1 > eps) & (t1 < 1)) | ((t2 > eps) & (t2 < 1)))
        if skip_self is not None:
            # A point on its own shell sits at one root; it is hidden when the
            # other root lies between it and the scanner (it faces away).
            own = skip_self == j
            crosses[own] = ok[own] & (t2[own] > eps) & (t2[own] < 1)
        hit |= crosses
    return hit


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    ex, ey = spec.extent
    if not (ex > 0 and ey > 0):
        raise DataError("scene extent must be positive")
    if not spec.density > 0:
        raise DataError("sampling density must be positive")
    r_ground, r_veg, r_boulder, r_water, r_fall, r_place, r_jit, _ = _streams(spec.seed, 8)
    fractal = _fractal_components(spec) if spec.ground.model == "fractal" else None

    def height(xy):
        return ground_height(spec, xy, fractal)

    # Object placement first so the ground can be carved.
    veg_spec = spec.vegetation
    lo, hi = veg_spec.diameter
    veg = _place(r_place, spec, veg_spec.count, lambda r: r.uniform(lo, hi) / 2, [], veg_spec.min_spacing)
    bs = spec.boulders
    boulders = []
    for c, rad in _place(r_place, spec, bs.count, lambda r: r.uniform(*bs.radii), veg, 0.05):
        flat = r_place.uniform(*bs.flattening)
        rx, ry = rad, rad * r_place.uniform(0.7, 1.0)
        rz = rad * flat
        cz = float(height(c[None])[0])
        boulders.append((np.array([c[0], c[1], cz]), np.array([rx, ry, rz])))

    parts, labels, owners = [], [], []

    n_ground = r_ground.poisson(spec.density * ex * ey)
    xy = r_ground.uniform([0, 0], [ex, ey], size=(n_ground, 2))
    keep = ~_in_water(spec, xy)
    for c, radii in boulders:
        keep &= ((xy - c[:2]) ** 2 / radii[:2] ** 2).sum(axis=1) > 1.0
    xy = xy[keep]
    z = height(xy) + r_ground.normal(0, spec.ground.noise, len(xy))
    parts.append(np.c_[xy, z])
    labels.append(np.full(len(xy), GROUND))
    owners.append(np.full(len(xy), -1))

    w = spec.water
    for x0, y0, x1, y1 in w.regions:
        n = r_water.poisson(spec.density * (x1 - x0) * (y1 - y0))
        wxy = r_water.uniform([x0, y0], [x1, y1], size=(n, 2))
        k = 2 * math.pi / w.wave_length
        wz = w.level + w.wave_amplitude * np.sin(k * wxy[:, 0]) * np.cos(0.7 * k * wxy[:, 1])
        wz = wz + r_water.normal(0, w.noise, n)
        parts.append(np.c_[wxy, wz])
        labels.append(np.full(n, WATER))
        owners.append(np.full(n, -1))

    canopy_spheres = []
    is_tuft = r_veg.random(len(veg)) < veg_spec.tuft_fraction
    for (c, r), tuft in zip(veg, is_tuft):
        base = float(height(c[None])[0])
        if tuft:
            n_st = int(r_veg.integers(veg_spec.tuft_stems[0], veg_spec.tuft_stems[1] + 1))
            roots = np.c_[c + r_veg.uniform(-0.5, 0.5, (n_st, 2)) * r, np.full(n_st, base)]
            tilt = np.radians(r_veg.uniform(0, veg_spec.tuft_spread_deg, n_st))
            azim = r_veg.uniform(0, 2 * math.pi, n_st)
            dirs = np.c_[np.sin(tilt) * np.cos(azim), np.sin(tilt) * np.sin(azim), np.cos(tilt)]
            lengths = r_veg.uniform(*veg_spec.tuft_height, n_st)
            per = r_veg.poisson(veg_spec.stem_points_per_m * lengths)
            owner = np.repeat(np.arange(n_st), per)
            t = r_veg.random(len(owner)) * lengths[owner]
            pts = roots[owner] + t[:, None] * dirs[owner] + r_veg.normal(0, 0.002, (len(owner), 3))
            parts.append(pts)
            labels.append(np.full(len(pts), VEGETATION))
            owners.append(np.full(len(pts), -1))
            continue
        if veg_spec.kind == "ball":
            center = np.array([c[0], c[1], base + r])
            n = r_veg.poisson(veg_spec.ball_density * 4 / 3 * math.pi * r**3)
            u = r_veg.random(n) ** (1 / 3)
            pts = center + _random_unit(r_veg, n) * (r * u)[:, None]
        else:
            stem_h = veg_spec.stem_fraction * 2 * r
            center = np.array([c[0], c[1], base + stem_h + r])
            n_stem = r_veg.poisson(veg_spec.stem_points_per_m * (stem_h + r))
            t = r_veg.random(n_stem) * (stem_h + r)
            stem = np.c_[np.full(n_stem, c[0]), np.full(n_stem, c[1]), base + t]
            stem[:, :2] += r_veg.normal(0, 0.002, (n_stem, 2))
            volume = 4 / 3 * math.pi * r**3
            leaf_r = veg_spec.leaf_size / 2
            n_leaves = max(1, int(round(veg_spec.leaf_area_density * volume / (math.pi * leaf_r**2))))
            lc = center + _random_unit(r_veg, n_leaves) * (r * r_veg.random(n_leaves) ** (1 / 3))[:, None]
            normals = _random_unit(r_veg, n_leaves)
            per_leaf = r_veg.poisson(spec.density * math.pi * leaf_r**2, n_leaves)
            tot = int(per_leaf.sum())
            owner = np.repeat(np.arange(n_leaves), per_leaf)
            # Uniform points on each leaf disc.
            e1 = np.cross(normals, [0.0, 0.0, 1.0])
            bad = np.linalg.norm(e1, axis=1) < 1e-6
            e1[bad] = [1.0, 0.0, 0.0]
            e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
            e2 = np.cross(normals, e1)
            rho = leaf_r * np.sqrt(r_veg.random(tot))
            ang = r_veg.uniform(0, 2 * math.pi, tot)
            leaves = lc[owner] + (rho * np.cos(ang))[:, None] * e1[owner] + (rho * np.sin(ang))[:, None] * e2[owner]
            pts = np.vstack([stem, leaves])
        canopy_spheres.append((center, r))
        parts.append(pts)
        labels.append(np.full(len(pts), VEGETATION))
        owners.append(np.full(len(pts), -1))

    for j, (c, radii) in enumerate(boulders):
        area = 4 * math.pi * ((radii[0] * radii[1]) ** 1.6 + (radii[0] * radii[2]) ** 1.6 + (radii[1] * radii[2]) ** 1.6) ** (1 / 1.6) / 3 ** (1 / 1.6)
        n = r_boulder.poisson(spec.density * area)
        pts = c + _random_unit(r_boulder, n) * radii
        pts = pts[pts[:, 2] > height(pts[:, :2])]
        parts.append(pts)
        labels.append(np.full(len(pts), BOULDER))
        owners.append(np.full(len(pts), j))

    P = np.vstack(parts)
    L = np.concatenate(labels)
    O = np.concatenate(owners)

    if spec.edge_jitter > 0:
        P = P + r_jit.normal(0, spec.edge_jitter, P.shape)

    shadowed = np.empty((0, 3))
    if spec.scanner is not None:
        S = np.asarray(spec.scanner, dtype=np.float64)
        keep = np.ones(len(P), dtype=bool)
        if spec.falloff_distance:
            dist = np.linalg.norm(P - S, axis=1)
            prob = np.minimum(1.0, (spec.falloff_distance / np.maximum(dist, 1e-9)) ** 2)
            keep &= r_fall.random(len(P)) < prob
        if spec.occlusion:
            hidden = np.zeros(len(P), dtype=bool)
            surface = (L == GROUND) | (L == WATER)
            if canopy_spheres:
                cs = np.array([c for c, _ in canopy_spheres])
                rs = np.array([r for _, r in canopy_spheres])
                hidden[surface] |= _segment_hits_spheres(P[surface], S, cs, rs)
            if boulders:
                target = surface | (L == BOULDER)
                hidden[target] |= _segment_hits_ellipsoids(P[target], S, boulders, O[target])
            shadowed = P[hidden & keep]
            keep &= ~hidden
        P, L = P[keep], L[keep]

    return SyntheticScene(
        points=P,
        labels=L.astype(np.int64),
        shadowed=shadowed,
        objects={"vegetation": veg, "boulders": boulders, "canopies": canopy_spheres},
    )


def generate(spec: SceneSpec):
    """``(PointCloud, labels)`` for a scene spec."""
    scene = generate_scene(spec)
    if len(scene.points) == 0:
        raise DataError("scene spec produced no points")
    return scene.cloud, scene.labels


def write_labeled_xyz(path, points, labels, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("# x y z label\n")
        for (x, y, z), lab in zip(np.asarray(points).tolist(), np.asarray(labels).tolist()):
            fh.write(f"{x!r} {y!r} {z!r} {lab}\n")


def load_labels(path, column: int = 3):
    """Read a label column from an XYZ-style file (comments skipped)."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) <= column:
                raise DataError(f"{path}:{lineno}: no label column {column}")
            out.append(parts[column])
    return out
