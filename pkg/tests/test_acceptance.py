"""Acceptance criteria, one test each.

Every test records a short measurement with ``record_property("detail", ...)``;
``conftest.py`` prints a PASS/FAIL line per criterion at the end of the run.
Run alone with ``pytest tests/test_acceptance.py``.
"""

import math
import resource
import time

import numpy as np
import pytest
from helpers import four_class_scene
from oracles import brute_nearest, brute_radius, whitened_gaussian
from scipy.spatial.transform import Rotation
from scipy.stats import ttest_rel

from dimclass.classifier import (
    SeparabilityPlane,
    confidence,
    default_boundary,
    fit_platt,
    train_classifier,
    train_lda,
)
from dimclass.classifier_io import read_svg_string, write_svg
from dimclass.evaluation import (
    ConfusionCounts,
    balanced_accuracy,
    fisher_discriminant_ratio,
    split_train_test,
)
from dimclass.msdim import compute_features_batch, eigen_proportions
from dimclass.multiclass import Cascade, PipelineStage, majority_vote, run_cascade
from dimclass.pointcloud import CorePointSet, SpatialIndex, subsample_min_distance
from dimclass.synth import (
    CLASS_NAMES,
    VEGETATION,
    GroundSpec,
    SceneSpec,
    VegetationSpec,
    generate_scene,
)

pytestmark = pytest.mark.acceptance

# Vegetation over rippled ground, shared by criteria 7 and 12.
RIPPLES = GroundSpec(model="ripples", amplitude=0.03, wavelength=0.3, direction_deg=30, noise=0.002)
SCALES_2_40 = [0.02, 0.05, 0.1, 0.2, 0.4]


def angle(a, b):
    c = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(1.0, c))


def test_criterion_01_spatial_exactness(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    n_queries = 0
    for trial in range(50):
        n = int(rng.integers(1, 2001))
        if trial % 2:
            P = rng.uniform(-1, 1, (n, 3))
        else:
            # Lattice points give exact-radius ties and duplicates.
            P = rng.integers(-5, 6, (n, 3)) * 0.2
        idx = SpatialIndex(P)
        for _ in range(10):
            c = P[rng.integers(n)] if rng.random() < 0.5 else rng.uniform(-1, 1, 3)
            r = 0.2 * int(rng.integers(1, 6)) if trial % 2 == 0 else float(rng.uniform(0.01, 0.8))
            got = np.sort(idx.radius_query(c, r))
            assert np.array_equal(got, brute_radius(P, c, r)), f"radius mismatch in cloud {trial}"
            n_queries += 1
        Q = np.vstack([rng.uniform(-1.2, 1.2, (20, 3)), P[rng.integers(n, size=5)]])
        got = idx.nearest(Q)
        assert np.array_equal(got, [brute_nearest(P, q) for q in Q]), f"nearest mismatch in cloud {trial}"
        n_queries += len(Q)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"50 clouds, {n_queries} queries exact, {elapsed:.2f} s")
    assert elapsed < 10.0


def test_criterion_02_pca_features(record_property):
    rng = np.random.default_rng(102)
    direction = rng.normal(0, 1, 3)
    line = rng.uniform(-1, 1, (200, 1)) * direction + rng.normal(0, 1, 3)
    p_line = eigen_proportions(line)
    g = np.arange(20) * 0.05
    grid = np.array([(x, y, 0.0) for x in g for y in g]) @ Rotation.random(random_state=1).as_matrix().T
    p_plane = eigen_proportions(grid)
    ball = rng.normal(0, 1, (10_000, 3))
    ball *= (rng.random(10_000) ** (1 / 3) / np.linalg.norm(ball, axis=1))[:, None]
    p_ball = eigen_proportions(ball)
    assert np.abs(p_line - [1, 0, 0]).max() <= 1e-9
    assert p_plane[2] <= 1e-9
    assert np.abs(p_ball - 1 / 3).max() <= 0.02

    P = rng.normal(0, 1, (3000, 3)) * [1.0, 0.6, 0.2]
    C = P[rng.choice(len(P), 50, replace=False)]
    scales = np.array([0.3, 0.8, 2.0])
    ref = compute_features_batch(SpatialIndex(P), CorePointSet.from_points(C), scales)
    worst = 0.0
    for k in range(10):
        R = Rotation.random(random_state=200 + k).as_matrix()
        t = rng.uniform(-50, 50, 3)
        s = float(rng.uniform(0.1, 10))
        Pt, Ct = s * (P @ R.T) + t, s * (C @ R.T) + t
        out = compute_features_batch(SpatialIndex(Pt), CorePointSet.from_points(Ct), scales * s)
        assert np.array_equal(out.counts, ref.counts)
        worst = max(worst, float(np.abs(out.coords - ref.coords).max()))
    record_property(
        "detail",
        f"line dev {np.abs(p_line - [1, 0, 0]).max():.1e}, plane p3 {p_plane[2]:.1e}, "
        f"ball dev {np.abs(p_ball - 1 / 3).max():.4f}, transform dev {worst:.1e}",
    )
    assert worst <= 1e-9


def test_criterion_03_lda_closed_form(record_property):
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(20):
        dim = int(rng.integers(2, 12))
        A = rng.standard_normal((dim, dim))
        Xp = rng.standard_normal((300, dim)) @ A + rng.standard_normal(dim)
        Xm = rng.standard_normal((250, dim)) @ A.T
        fit = train_lda(Xp, Xm)
        assert fit.flags == ()
        S = np.cov(Xp, rowvar=False, bias=True) + np.cov(Xm, rowvar=False, bias=True)
        delta = Xp.mean(0) - Xm.mean(0)
        worst = max(worst, float(np.linalg.norm(S @ fit.w - delta) / np.linalg.norm(delta)))
    # Whitened samples: exact class means and identity scatter, so sampling
    # noise does not tilt the direction (see the decisions ledger).
    e1 = np.eye(6)[0]
    Xp = whitened_gaussian(rng, 10_000, 2 * e1)
    Xm = whitened_gaussian(rng, 10_000, np.zeros(6))
    ang = angle(train_lda(Xp, Xm).w, e1)
    record_property("detail", f"max residual {worst:.1e}, direction error {ang:.1e} rad")
    assert worst <= 1e-6
    assert ang <= 1e-3


def test_criterion_04_platt(record_property):
    rng = np.random.default_rng(104)
    d = rng.uniform(-3, 3, 10_000)
    y = np.where(rng.random(10_000) < 1 / (1 + np.exp(-2.0 * d)), 1, -1)
    alpha = fit_platt(d, y).alpha
    Xp = rng.normal([1, 0, 0, 0], 0.5, (500, 4))
    Xm = rng.normal([0, 0, 0, 0], 0.5, (500, 4))
    clf = train_classifier(Xp, Xm)
    on_line = clf.boundary.vertices
    c_line = confidence(clf.boundary.signed_distance(on_line))
    record_property("detail", f"alpha {alpha:.4f} (true 2.0), boundary confidences {set(c_line.tolist())}")
    assert abs(alpha - 2.0) <= 0.2
    assert confidence(0.0) == 0.5
    assert (c_line == 0.5).all()


def test_criterion_05_normalization_neutrality(record_property):
    rng = np.random.default_rng(105)
    n_points = 0
    for _ in range(10):
        dim = int(rng.integers(2, 10))
        A = rng.standard_normal((dim, dim))
        Xp = rng.standard_normal((400, dim)) @ A + rng.standard_normal(dim) * 2
        Xm = rng.standard_normal((300, dim)) @ A
        X = rng.standard_normal((5000, dim)) @ A * 2
        a = train_classifier(Xp, Xm, normalize=False).predict(X)[0]
        b = train_classifier(Xp, Xm, normalize=True).predict(X)[0]
        assert np.array_equal(a, b)
        n_points += len(X)
    record_property("detail", f"10 training sets, {n_points} labels agree 100%")


def _identity_plane():
    return SeparabilityPlane(np.array([1.0, 0.0]), 0.0, np.array([0.0, 1.0]), 0.0)


def _crossing_x(boundary):
    V = boundary.vertices
    return V[0, 0] + (0 - V[0, 1]) * (V[1, 0] - V[0, 0]) / (V[1, 1] - V[0, 1])


def test_criterion_06_semi_supervised(record_property):
    # Two unlabeled modes with an empty gap at u in (0.2, 0.4), centre 0.3.
    hits, xs = 0, []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        Fp = rng.normal([1, 0], 0.2, (300, 2))
        Fm = rng.normal([-1, 0], 0.2, (300, 2))
        U = np.vstack([
            np.column_stack([rng.uniform(-1.2, 0.2, 4000), rng.normal(0, 0.3, 4000)]),
            np.column_stack([rng.uniform(0.4, 1.8, 4000), rng.normal(0, 0.3, 4000)]),
        ])
        x0 = _crossing_x(default_boundary(_identity_plane(), Fp, Fm, U))
        xs.append(x0)
        hits += abs(x0 - 0.3) <= 0.05
    # A foreign cluster beyond the positive class would pull the line past it.
    rng = np.random.default_rng(50)
    Fp = rng.normal([1, 0], 0.15, (500, 2))
    Fm = rng.normal([-1, 0], 0.15, (500, 2))
    U = np.vstack([
        np.column_stack([rng.uniform(-1.3, 0.75, 5000), rng.normal(0, 0.3, 5000)]),
        rng.normal([1.5, 0], 0.1, (5000, 2)),
    ])
    b = default_boundary(_identity_plane(), Fp, Fm, U)
    kept = min((b.signed_distance(Fp) >= 0).mean(), (b.signed_distance(Fm) < 0).mean())
    record_property(
        "detail",
        f"gap hits {hits}/10 (x0 {min(xs):.3f}..{max(xs):.3f}); foreign: constraint_active="
        f"{b.info.get('constraint_active')}, labeled kept {kept:.3f}",
    )
    assert hits >= 9
    assert b.info.get("constraint_active") or b.info.get("fallback")
    assert kept >= 0.95


def _ba_fdr(clf, F, y):
    d = clf.decision_values(F.matrix())
    ok = np.isfinite(d)
    d, y = d[ok], y[ok]
    return balanced_accuracy(ConfusionCounts.from_labels(y, d >= 0)), fisher_discriminant_ratio(d[y], d[~y])


def test_criterion_07_multiscale_superiority(record_property):
    t0 = time.perf_counter()
    spec = SceneSpec(
        seed=1,
        extent=(5.0, 5.0),
        density=10_000,
        ground=RIPPLES,
        vegetation=VegetationSpec(count=40, diameter=(0.1, 0.6), tuft_fraction=0.5, stem_points_per_m=1000),
    )
    scene = generate_scene(spec)
    assert len(scene.points) >= 100_000
    idx = SpatialIndex(scene.points)
    cores = subsample_min_distance(scene.cloud, 0.02, idx)
    fs = compute_features_batch(idx, cores, SCALES_2_40)
    veg = scene.labels[cores.indices] == VEGETATION
    tr, te = split_train_test(veg.astype(int), 0.5, seed=0)

    def evaluate(F):
        Ftr, Fte = F.subset(tr), F.subset(te)
        clf = train_classifier(Ftr.subset(veg[tr]), Ftr.subset(~veg[tr]))
        return _ba_fdr(clf, Fte, veg[te])

    multi = evaluate(fs)
    single = [evaluate(fs.select_scales([k])) for k in range(len(SCALES_2_40))]
    best_ba = max(s[0] for s in single)
    best_fdr = max(s[1] for s in single)
    elapsed = time.perf_counter() - t0
    record_property(
        "detail",
        f"{len(scene.points)} pts; multi ba {multi[0]:.4f} fdr {multi[1]:.2f}; best single ba {best_ba:.4f} "
        f"fdr {best_fdr:.2f} (ratio {multi[1] / best_fdr:.2f}); {elapsed:.0f} s",
    )
    assert multi[0] >= best_ba
    assert multi[1] >= 1.4 * best_fdr
    assert multi[0] >= 0.95
    assert elapsed < 300


def test_criterion_08_svg_round_trip(record_property):
    import re

    rng = np.random.default_rng(108)
    Xp = rng.normal([0.4, 0.1, 0.45, 0.2], 0.08, (400, 4))
    Xm = rng.normal([0.55, 0.05, 0.5, 0.1], 0.08, (400, 4))
    clf = train_classifier(Xp, Xm, labels=("veg", "ground"))
    clf.scales = np.array([0.05, 0.2])
    text = write_svg(None, clf, Xp, Xm)
    back = read_svg_string(text)
    X = rng.uniform(0, 1, (10_000, 4))
    la, ca = clf.predict(X)
    lb, cb = back.predict(X)
    assert np.array_equal(la, lb) and np.array_equal(ca, cb)

    s = float(re.search(r"svg_scale=(\S+)", text).group(1))
    shift = 0.1
    moved = read_svg_string(text.replace('<path id="boundary"', f'<path transform="translate({shift * s!r} 0)" id="boundary"'))
    Xs = rng.normal([0.475, 0.075, 0.475, 0.15], 0.1, (20_000, 4))
    delta = clf.decision_values(Xs)
    flipped = clf.predict(Xs)[0] != moved.predict(Xs)[0]
    straddling = (delta >= 0) & (delta < shift)
    record_property("detail", f"10^4 features bit-exact; {straddling.sum()} straddling, {flipped.sum()} flipped")
    assert np.array_equal(flipped, straddling)


def test_criterion_09_cascade_semantics(record_property):
    stages, Fte, Lte = four_class_scene()
    sweep = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95]
    prev = None
    fractions = []
    for tau in sweep:
        cas = Cascade([PipelineStage(n, c, p, r, tau) for n, c, p, r in stages])
        res = run_cascade(cas, Fte)
        fractions.append(res.unlabeled_fraction())
        if prev is not None:
            assert res.unlabeled.sum() >= prev.unlabeled.sum()
            for a, b in zip(prev.labels, res.labels):
                assert b is None or a == b
        prev = res
    res05 = run_cascade(Cascade([PipelineStage(n, c, p, r, 0.5) for n, c, p, r in stages]), Fte)
    names = np.array([CLASS_NAMES[int(v)] for v in Lte])
    pred = np.array([x or "unlabeled" for x in res05.labels])
    recall = {n: float((pred[names == n] == n).mean()) for n in CLASS_NAMES.values()}

    # k = 2: one pairwise classifier voting is the binary classifier itself.
    clf = stages[2][1]
    votes = majority_vote({("water", "boulder"): clf}, Fte)
    lab, _ = clf.predict(Fte)
    binary = ["water" if v > 0 else "boulder" for v in lab]
    record_property(
        "detail",
        "unlabeled over tau sweep " + " ".join(f"{f:.3f}" for f in fractions)
        + "; recall at 0.5 " + ", ".join(f"{k} {v:.3f}" for k, v in recall.items()),
    )
    assert votes == binary


def test_criterion_10_metrics(record_property):
    ba = balanced_accuracy(ConfusionCounts(tv=90, tg=80, fv=20, fg=10))
    fdr = fisher_discriminant_ratio([1, 2, 3], [-1, -2, -3])
    rng = np.random.default_rng(110)
    truth = np.repeat([1, -1], 5000)
    rand = balanced_accuracy(ConfusionCounts.from_labels(truth, rng.choice([1, -1], 10_000)))
    record_property("detail", f"ba {ba!r}, fdr {fdr!r}, random-label ba {rand:.4f}")
    assert abs(ba - 0.85) <= 1e-12
    assert abs(fdr - 8.0) <= 1e-12
    assert abs(rand - 0.5) <= 0.02


def test_criterion_11_performance_envelope(record_property):
    spec = SceneSpec(
        seed=3,
        extent=(10.0, 10.0),
        density=10_100,
        ground=GroundSpec(model="ripples", amplitude=0.03, wavelength=0.3, noise=0.002),
        vegetation=VegetationSpec(count=40, diameter=(0.1, 0.6), tuft_fraction=0.5),
    )
    P = generate_scene(spec).points
    assert len(P) >= 1_000_000
    rng = np.random.default_rng(0)
    cores = CorePointSet.from_points(P[np.sort(rng.choice(len(P), 100_000, replace=False))])
    t0 = time.perf_counter()
    idx = SpatialIndex(P)
    fs1 = compute_features_batch(idx, cores, SCALES_2_40, workers=1)
    elapsed = time.perf_counter() - t0
    fs4 = compute_features_batch(idx, cores, SCALES_2_40, workers=4)
    # Peak resident size of this whole process: an upper bound on the run's footprint.
    peak_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 2**20
    same = np.array_equal(fs1.coords, fs4.coords, equal_nan=True) and np.array_equal(fs1.counts, fs4.counts)
    record_property(
        "detail",
        f"{len(P)} pts, 10^5 cores, 5 scales: {elapsed:.0f} s, peak RSS {peak_gb:.2f} GB, workers 1 vs 4 identical={same}",
    )
    assert elapsed <= 300
    assert peak_gb <= 4.0
    assert same


def test_criterion_12_missing_data(record_property):
    base = dict(
        seed=1,
        extent=(5.0, 5.0),
        density=8000,
        ground=RIPPLES,
        vegetation=VegetationSpec(count=25, diameter=(0.2, 0.6), tuft_fraction=0.3, stem_points_per_m=800),
        scanner=(0.0, 2.5, 1.5),
    )
    open_scene = generate_scene(SceneSpec(**base))
    occ_scene = generate_scene(SceneSpec(**base, occlusion=True))
    assert len(occ_scene.shadowed) > 0

    open_idx = SpatialIndex(open_scene.points)
    cores = subsample_min_distance(open_scene.cloud, 0.03, open_idx)
    fs = compute_features_batch(open_idx, cores, SCALES_2_40)
    veg = open_scene.labels[cores.indices] == VEGETATION
    clf = train_classifier(fs.subset(veg & fs.usable), fs.subset(~veg & fs.usable), labels=("vegetation", "ground"))

    # Shadow-adjacent: cores of the occluded cloud whose largest ball reaches a shadowed spot.
    occ_idx = SpatialIndex(occ_scene.points)
    occ_cores = subsample_min_distance(occ_scene.cloud, 0.03, occ_idx)
    shadow = SpatialIndex(occ_scene.shadowed)
    reach = SCALES_2_40[-1] / 2
    adjacent = np.array([len(shadow.radius_query(c, reach)) > 0 for c in occ_cores.points])
    C = CorePointSet.from_points(occ_cores.points[adjacent])
    f_occ = compute_features_batch(occ_idx, C, SCALES_2_40)
    f_open = compute_features_batch(open_idx, C, SCALES_2_40)
    l_occ, c_occ = clf.predict(f_occ)
    l_open, c_open = clf.predict(f_open)
    labeled = (l_occ != 0).mean()
    both = (l_occ != 0) & (l_open != 0)
    test = ttest_rel(c_occ[both], c_open[both], alternative="less")
    record_property(
        "detail",
        f"{len(C)} shadow-adjacent cores, labeled {labeled:.4f}; missing flags {int(f_occ.missing.sum())} "
        f"vs {int(f_open.missing.sum())} unoccluded; mean confidence {c_occ[both].mean():.4f} vs "
        f"{c_open[both].mean():.4f} (paired one-sided p={test.pvalue:.1e})",
    )
    assert labeled >= 0.95
    assert f_occ.missing.any()
    assert f_occ.missing.sum() >= f_open.missing.sum()
    assert test.pvalue < 0.01
