"""Small builders shared by several test modules."""

import functools

import numpy as np

from dimclass.classifier import BinaryClassifier, DecisionBoundary, SeparabilityPlane
from dimclass.msdim import FeatureSet


def linear_clf(w, labels=("pos", "neg"), scales=(0.1,)):
    """Classifier with signed distance ``w . x`` (vertical boundary at 0)."""
    w = np.asarray(w, dtype=np.float64)
    w2 = np.zeros_like(w)
    w2[np.argmin(np.abs(w))] = 1.0
    w2 -= (w2 @ w) / (w @ w) * w
    plane = SeparabilityPlane(w, 0.0, w2, 0.0)
    b = DecisionBoundary(np.array([[0.0, -1e6], [0.0, 1e6]]))
    return BinaryClassifier(np.array(scales), plane, b, labels=labels)


def features(X, scales=(0.1,)):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    ns = len(scales)
    return FeatureSet(
        np.array(scales), np.zeros((n, 3)), X.reshape(n, ns, 2),
        np.full((n, ns), 10), np.zeros((n, ns), bool), np.zeros(n), np.zeros(n),
    )


@functools.lru_cache(maxsize=1)
def four_class_scene():
    """Features of a 4-class synthetic scene and a 3-stage cascade trained on half of them.

    Returns ``(stages, test_features, test_labels)``; stages are
    ``(name, classifier, positive_label, negative_route)``. The cascade peels
    off vegetation, then ground, then splits water from boulders.
    """
    from dimclass.classifier import train_classifier
    from dimclass.evaluation import split_train_test
    from dimclass.msdim import compute_features_batch
    from dimclass.pointcloud import SpatialIndex, subsample_min_distance
    from dimclass.synth import (
        BOULDER,
        GROUND,
        VEGETATION,
        WATER,
        BoulderSpec,
        GroundSpec,
        SceneSpec,
        VegetationSpec,
        WaterSpec,
        generate_scene,
    )

    spec = SceneSpec(
        seed=1,
        extent=(4.0, 4.0),
        density=4000,
        ground=GroundSpec(model="fractal", amplitude=0.04, hurst=0.0, wavelength=0.4, noise=0.002),
        vegetation=VegetationSpec(count=10, diameter=(0.2, 0.6), tuft_fraction=0.3, stem_points_per_m=600),
        boulders=BoulderSpec(count=4, radii=(0.5, 0.8), flattening=(0.6, 0.9)),
        water=WaterSpec(regions=[[0, 3, 4, 4]], noise=0.01),
    )
    scene = generate_scene(spec)
    idx = SpatialIndex(scene.points)
    cores = subsample_min_distance(scene.cloud, 0.03, idx)
    fs = compute_features_batch(idx, cores, [0.05, 0.1, 0.2, 0.4, 0.8])
    keep = np.flatnonzero(fs.usable)
    fs, lab = fs.subset(keep), scene.labels[cores.indices][keep]
    tr, te = split_train_test(lab, 0.5, seed=0)
    F, L = fs.subset(tr), lab[tr]

    def train(pos, neg, names):
        return train_classifier(F.subset(np.isin(L, pos)), F.subset(np.isin(L, neg)), labels=names)

    stages = (
        ("s1", train([VEGETATION], [GROUND, BOULDER, WATER], ("vegetation", "rest")), "vegetation", "s2"),
        ("s2", train([GROUND], [BOULDER, WATER], ("ground", "rest")), "ground", "s3"),
        ("s3", train([WATER], [BOULDER], ("water", "boulder")), "water", "boulder"),
    )
    return stages, fs.subset(te), lab[te]
