import math

import numpy as np
import pytest
from helpers import features, four_class_scene, linear_clf
from oracles import brute_nearest

from dimclass.classifier_io import write_svg
from dimclass.errors import DataError
from dimclass.multiclass import (
    Cascade,
    PipelineStage,
    load_pipeline,
    majority_vote,
    propagate_to_scene,
    run_cascade,
)
from dimclass.pointcloud import SpatialIndex
from dimclass.synth import CLASS_NAMES


def conf_delta(c):
    return math.log(c / (1 - c))


def three_stage(t1=0.5, t2=0.5, t3=0.5):
    return Cascade([
        PipelineStage("s1", linear_clf([1, 0]), "A", "s2", t1),
        PipelineStage("s2", linear_clf([0, 1]), "B", "s3", t2),
        PipelineStage("s3", linear_clf([1, -1]), "C", "D", t3),
    ])


def test_single_stage_labels_every_usable_feature():
    rng = np.random.default_rng(0)
    X = rng.normal(0, 1, (500, 2))
    X[7] = np.nan
    res = run_cascade([PipelineStage("only", linear_clf([1, 0]), "pos", "neg", 0.5)], features(X))
    assert res.labels[7] is None
    assert res.decided_at[7] == -1
    assert sum(lab is None for lab in res.labels) == 1
    expected = np.where(X[:, 0] >= 0, "pos", "neg")
    assert [lab for i, lab in enumerate(res.labels) if i != 7] == [e for i, e in enumerate(expected) if i != 7]


def test_confidence_below_threshold_is_unlabeled_at_that_stage():
    X = np.array([[conf_delta(0.85), 0.0]])
    res = run_cascade(three_stage(t1=0.9), features(X))
    assert res.labels == [None]
    assert res.decided_at[0] == 0
    assert res.confidences[0, 0] == pytest.approx(0.85)
    assert np.isnan(res.confidences[0, 1:]).all()


def test_routing_reaches_terminal_labels():
    X = np.array([[1.0, 0.0], [-1.0, 2.0], [-1.0, -3.0], [-3.0, -1.0]])
    res = run_cascade(three_stage(), features(X))
    assert res.labels == ["A", "B", "C", "D"]
    assert res.decided_at.tolist() == [0, 1, 2, 2]


def test_labeled_points_met_every_threshold_and_later_stages_skipped():
    rng = np.random.default_rng(1)
    X = rng.normal(0, 2, (3000, 2))
    taus = (0.8, 0.7, 0.9)
    res = run_cascade(three_stage(*taus), features(X))
    for i, lab in enumerate(res.labels):
        visited = np.flatnonzero(np.isfinite(res.confidences[i]))
        assert visited.max() == res.decided_at[i]
        if lab is not None:
            assert all(res.confidences[i, j] >= taus[j] for j in visited)
        else:
            j = res.decided_at[i]
            assert res.confidences[i, j] < taus[j]


def test_threshold_monotonicity_over_sweep():
    rng = np.random.default_rng(2)
    fs = features(rng.normal(0, 2, (5000, 2)))
    base = three_stage()
    prev = None
    for tau in np.arange(0.5, 0.951, 0.05):
        res = run_cascade(base.with_thresholds(float(tau)), fs)
        if prev is not None:
            assert res.unlabeled.sum() >= prev.unlabeled.sum()
            for a, b in zip(prev.labels, res.labels):
                assert b is None or a == b
        prev = res


def test_cascade_rejects_cycles_and_duplicates():
    c = linear_clf([1, 0])
    with pytest.raises(DataError, match="cyclic"):
        Cascade([PipelineStage("a", c, "x", "b"), PipelineStage("b", c, "y", "a")])
    with pytest.raises(DataError, match="duplicate"):
        Cascade([PipelineStage("a", c, "x", "y"), PipelineStage("a", c, "x", "y")])
    with pytest.raises(DataError, match="threshold"):
        PipelineStage("a", c, "x", "y", 0.4)
    with pytest.raises(DataError, match="threshold"):
        PipelineStage("a", c, "x", "y", 1.0)


def test_cascade_scale_mismatch():
    with pytest.raises(DataError, match="scale mismatch"):
        run_cascade(three_stage(), features(np.zeros((1, 4)), scales=(0.1, 0.2)))


def test_cascade_labels_listing():
    assert three_stage().labels == ["A", "B", "C", "D"]


def test_cascade_is_deterministic():
    rng = np.random.default_rng(3)
    fs = features(rng.normal(0, 2, (500, 2)))
    a = run_cascade(three_stage(0.6, 0.7, 0.8), fs)
    b = run_cascade(three_stage(0.6, 0.7, 0.8), fs)
    assert a.labels == b.labels
    np.testing.assert_array_equal(a.confidences, b.confidences)


# -- majority vote ---------------------------------------------------------


def test_majority_vote_k2_equals_binary_classifier():
    rng = np.random.default_rng(4)
    X = rng.normal(0, 1, (1000, 2))
    clf = linear_clf([1.0, -0.5])
    votes = majority_vote({("a", "b"): clf}, features(X))
    lab, _ = clf.predict(X)
    assert votes == ["a" if v > 0 else "b" for v in lab]


def test_majority_vote_counting_and_condorcet_tie():
    clfs = {
        ("A", "B"): linear_clf([1, 0]),
        ("A", "C"): linear_clf([0, 1]),
        ("B", "C"): linear_clf([1, 1]),
    }
    # (1, 1): A beats B, A beats C, B beats C -> A with two votes.
    # (1, -2): A beats B, C beats A, C beats B -> C.
    # Cycle: A>B (x>0), C>A (y<0), B>C (x+y>0)
    X = np.array([[1.0, 1.0], [1.0, -2.0], [2.0, -1.0]])
    assert majority_vote(clfs, features(X)) == ["A", "C", None]


def test_majority_vote_missing_pair_and_unusable():
    with pytest.raises(DataError, match="missing pairwise"):
        majority_vote({("A", "B"): linear_clf([1, 0])}, features(np.zeros((1, 2))), classes=["A", "B", "C"])
    out = majority_vote({("A", "B"): linear_clf([1, 0])}, features(np.array([[np.nan, np.nan]])))
    assert out == [None]


# -- propagation and config -----------------------------------------------


def test_propagation_identity_and_unlabeled():
    cores = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    idx = SpatialIndex(cores)
    labels = ["a", None, "b"]
    assert propagate_to_scene(labels, idx, cores) == labels
    assert propagate_to_scene(labels, idx, [[1.2, 0.1, 0]]) == [None]


def test_propagation_matches_brute_force():
    rng = np.random.default_rng(5)
    scene = rng.random((20_000, 3))
    cores = scene[::10]
    labels = [f"c{i % 7}" for i in range(len(cores))]
    sample = scene[rng.choice(len(scene), 1000, replace=False)]
    got = propagate_to_scene(labels, SpatialIndex(cores), sample)
    assert got == [labels[brute_nearest(cores, p)] for p in sample]


def test_load_pipeline(tmp_path):
    rng = np.random.default_rng(6)
    from dimclass.classifier import train_classifier

    clf = train_classifier(rng.normal(1, 1, (100, 2)), rng.normal(-1, 1, (100, 2)))
    clf.scales = np.array([0.1])
    sub = tmp_path / "clfs"
    sub.mkdir()
    write_svg(sub / "one.svg", clf)
    write_svg(sub / "two.svg", clf)
    cfg = tmp_path / "pipe.cfg"
    cfg.write_text("# stages\n\n'first' clfs/one.svg 'tall veg' second 0.9  # comment\nsecond clfs/two.svg rock ground 0.8\n")
    cas = load_pipeline(cfg)
    assert [s.name for s in cas.stages] == ["first", "second"]
    assert cas.stages[0].positive_label == "tall veg"
    assert cas.stages[1].threshold == 0.8
    assert cas.labels == ["tall veg", "rock", "ground"]


@pytest.mark.parametrize(
    "text, message",
    [
        ("a one.svg x\n", "expected 5 fields"),
        ("a one.svg x y high\n", "not a number"),
        ("a one.svg x b 0.5\nb one.svg y a 0.5\n", "cyclic"),
        ("a missing.svg x y 0.5\n", "not found"),
    ],
)
def test_load_pipeline_errors(tmp_path, text, message):
    rng = np.random.default_rng(7)
    from dimclass.classifier import train_classifier

    write_svg(tmp_path / "one.svg", train_classifier(rng.normal(1, 1, (50, 2)), rng.normal(-1, 1, (50, 2))))
    cfg = tmp_path / "p.cfg"
    cfg.write_text(text)
    with pytest.raises(DataError, match=message):
        load_pipeline(cfg)


def test_three_stage_cascade_recovers_four_synthetic_classes():
    stages, Fte, Lte = four_class_scene()
    res = run_cascade(Cascade([PipelineStage(n, c, p, r, 0.5) for n, c, p, r in stages]), Fte)
    assert res.unlabeled_fraction() == 0.0
    pred = np.array(res.labels)
    for code, name in CLASS_NAMES.items():
        assert (pred[Lte == code] == name).mean() >= 0.9, name
    high = run_cascade(Cascade([PipelineStage(n, c, p, r, 0.9) for n, c, p, r in stages]), Fte)
    assert 0 < high.unlabeled_fraction() < 1
