"""Multi-class labeling from binary classifiers.

Two combinations are offered: a user-declared cascade where each stage either
assigns its positive label or hands the point to the next stage, and
one-vs-one majority voting. A point whose confidence at any visited stage is
below that stage's threshold is left unlabeled (``None``).
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import BinaryClassifier
from .errors import DataError


@dataclass
class PipelineStage:
    name: str
    classifier: BinaryClassifier
    positive_label: str
    negative_route: str  # a stage name or a terminal label
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.5 <= self.threshold < 1.0:
            raise DataError(f"stage {self.name!r}: threshold must lie in [0.5, 1), got {self.threshold}")


class Cascade:
    """Ordered stages; evaluation starts at the first one."""

    def __init__(self, stages):
        self.stages = list(stages)
        if not self.stages:
            raise DataError("a cascade needs at least one stage")
        self.by_name = {}
        for s in self.stages:
            if s.name in self.by_name:
                raise DataError(f"duplicate stage name {s.name!r}")
            self.by_name[s.name] = s
        # Routing must terminate: follow negative routes and reject cycles.
        for s in self.stages:
            seen = {s.name}
            cur = s
            while cur.negative_route in self.by_name:
                cur = self.by_name[cur.negative_route]
                if cur.name in seen:
                    raise DataError(f"cyclic cascade routing through stage {cur.name!r}")
                seen.add(cur.name)

    def with_thresholds(self, thresholds) -> "Cascade":
        if isinstance(thresholds, (int, float)):
            thresholds = [thresholds] * len(self.stages)
        return Cascade(
            PipelineStage(s.name, s.classifier, s.positive_label, s.negative_route, float(t))
            for s, t in zip(self.stages, thresholds)
        )

    @property
    def labels(self) -> list[str]:
        out = []
        for s in self.stages:
            for lab in (s.positive_label, s.negative_route):
                if lab not in self.by_name and lab not in out:
                    out.append(lab)
        return out


@dataclass
class MulticlassResult:
    labels: list  # str or None (unlabeled)
    confidences: np.ndarray  # (M, n_stages), NaN where a stage was not consulted
    decided_at: np.ndarray  # stage index where the point got its label or was dropped; -1 if unusable
    stage_names: list = field(default_factory=list)

    @property
    def unlabeled(self) -> np.ndarray:
        return np.array([lab is None for lab in self.labels])

    def unlabeled_fraction(self) -> float:
        return float(self.unlabeled.mean()) if self.labels else 0.0


def run_cascade(cascade, features) -> MulticlassResult:
    if not isinstance(cascade, Cascade):
        cascade = Cascade(cascade)
    for s in cascade.stages:
        s.classifier.check_scales(features.scales)
    X = features.matrix()
    m = len(X)
    n_st = len(cascade.stages)
    conf = np.full((m, n_st), np.nan)
    decided = np.full(m, -1, dtype=np.int64)
    labels: list = [None] * m

    index_of = {s.name: i for i, s in enumerate(cascade.stages)}
    active = np.flatnonzero(np.isfinite(X).all(axis=1))
    pending = {0: active}
    # Stages are visited in routing order; each point reaches a stage once.
    order = [0]
    seen = {0}
    for i in order:
        nxt = cascade.stages[i].negative_route
        if nxt in index_of and index_of[nxt] not in seen:
            seen.add(index_of[nxt])
            order.append(index_of[nxt])
    for i in order:
        rows = pending.pop(i, np.empty(0, dtype=np.intp))
        if len(rows) == 0:
            continue
        st = cascade.stages[i]
        lab, c = st.classifier.predict(X[rows])
        conf[rows, i] = c
        confident = c >= st.threshold
        decided[rows[~confident]] = i
        pos = rows[confident & (lab > 0)]
        neg = rows[confident & (lab < 0)]
        for r in pos:
            labels[r] = st.positive_label
        decided[pos] = i
        if st.negative_route in index_of:
            pending[index_of[st.negative_route]] = neg
        else:
            for r in neg:
                labels[r] = st.negative_route
            decided[neg] = i
    return MulticlassResult(labels, conf, decided, [s.name for s in cascade.stages])


def majority_vote(classifiers: dict, features, classes=None):
    """One-vs-one voting. ``classifiers`` maps ``(a, b)`` to a classifier whose
    positive side is ``a``. Returns a list of labels, ``None`` on ties or
    unusable rows."""
    if classes is None:
        classes = sorted({c for pair in classifiers for c in pair})
    k = len(classes)
    for i in range(k):
        for j in range(i + 1, k):
            a, b = classes[i], classes[j]
            if (a, b) not in classifiers and (b, a) not in classifiers:
                raise DataError(f"missing pairwise classifier for {a!r} vs {b!r}")
    X = features.matrix() if hasattr(features, "matrix") else np.atleast_2d(features)
    votes = np.zeros((len(X), k), dtype=np.int64)
    col = {c: i for i, c in enumerate(classes)}
    usable = np.isfinite(X).all(axis=1)
    for (a, b), clf in classifiers.items():
        if hasattr(features, "scales"):
            clf.check_scales(features.scales)
        lab, _ = clf.predict(X)
        votes[lab > 0, col[a]] += 1
        votes[lab < 0, col[b]] += 1
    out = []
    for r in range(len(X)):
        if not usable[r]:
            out.append(None)
            continue
        top = votes[r].max()
        winners = np.flatnonzero(votes[r] == top)
        out.append(classes[winners[0]] if len(winners) == 1 else None)
    return out


def propagate_to_scene(labels, core_index, scene_points):
    """Each scene point takes the label of its nearest core point (lowest index on ties)."""
    nearest = core_index.nearest(np.asarray(scene_points, dtype=np.float64))
    return [labels[i] for i in nearest]


def load_pipeline(path, loader=None) -> Cascade:
    """Read a cascade config.

    One stage per line: ``name classifier.svg positive_label negative_route threshold``.
    Blank lines and ``#`` comments are ignored; classifier paths are relative
    to the config file; fields may be quoted.
    """
    from .classifier_io import read_svg

    loader = loader or read_svg
    path = Path(path)
    try:
        text = path.read_text()
    except OSError:
        raise DataError(f"cannot read pipeline config {path}") from None
    stages = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = shlex.split(line, comments=True)
        if not fields:
            continue
        if len(fields) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        name, clf_path, pos, neg, tau = fields
        try:
            tau = float(tau)
        except ValueError:
            raise DataError(f"{path}:{lineno}: threshold {tau!r} is not a number") from None
        clf_file = Path(clf_path)
        if not clf_file.is_absolute():
            clf_file = path.parent / clf_file
        stages.append(PipelineStage(name, loader(clf_file), pos, neg, tau))
    return Cascade(stages)
