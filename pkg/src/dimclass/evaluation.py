"""Classification metrics and the train/test protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts.

    ``tv``/``tg`` are correctly classified positives/negatives; ``fv`` counts
    negatives labelled positive and ``fg`` positives labelled negative.
    """

    tv: int
    tg: int
    fv: int
    fg: int

    def __post_init__(self):
        if min(self.tv, self.tg, self.fv, self.fg) < 0:
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, truth, predicted) -> "ConfusionCounts":
        truth = np.asarray(truth)
        predicted = np.asarray(predicted)
        pos_t, pos_p = truth > 0, predicted > 0
        return cls(
            tv=int((pos_t & pos_p).sum()),
            tg=int((~pos_t & ~pos_p).sum()),
            fv=int((~pos_t & pos_p).sum()),
            fg=int((pos_t & ~pos_p).sum()),
        )

    @property
    def total(self) -> int:
        return self.tv + self.tg + self.fv + self.fg

    @property
    def positive_accuracy(self) -> float:
        return self.tv / (self.tv + self.fg)

    @property
    def negative_accuracy(self) -> float:
        return self.tg / (self.tg + self.fv)


def balanced_accuracy(c: ConfusionCounts) -> float:
    if c.tv + c.fg == 0 or c.tg + c.fv == 0:
        raise DataError("balanced accuracy needs both classes present in the ground truth")
    return 0.5 * (c.positive_accuracy + c.negative_accuracy)


def confusion_matrix(truth, predicted, classes) -> np.ndarray:
    """k x k matrix, rows = truth, columns = prediction. Unknown predictions are dropped."""
    lookup = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if t in lookup and p in lookup:
            m[lookup[t], lookup[p]] += 1
    return m


def balanced_accuracy_multiclass(matrix) -> float:
    """Mean per-class recall of a k x k confusion matrix (k=2 matches :func:`balanced_accuracy`)."""
    m = np.asarray(matrix, dtype=np.float64)
    support = m.sum(axis=1)
    if (support == 0).any():
        raise DataError("every class must be present in the ground truth")
    return float(np.mean(np.diag(m) / support))


def fisher_discriminant_ratio(dplus, dminus) -> float:
    """Squared mean separation over the summed unbiased (n-1) variances.

    Zero variance with distinct means gives ``inf``; zero variance with equal
    means gives 0.
    """
    a = np.asarray(dplus, dtype=np.float64)
    b = np.asarray(dminus, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise DataError("each class needs at least 2 samples")
    diff2 = (a.mean() - b.mean()) ** 2
    var = a.var(ddof=1) + b.var(ddof=1)
    if var == 0:
        return math.inf if diff2 > 0 else 0.0
    return float(diff2 / var)


def split_train_test(labels, fraction: float = 0.5, seed: int = 0):
    """Stratified, seed-deterministic split of sample indices.

    Returns ``(train_idx, test_idx)``, each sorted. Per class,
    ``round(fraction * n)`` samples go to training; each side keeps at least one.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            raise DataError(f"class {cls!r} has {len(idx)} sample(s); cannot split")
        k = min(len(idx) - 1, max(1, int(round(fraction * len(idx)))))
        perm = rng.permutation(idx)
        train.append(perm[:k])
        test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def metrics_report(truth, predicted, classes, distances_by_class=None) -> str:
    """CSV-style report: per-class counts and accuracy, then ba (and fdr when given)."""
    m = confusion_matrix(truth, predicted, classes)
    lines = ["class,support,correct,accuracy"]
    for i, c in enumerate(classes):
        support = int(m[i].sum())
        acc = float(m[i, i] / support) if support else float("nan")
        lines.append(f"{c},{support},{int(m[i, i])},{acc!r}")
    lines.append(f"ba,{balanced_accuracy_multiclass(m)!r}")
    if distances_by_class is not None:
        dp, dm = distances_by_class
        lines.append(f"fdr,{fisher_discriminant_ratio(dp, dm)!r}")
    return "\n".join(lines) + "\n"
