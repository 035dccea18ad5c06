"""Binary classifiers in a 2D plane of maximal separability.

Training proceeds in four steps:

1. a linear direction separating the two classes is trained (LDA or a
   Pegasos linear SVM) and calibrated with a Platt logistic fit; the weight
   vector is rescaled so the fitted logistic slope is exactly 1 and the fitted
   intercept becomes the bias;
2. the features are deflated onto the orthogonal complement of that direction
   and a second calibrated direction is trained there;
3. the resulting plane is rotated so the class centers lie on a horizontal
   line and the vertical axis is rescaled to equalize average class spread;
4. a decision boundary is placed: the perpendicular bisector of the class
   centers, or, given unlabeled samples, the lowest-density straight line
   that still keeps 95% of each labeled class on its side.

Class ``+1`` always lies on the side of positive signed distance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import null_space
from scipy.stats import gaussian_kde

from .errors import DataError, DegenerateError
from .evaluation import ConfusionCounts, balanced_accuracy, fisher_discriminant_ratio

logger = logging.getLogger(__name__)

ALPHA_MAX = 1e3
PEGASOS_LAMBDA = 1e-4
PEGASOS_ITERATIONS = 100_000
PEGASOS_SEED = 20120119
MIN_SECOND_ALPHA = 1e-6

SEMI_ANGLES_DEG = np.arange(-60, 61, 1)
SEMI_OFFSET_STEPS = 200
SEMI_MIN_CLASS_FRACTION = 0.95
SEMI_MAX_KDE_SAMPLES = 20_000


class LinearFit(NamedTuple):
    """A separating hyperplane ``w . x - b = 0``; ``flags`` notes regularization etc."""

    w: np.ndarray
    b: float
    flags: tuple = ()


def _as_matrix(F) -> np.ndarray:
    if hasattr(F, "matrix"):
        X = F.matrix()
        return X[np.isfinite(X).all(axis=1)]
    X = np.asarray(F, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def train_lda(Fplus, Fminus) -> LinearFit:
    """Fisher direction ``(S+ + S-)^-1 (mu+ - mu-)``.

    A ridge ``eps * I`` with ``eps = 1e-8 * trace / dim`` is added when the
    pooled scatter is singular; ``flags`` then contains ``"regularized"``.
    """
    Xp, Xm = _as_matrix(Fplus), _as_matrix(Fminus)
    if len(Xp) < 2 or len(Xm) < 2:
        raise DataError("LDA needs at least 2 samples per class")
    dim = Xp.shape[1]
    S = np.cov(Xp, rowvar=False, bias=True).reshape(dim, dim)
    S = S + np.cov(Xm, rowvar=False, bias=True).reshape(dim, dim)
    delta = Xp.mean(axis=0) - Xm.mean(axis=0)
    tr = float(np.trace(S))
    if tr <= 0 and not delta.any():
        raise DegenerateError("both classes are made of one identical feature vector")
    flags = ()
    if np.linalg.matrix_rank(S) < dim:
        eps = 1e-8 * tr / dim if tr > 0 else 1e-8
        S = S + eps * np.eye(dim)
        flags = ("regularized",)
    w = np.linalg.solve(S, delta)
    return LinearFit(w=w, b=0.0, flags=flags)


def pegasos_objective(w_aug, Z_aug, y, lam) -> float:
    margins = y * (Z_aug @ w_aug)
    return float(0.5 * lam * w_aug @ w_aug + np.maximum(0.0, 1.0 - margins).mean())


def _pegasos(Z, y, lam, T, seed):
    """Pegasos with unit mini-batches and the ball projection.

    Returns the average of the iterates over the second half of the run; the
    last iterate alone wanders noticeably at small ``lam``.
    """
    n, dim = Z.shape
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, n, size=T)
    w = np.zeros(dim)
    acc = np.zeros(dim)
    start = T // 2
    radius = 1.0 / math.sqrt(lam)
    for t in range(1, T + 1):
        i = picks[t - 1]
        eta = 1.0 / (lam * t)
        margin = y[i] * (Z[i] @ w)
        w *= 1.0 - eta * lam
        if margin < 1.0:
            w += (eta * y[i]) * Z[i]
        norm = math.sqrt(w @ w)
        if norm > radius:
            w *= radius / norm
        if t > start:
            acc += w
    return acc / (T - start)


def train_svm_pegasos(
    Fplus,
    Fminus,
    lam: float = PEGASOS_LAMBDA,
    T: int = PEGASOS_ITERATIONS,
    seed: int = PEGASOS_SEED,
) -> LinearFit:
    """Linear SVM by stochastic subgradient descent on the hinge loss.

    Features are standardized internally and a constant 1 is appended for the
    bias; the returned hyperplane is expressed in the original feature units.
    """
    Xp, Xm = _as_matrix(Fplus), _as_matrix(Fminus)
    if len(Xp) == 0 or len(Xm) == 0:
        raise DataError("SVM needs samples in both classes")
    if not lam > 0 or T < 1:
        raise ValueError("need lam > 0 and T >= 1")
    X = np.vstack([Xp, Xm])
    y = np.concatenate([np.ones(len(Xp)), -np.ones(len(Xm))])
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = np.hstack([(X - mu) / sd, np.ones((len(X), 1))])
    w_aug = _pegasos(Z, y, lam, T, seed)
    w = w_aug[:-1] / sd
    b = float(w @ mu - w_aug[-1])
    if not np.any(w):
        raise DegenerateError("SVM converged to a zero weight vector")
    return LinearFit(w=w, b=b)


class PlattFit(NamedTuple):
    """Logistic calibration ``p(d) = 1 / (1 + exp(-(alpha * d + beta)))``."""

    alpha: float
    beta: float
    capped: bool = False
    inverted: bool = False


def _platt_nll(z, t):
    # -[t log p + (1-t) log(1-p)] with p = sigmoid(z), computed stably
    return float(np.sum(np.logaddexp(0.0, -z) * t + np.logaddexp(0.0, z) * (1.0 - t)))


def fit_platt(distances, labels, alpha_max: float = ALPHA_MAX) -> PlattFit:
    """Maximum-likelihood logistic slope and intercept on signed distances.

    Damped Newton on the 0/1 targets. When the classes are (quasi-)separated
    along ``distances`` the likelihood has no finite maximum; ``|alpha|`` is
    then set to ``alpha_max`` and only the intercept is fitted. The same cap
    applies to finite fits above ``alpha_max``. A negative slope means the
    classes are ordered backwards along ``distances`` and sets ``inverted``.
    """
    d = np.asarray(distances, dtype=np.float64)
    y = np.asarray(labels)
    if not np.isfinite(d).all():
        raise DataError("non-finite distance in Platt fit")
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("Platt fit needs both labels present")
    t = pos.astype(np.float64)

    def newton(params, free):
        """Damped Newton on the coordinates selected by ``free``."""
        params = np.array(params, dtype=np.float64)
        design = np.stack([d, np.ones_like(d)], axis=1)[:, free]
        f = _platt_nll(params[0] * d + params[1], t)
        for _ in range(100):
            z = params[0] * d + params[1]
            p = 0.5 * (1.0 + np.tanh(0.5 * z))
            g = design.T @ (p - t)
            if np.abs(g).max() < 1e-10 * max(1.0, len(d)):
                break
            H = (design * (p * (1.0 - p))[:, None]).T @ design
            H += 1e-12 * np.eye(len(g))
            step = np.linalg.solve(H, g)
            scale = 1.0
            while scale > 1e-10:
                trial = params.copy()
                trial[free] -= scale * step
                f_new = _platt_nll(trial[0] * d + trial[1], t)
                if f_new < f + 1e-4 * scale * (g @ -step):
                    break
                scale *= 0.5
            else:
                break
            params, f = trial, f_new
        return params

    b0 = math.log(n_pos / n_neg)
    if d[pos].min() >= d[~pos].max():
        separated = 1.0
    elif d[pos].max() <= d[~pos].min():
        separated = -1.0
    else:
        separated = 0.0
    capped = False
    if separated:
        capped = True
        alpha, beta = newton([separated * alpha_max, b0], np.array([False, True]))
    else:
        alpha, beta = newton([0.0, b0], np.array([True, True]))
    if not capped and abs(alpha) > alpha_max:
        capped = True
        alpha = math.copysign(alpha_max, alpha)
        alpha, beta = newton([alpha, beta], np.array([False, True]))
    inverted = bool(alpha < 0)
    if inverted:
        logger.warning("Platt fit has negative slope: classes ordered backwards along d")
    return PlattFit(float(alpha), float(beta), capped, inverted)


@dataclass
class SeparabilityPlane:
    """Two calibrated projections plus the normalizing rotation and Y scale.

    Raw plane coordinates are ``d_i = w_i . x - b_i``; normalized coordinates
    rotate ``(d1, d2)`` by ``-phi`` then multiply the second axis by ``gamma``.
    """

    w1: np.ndarray
    b1: float
    w2: np.ndarray
    b2: float
    phi: float = 0.0
    gamma: float = 1.0
    centers: np.ndarray = field(default_factory=lambda: np.full((2, 2), np.nan))
    flags: tuple = ()

    def raw(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.stack([X @ self.w1 - self.b1, X @ self.w2 - self.b2], axis=1)

    def from_raw(self, d) -> np.ndarray:
        c, s = math.cos(self.phi), math.sin(self.phi)
        u = c * d[:, 0] + s * d[:, 1]
        v = self.gamma * (-s * d[:, 0] + c * d[:, 1])
        return np.stack([u, v], axis=1)

    def project(self, X) -> np.ndarray:
        return self.from_raw(self.raw(X))


def _direction(trainer, Xp, Xm, method_opts):
    fit = trainer(Xp, Xm, **method_opts)
    norm = float(np.linalg.norm(fit.w))
    if not np.isfinite(norm) or norm == 0:
        raise DegenerateError("trained weight vector is zero or non-finite")
    return fit.w / norm, fit.flags


def build_plane(Fplus, Fminus, method: str = "lda", **method_opts) -> SeparabilityPlane:
    """Train and calibrate the two orthogonal directions (not yet normalized)."""
    trainer = {"lda": train_lda, "svm": train_svm_pegasos}.get(method)
    if trainer is None:
        raise ValueError(f"unknown method {method!r}")
    Xp, Xm = _as_matrix(Fplus), _as_matrix(Fminus)
    X = np.vstack([Xp, Xm])
    y = np.concatenate([np.ones(len(Xp)), -np.ones(len(Xm))])
    flags = []

    u1, f1 = _direction(trainer, Xp, Xm, method_opts)
    flags += [f"first:{f}" for f in f1]
    cal1 = fit_platt(X @ u1, y)
    if cal1.capped:
        flags.append("first:alpha_capped")
    if cal1.inverted:
        flags.append("first:inverted")
    if cal1.alpha == 0:
        raise DegenerateError("first direction carries no class information")
    w1, b1 = cal1.alpha * u1, -cal1.beta

    # Second direction: train again inside the orthogonal complement of u1.
    Q = null_space(u1[None, :])
    w2 = None
    try:
        u2r, f2 = _direction(trainer, Xp @ Q, Xm @ Q, method_opts)
        u2 = Q @ u2r
        u2 -= (u2 @ u1) * u1
        u2 /= np.linalg.norm(u2)
        cal2 = fit_platt(X @ u2, y)
        if np.isfinite(cal2.alpha) and abs(cal2.alpha) >= MIN_SECOND_ALPHA:
            w2, b2 = cal2.alpha * u2, -cal2.beta
            flags += [f"second:{f}" for f in f2]
            if cal2.capped:
                flags.append("second:alpha_capped")
    except (DegenerateError, np.linalg.LinAlgError) as exc:
        logger.info("second direction training failed: %s", exc)
    if w2 is None:
        # Fall back to the direction of largest residual variance.
        R = X @ Q
        vals, vecs = np.linalg.eigh(np.atleast_2d(np.cov(R, rowvar=False)))
        u2 = Q @ vecs[:, -1]
        u2 -= (u2 @ u1) * u1
        u2 /= np.linalg.norm(u2)
        proj = X @ u2
        sd = float(proj.std())
        sd = sd if sd > 0 else 1.0
        w2, b2 = u2 / sd, float(proj.mean() / sd)
        flags.append("second:fallback_max_variance")
    return SeparabilityPlane(w1=w1, b1=float(b1), w2=w2, b2=float(b2), flags=tuple(flags))


def _class_centers(P, y):
    return np.stack([P[y > 0].mean(axis=0), P[y < 0].mean(axis=0)])


def normalize_plane(plane: SeparabilityPlane, Fplus, Fminus) -> SeparabilityPlane:
    """Rotate class centers onto a horizontal line and equalize axis spreads.

    ``centers`` of the result holds the positive then negative class center
    in normalized coordinates.
    """
    Xp, Xm = _as_matrix(Fplus), _as_matrix(Fminus)
    dp, dm = plane.raw(Xp), plane.raw(Xm)
    delta = dp.mean(axis=0) - dm.mean(axis=0)
    flags = list(plane.flags)
    if not delta.any():
        phi = 0.0
        flags.append("normalize:coincident_centers")
    else:
        phi = math.atan2(delta[1], delta[0])
    rotated = SeparabilityPlane(plane.w1, plane.b1, plane.w2, plane.b2, phi=phi, gamma=1.0)
    rp, rm = rotated.from_raw(dp), rotated.from_raw(dm)
    var_x = 0.5 * (rp[:, 0].var() + rm[:, 0].var())
    var_y = 0.5 * (rp[:, 1].var() + rm[:, 1].var())
    gamma = math.sqrt(var_x / var_y) if var_x > 0 and var_y > 0 else 1.0
    out = SeparabilityPlane(
        plane.w1, plane.b1, plane.w2, plane.b2, phi=phi, gamma=gamma, flags=tuple(flags)
    )
    out.centers = np.stack([out.from_raw(dp).mean(axis=0), out.from_raw(dm).mean(axis=0)])
    return out


@dataclass
class DecisionBoundary:
    """Polyline in normalized plane coordinates.

    The positive side is to the right of the direction of travel. The first
    and last segments extend to infinity, so a 2-vertex boundary is a line.
    """

    vertices: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 2:
            raise DataError("a boundary needs at least 2 vertices")
        if not np.isfinite(v).all():
            raise DataError("boundary vertices must be finite")
        if (np.abs(np.diff(v, axis=0)).sum(axis=1) == 0).any():
            raise DataError("consecutive boundary vertices must be distinct")
        self.vertices = v

    def signed_distance(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=np.float64))
        V = self.vertices
        a, e = V[:-1], np.diff(V, axis=0)
        length = np.sqrt((e**2).sum(axis=1))
        t_hat = e / length[:, None]
        normal = np.stack([t_hat[:, 1], -t_hat[:, 0]], axis=1)
        if len(e) == 1:
            return (P - a[0]) @ normal[0]

        nseg = len(e)
        rel = P[:, None, :] - a[None, :, :]  # (n, seg, 2)
        t = (rel * t_hat[None]).sum(axis=2) / length[None]
        lo = np.zeros(nseg)
        hi = np.ones(nseg)
        lo[0], hi[-1] = -np.inf, np.inf
        tc = np.clip(t, lo, hi)
        closest = a[None] + tc[..., None] * e[None]
        d2 = ((P[:, None, :] - closest) ** 2).sum(axis=2)
        j = np.argmin(d2, axis=1)
        rows = np.arange(len(P))
        perp = (rel[rows, j] * normal[j]).sum(axis=1)
        tj = t[rows, j]
        out = perp.copy()

        # Closest point on a joint: side from the summed normals of both segments.
        at_end = (tj >= 1.0) & (j < nseg - 1)
        at_start = (tj <= 0.0) & (j > 0)
        joint = np.where(at_end, j + 1, np.where(at_start, j, -1))
        m = joint > 0
        if m.any():
            k = joint[m]
            n_sum = normal[k - 1] + normal[k]
            degenerate = (n_sum**2).sum(axis=1) < 1e-24
            n_sum[degenerate] = normal[k - 1][degenerate]
            diff = P[m] - V[k]
            side = np.sign((diff * n_sum).sum(axis=1))
            out[m] = side * np.sqrt((diff**2).sum(axis=1))
        return out


def _kde_sample(P, limit=SEMI_MAX_KDE_SAMPLES):
    if len(P) <= limit:
        return P
    step = int(math.ceil(len(P) / limit))
    return P[::step]


def default_boundary(plane: SeparabilityPlane, Fplus, Fminus, unlabeled=None) -> DecisionBoundary:
    """Automated boundary in normalized plane coordinates (see module docstring)."""
    Xp, Xm = _as_matrix(Fplus), _as_matrix(Fminus)
    Pp, Pm = plane.project(Xp), plane.project(Xm)
    cp, cm = Pp.mean(axis=0), Pm.mean(axis=0)
    allP = np.vstack([Pp, Pm])
    span = float(np.ptp(allP[:, 1])) + float(np.abs(cp - cm).sum()) + 1.0
    y_lo, y_hi = float(allP[:, 1].min()) - span, float(allP[:, 1].max()) + span

    def midpoint(info):
        # Perpendicular bisector of the class centers; exactly vertical once
        # the plane is normalized.
        mid = 0.5 * (cp + cm)
        delta = cp - cm
        if abs(delta[1]) <= 1e-9 * abs(delta[0]):
            return DecisionBoundary(np.array([[mid[0], y_lo], [mid[0], y_hi]]), info=info)
        n = delta / math.hypot(*delta)
        t = np.array([-n[1], n[0]])
        L = 0.5 * (y_hi - y_lo)
        return DecisionBoundary(np.array([mid - L * t, mid + L * t]), info=info)

    if unlabeled is None:
        return midpoint({"method": "midpoint"})
    Pu = plane.project(_as_matrix(unlabeled))
    if len(Pu) == 0:
        return midpoint({"method": "midpoint"})

    everything = _kde_sample(np.vstack([allP, Pu]))
    fractions = np.linspace(0.0, 1.0, SEMI_OFFSET_STEPS)
    origins = cm[None, :] + fractions[:, None] * (cp - cm)[None, :]
    best = None  # (density, -margin, theta, j)
    best_free = None
    for deg in SEMI_ANGLES_DEG:
        th = math.radians(float(deg))
        n = np.array([math.cos(th), -math.sin(th)])
        s_all = everything @ n
        if np.ptp(s_all) == 0:
            continue
        offs = origins @ n
        dens = gaussian_kde(s_all, bw_method="scott")(offs)
        sp = (Pp @ n)[:, None] - offs[None, :]
        sm = (Pm @ n)[:, None] - offs[None, :]
        ok = ((sp > 0).mean(axis=0) >= SEMI_MIN_CLASS_FRACTION) & (
            (sm < 0).mean(axis=0) >= SEMI_MIN_CLASS_FRACTION
        )
        margin = np.minimum(sp.mean(axis=0), -sm.mean(axis=0))
        for j in range(len(offs)):
            key = (float(dens[j]), -float(margin[j]), th, j)
            if best_free is None or key[:2] < best_free[:2]:
                best_free = key
            if ok[j] and (best is None or key[:2] < best[:2]):
                best = key
    if best is None:
        logger.warning("no line keeps both labeled classes on their sides; using midpoint")
        return midpoint({"method": "midpoint", "fallback": True})
    _, _, th, j = best
    direction = np.array([math.sin(th), math.cos(th)])
    o = origins[j]
    L = (y_hi - y_lo) / 2.0
    info = {
        "method": "density",
        "angle_deg": math.degrees(th),
        "offset_fraction": float(fractions[j]),
        "constraint_active": best_free[2:] != best[2:],
    }
    return DecisionBoundary(np.array([o - L * direction, o + L * direction]), info=info)


@dataclass
class BinaryClassifier:
    """Everything needed to classify features: scales, plane, boundary, names."""

    scales: np.ndarray
    plane: SeparabilityPlane
    boundary: DecisionBoundary
    labels: tuple = ("positive", "negative")
    stats: dict = field(default_factory=dict)
    extent: tuple = (-5.0, 5.0, -5.0, 5.0)
    method: str = "lda"

    def check_scales(self, scales) -> None:
        if not np.array_equal(np.asarray(scales, dtype=np.float64), self.scales):
            raise DataError(
                f"scale mismatch: classifier uses {self.scales.tolist()}, "
                f"features use {np.asarray(scales).tolist()}"
            )

    def decision_values(self, X) -> np.ndarray:
        """Signed distance to the boundary in normalized plane units (NaN rows stay NaN)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full(len(X), np.nan)
        ok = np.isfinite(X).all(axis=1)
        if ok.any():
            out[ok] = self.boundary.signed_distance(self.plane.project(X[ok]))
        return out

    def predict(self, features):
        """Labels (+1, -1, or 0 for unusable rows) and confidences in [0.5, 1]."""
        if hasattr(features, "matrix"):
            self.check_scales(features.scales)
            X = features.matrix()
        else:
            X = features
        delta = self.decision_values(X)
        labels = np.where(delta >= 0, 1, -1)
        labels[~np.isfinite(delta)] = 0
        return labels, confidence(delta)


def confidence(delta) -> np.ndarray:
    """Logistic confidence of the chosen side: ``1 / (1 + exp(-|delta|))``."""
    delta = np.asarray(delta, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-np.abs(delta)))


def classify_feature(classifier: BinaryClassifier, feature):
    """``(label, confidence)``; an unusable feature gives ``(0, nan)``."""
    classifier.check_scales(feature.scales)
    labels, conf = classifier.predict(feature.vector[None, :])
    return int(labels[0]), float(conf[0])


def training_stats(classifier: BinaryClassifier, Xp, Xm) -> dict:
    dp = classifier.decision_values(Xp)
    dm = classifier.decision_values(Xm)
    counts = ConfusionCounts(
        tv=int((dp >= 0).sum()), fg=int((dp < 0).sum()), tg=int((dm < 0).sum()), fv=int((dm >= 0).sum())
    )
    return {
        "ba": balanced_accuracy(counts),
        "fdr": fisher_discriminant_ratio(dp, dm),
        "n_positive": len(Xp),
        "n_negative": len(Xm),
    }


def _plot_extent(P):
    lo = np.percentile(P, 0.5, axis=0)
    hi = np.percentile(P, 99.5, axis=0)
    pad = 0.1 * np.maximum(hi - lo, 1e-9)
    return (float(lo[0] - pad[0]), float(hi[0] + pad[0]), float(lo[1] - pad[1]), float(hi[1] + pad[1]))


def train_classifier(
    Fplus,
    Fminus,
    method: str = "lda",
    unlabeled=None,
    labels=("positive", "negative"),
    normalize: bool = True,
    **method_opts,
) -> BinaryClassifier:
    """Full training pipeline from two labeled feature sets."""
    scales = getattr(Fplus, "scales", None)
    if scales is not None and hasattr(Fminus, "scales") and not np.array_equal(scales, Fminus.scales):
        raise DataError("the two training feature sets use different scales")
    if unlabeled is not None and scales is not None and hasattr(unlabeled, "scales"):
        if not np.array_equal(scales, unlabeled.scales):
            raise DataError("unlabeled features use different scales")
    Xp, Xm = _as_matrix(Fplus), _as_matrix(Fminus)
    if len(Xp) == 0 or len(Xm) == 0:
        raise DataError("both classes need usable training samples")
    if scales is None:
        scales = np.arange(1, Xp.shape[1] // 2 + 1, dtype=np.float64)

    plane = build_plane(Xp, Xm, method=method, **method_opts)
    if normalize:
        plane = normalize_plane(plane, Xp, Xm)
    else:
        plane.centers = np.stack([plane.project(Xp).mean(axis=0), plane.project(Xm).mean(axis=0)])
    boundary = default_boundary(plane, Xp, Xm, unlabeled)
    clf = BinaryClassifier(
        scales=np.asarray(scales, dtype=np.float64),
        plane=plane,
        boundary=boundary,
        labels=tuple(labels),
        extent=_plot_extent(plane.project(np.vstack([Xp, Xm]))),
        method=method,
    )
    clf.stats = training_stats(clf, Xp, Xm)
    for flag in plane.flags:
        logger.info("training note: %s", flag)
    return clf


def training_report(clf: BinaryClassifier) -> str:
    lines = [
        f"method: {clf.method}",
        f"classes: {clf.labels[0]} (+1) vs {clf.labels[1]} (-1)",
        f"scales: {' '.join(repr(float(s)) for s in clf.scales)}",
        f"ba: {clf.stats.get('ba')!r}",
        f"fdr: {clf.stats.get('fdr')!r}",
        f"boundary: {clf.boundary.info.get('method', 'edited')}",
        f"flags: {', '.join(clf.plane.flags) or 'none'}",
    ]
    if clf.boundary.info.get("fallback"):
        lines.append("note: semi-supervised constraint infeasible, midpoint boundary used")
    return "\n".join(lines) + "\n"
