"""Evaluation metrics, feature-importance metrics, and selection-path tools."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

IMPORTANCE_METRICS = ("fisher", "mi", "pearson", "spearman", "permutation", "shapley_exact")


def auroc(labels, scores) -> float:
    """Area under the ROC curve, tie-aware (Mann-Whitney form).

    Equals P(score+ > score-) + 0.5 * P(score+ = score-) over all
    positive/negative pairs. Computed from average ranks in O(n log n).
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape:
        raise ValueError("labels and scores must have the same length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc requires both classes present")
    ranks = stats.rankdata(scores)  # average ranks handle ties
    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def mae(y, yhat) -> float:
    """Mean absolute error."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("length mismatch")
    if y.size == 0:
        raise ValueError("mae of empty input")
    return float(np.mean(np.abs(y - yhat)))


def kendall_tau(a, b) -> float:
    """Kendall's tau-b rank correlation (tie-corrected).

    (concordant - discordant) / sqrt((n0 - n1)(n0 - n2)) with the standard
    tie counts n1, n2 for each vector.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("kendall_tau needs two equal-length vectors, n >= 2")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValueError("kendall_tau undefined for an all-tied vector")
    tau = stats.kendalltau(a, b, variant="b").statistic
    return float(tau)


def fisher_score(X, y) -> np.ndarray:
    """Per-feature Fisher score for binary labels.

    F_j = sum_c n_c (mu_cj - mu_j)^2 / (sum_c n_c var_cj + eps) with
    population variances and eps = 1e-12.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) != 2:
        raise ValueError("fisher_score requires exactly two classes")
    eps = 1e-12
    mu = X.mean(axis=0)
    num = np.zeros(X.shape[1])
    den = np.zeros(X.shape[1])
    for c in classes:
        Xc = X[y == c]
        num += len(Xc) * (Xc.mean(axis=0) - mu) ** 2
        den += len(Xc) * Xc.var(axis=0)
    return num / (den + eps)


def correlation_scores(X, y, kind: str = "pearson") -> np.ndarray:
    """Per-feature |correlation| with the target; spearman ranks first."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise ValueError("need n >= 2")
    if kind == "spearman":
        X = np.apply_along_axis(stats.rankdata, 0, X)
        y = stats.rankdata(y)
    elif kind != "pearson":
        raise ValueError(f"unknown correlation kind: {kind}")
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((Xc**2).sum(axis=0))
    sy = math.sqrt(float((yc**2).sum()))
    out = np.zeros(X.shape[1])
    ok = (sx > 0) & (sy > 0)
    if not np.all(ok):
        logger.warning("correlation_scores: %d zero-variance feature(s) scored 0", int((~ok).sum()))
    out[ok] = np.abs(Xc[:, ok].T @ yc) / (sx[ok] * sy)
    return out


def permutation_importance(model, X_test, y_test, repeats: int = 30, seed: int = 0) -> np.ndarray:
    """Mean drop in test performance when each feature column is shuffled.

    Uses AUROC for classification and negative MAE for regression, so a
    larger value always means a more important feature.
    """
    X_test = np.asarray(X_test, dtype=float)
    y_test = np.asarray(y_test)
    rng = np.random.default_rng(seed)

    def score(X):
        pred = model.predict(X)
        if model.task == "classification":
            return auroc(y_test, pred)
        return -mae(y_test, pred)

    baseline = score(X_test)
    out = np.zeros(X_test.shape[1])
    for j in range(X_test.shape[1]):
        drops = []
        for _ in range(repeats):
            Xp = X_test.copy()
            Xp[:, j] = Xp[rng.permutation(len(Xp)), j]
            drops.append(baseline - score(Xp))
        out[j] = float(np.mean(drops))
    return out


def exact_shapley(trainer, X, y, metric: str, max_features: int = 10) -> np.ndarray:
    """Exact Shapley values by full subset enumeration (d <= max_features).

    The characteristic function is v(S) = trainer(X[:, S], y), typically a
    cross-validated downstream metric. For "mae" the utility is negated so
    larger is better; the empty subset is evaluated by the trainer on a
    zero-column matrix, which for a bias-only linear model yields chance
    AUROC (0.5) or the MAE of the mean predictor.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d > max_features:
        raise ValueError(f"exact_shapley limited to {max_features} features, got {d}")
    if metric not in ("auroc", "mae"):
        raise ValueError(f"unknown metric: {metric}")
    sign = 1.0 if metric == "auroc" else -1.0

    values = {}
    for mask in range(2**d):
        cols = [j for j in range(d) if mask >> j & 1]
        values[mask] = sign * float(trainer(X[:, cols], y))

    phi = np.zeros(d)
    fact = [math.factorial(i) for i in range(d + 1)]
    for mask in range(2**d):
        s = bin(mask).count("1")
        weight = fact[s] * fact[d - s - 1] / fact[d]
        for j in range(d):
            if not mask >> j & 1:
                phi[j] += weight * (values[mask | (1 << j)] - values[mask])
    return phi


@dataclass
class SelectionPath:
    """Downstream test metric as a function of the fraction of features kept."""

    points: list  # (fraction, metric_value) pairs, fractions ascending
    metric: str  # "auroc" | "mae"
    method: str = ""
    dataset: str = ""
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        fracs = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(fracs, fracs[1:])):
            raise ValueError("fractions must be strictly increasing")
        if fracs and not (0 < fracs[0] and abs(fracs[-1] - 1.0) < 1e-12):
            raise ValueError("fractions must lie in (0, 1] and end at 1.0")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fraction", "value"])
        for frac, val in self.points:
            w.writerow([f"{frac:.10g}", f"{val:.12g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "metric": self.metric,
            "method": self.method,
            "dataset": self.dataset,
            "seed": self.seed,
            "points": [[float(f), float(v)] for f, v in self.points],
        }
        if self.extra:
            doc["extra"] = self.extra
        return json.dumps(doc, indent=2, sort_keys=True)


def selection_path(select_columns, prepared, split, fractions, grid=None, method: str = "",
                   dataset: str = "", seed: int = 0) -> SelectionPath:
    """Evaluate a selection rule across fractions of features kept.

    ``select_columns(fraction)`` must return the column indices to keep.
    For each fraction the downstream model is tuned by grid-search CV on the
    training split, refit on the full training split, and scored on the test
    split (AUROC for classification, MAE for regression).
    """
    from . import models  # runtime import; models depends on this module's metrics

    fractions = [float(f) for f in fractions]
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be ascending")
    if abs(fractions[-1] - 1.0) > 1e-12:
        raise ValueError("fractions must include 1.0")
    if grid is None:
        grid = models.GridSpec()

    task = prepared.task
    X, y = prepared.X, prepared.y
    tr, te = split.train, split.test
    points = []
    for frac in fractions:
        cols = np.asarray(select_columns(frac), dtype=int)
        if cols.size == 0:
            raise ValueError(f"selection at fraction {frac} yielded no columns")
        Xtr, Xte = X[np.ix_(tr, cols)], X[np.ix_(te, cols)]
        best = models.grid_search_cv(Xtr, y[tr], task, grid, split.folds_local)
        model = models.fit(Xtr, y[tr], task, best, class_weighting=task == "classification")
        pred = model.predict(Xte)
        value = auroc(y[te], pred) if task == "classification" else mae(y[te], pred)
        points.append((frac, float(value)))
    return SelectionPath(points=points, metric="auroc" if task == "classification" else "mae",
                         method=method, dataset=dataset, seed=seed)


def path_area(path: SelectionPath) -> float:
    """Trapezoidal area under a selection path, normalized by fraction span.

    The normalization makes the area a metric-scale average height, so it is
    comparable across datasets whose smallest fraction differs.
    """
    pts = path.points if isinstance(path, SelectionPath) else list(path)
    if len(pts) < 2:
        raise ValueError("path_area needs at least two points")
    x = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    area = float(np.sum((v[1:] + v[:-1]) * np.diff(x)) / 2.0)
    return area / float(x[-1] - x[0])


def pct_improvement(area_variant: float, area_default: float, task: str) -> float:
    """Percent improvement of a variant's path area over the default's.

    Classification improves with a larger area; regression with a smaller one.
    """
    if area_default == 0:
        raise ValueError("default area is zero")
    if task == "classification":
        return 100.0 * (area_variant - area_default) / area_default
    return 100.0 * (area_default - area_variant) / area_default
