"""L2-penalized logistic and linear regression with grid-search cross-validation.

Both models are solved with damped Newton iterations (backtracking line
search) on a smooth, strongly convex objective; convergence is declared at
gradient 2-norm below 1e-6, so any optimizer reaching the same optimum is
interchangeable. The bias term is never penalized.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import metrics

logger = logging.getLogger(__name__)

GRAD_TOL = 1e-6
MAX_NEWTON_ITER = 200


@dataclass
class GridSpec:
    """Hyperparameter grids for downstream model selection."""

    classification_c: tuple = (0.1, 0.5, 1, 5, 10, 50, 100)
    regression_lam: tuple = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1, 5, 10)

    def for_task(self, task):
        return self.classification_c if task == "classification" else self.regression_lam


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    task: str
    hyperparameter: float
    meta: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        """Class-1 probability (classification) or linear value (regression)."""
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.weights):
            raise ValueError(f"expected {len(self.weights)} columns, got {X.shape[1]}")
        z = X @ self.weights + self.bias
        if self.task == "classification":
            return _sigmoid(z)
        return z

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "hyperparameter": self.hyperparameter,
                "weights": [float(w) for w in self.weights],
                "bias": float(self.bias),
                "meta": self.meta,
            },
            indent=2,
            sort_keys=True,
        )


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def class_weights(y, balanced: bool) -> np.ndarray:
    """Per-sample weights n / (2 * n_class) when balanced, else all ones."""
    y = np.asarray(y)
    w = np.ones(len(y))
    if balanced:
        n = len(y)
        for c in (0, 1):
            n_c = int(np.sum(y == c))
            if n_c:
                w[y == c] = n / (2.0 * n_c)
    return w


def logistic_objective(params, X, y, c_inv, sample_weights):
    """Weighted logistic NLL + (1/(2C)) ||w||^2; returns (value, gradient).

    params stacks [weights..., bias]; c_inv = 1/C. The bias is unpenalized.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    yy = 2.0 * y - 1.0  # {0,1} -> {-1,+1}
    m = -yy * z
    # log(1 + e^m), stable for large |m|
    nll_terms = np.where(m > 30, m, np.log1p(np.exp(np.minimum(m, 30))))
    value = float(np.sum(sample_weights * nll_terms)) + 0.5 * c_inv * float(w @ w)
    p = _sigmoid(z)
    r = sample_weights * (p - y)
    grad = np.concatenate([X.T @ r + c_inv * w, [np.sum(r)]])
    return value, grad


def logistic_hessian(params, X, y, c_inv, sample_weights):
    w, b = params[:-1], params[-1]
    p = _sigmoid(X @ w + b)
    s = sample_weights * p * (1.0 - p)
    d = len(w)
    H = np.empty((d + 1, d + 1))
    Xs = X * s[:, None]
    H[:d, :d] = X.T @ Xs + c_inv * np.eye(d)
    H[:d, d] = Xs.sum(axis=0)
    H[d, :d] = H[:d, d]
    H[d, d] = s.sum()
    return H


def ridge_objective(params, X, y, lam, sample_weights=None):
    """(1/(2n)) ||y - Xw - b||^2 + lam ||w||^2; returns (value, gradient)."""
    w, b = params[:-1], params[-1]
    n = len(y)
    r = X @ w + b - y
    value = float(r @ r) / (2.0 * n) + lam * float(w @ w)
    grad = np.concatenate([X.T @ r / n + 2.0 * lam * w, [np.sum(r) / n]])
    return value, grad


def ridge_hessian(params, X, y, lam, sample_weights=None):
    n, d = len(y), X.shape[1]
    H = np.empty((d + 1, d + 1))
    H[:d, :d] = X.T @ X / n + 2.0 * lam * np.eye(d)
    H[:d, d] = X.sum(axis=0) / n
    H[d, :d] = H[:d, d]
    H[d, d] = 1.0
    return H


def _newton(objective, hessian, x0, args, grad_tol=GRAD_TOL, max_iter=MAX_NEWTON_ITER):
    x = np.asarray(x0, dtype=float)
    value, grad = objective(x, *args)
    for _ in range(max_iter):
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise FloatingPointError("optimizer diverged (non-finite objective)")
        if np.linalg.norm(grad) < grad_tol:
            return x, value
        H = hessian(x, *args)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # backtracking line search on the Newton direction
        t = 1.0
        while t > 1e-12:
            x_new = x - t * step
            v_new, g_new = objective(x_new, *args)
            if np.isfinite(v_new) and v_new <= value - 1e-4 * t * float(grad @ step):
                x, value, grad = x_new, v_new, g_new
                break
            t /= 2.0
        else:
            break
    if np.linalg.norm(grad) >= grad_tol:
        raise FloatingPointError(
            f"optimizer failed to reach gradient tolerance {grad_tol:g} "
            f"(final norm {np.linalg.norm(grad):.3g})"
        )
    return x, value


def fit(X, y, task, hyperparameter, class_weighting=False) -> LinearModel:
    """Fit the downstream model at a fixed regularization strength.

    Classification minimizes the (optionally class-balanced) logistic NLL
    plus (1/(2C)) ||w||^2; regression minimizes (1/(2n)) SSE + lam ||w||^2.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be n x d with matching y")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in X or y")
    if hyperparameter <= 0:
        raise ValueError("hyperparameter must be positive")
    d = X.shape[1]
    x0 = np.zeros(d + 1)
    if task == "classification":
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("classification targets must be binary {0,1}")
        sw = class_weights(y, class_weighting)
        args = (X, y, 1.0 / hyperparameter, sw)
        params, _ = _newton(logistic_objective, logistic_hessian, x0, args)
        meta = {"class_weighting": bool(class_weighting)}
        if class_weighting:
            meta["weighting"] = "inverse class frequency, normalized to mean 1"
    elif task == "regression":
        args = (X, y, float(hyperparameter), None)
        params, _ = _newton(ridge_objective, ridge_hessian, x0, args)
        meta = {}
    else:
        raise ValueError(f"unknown task: {task}")
    return LinearModel(weights=params[:-1], bias=float(params[-1]), task=task,
                       hyperparameter=float(hyperparameter), meta=meta)


def cross_val_metric(X, y, task, hyperparameter, folds, class_weighting=None) -> float:
    """Mean CV AUROC (classification) or CV MAE (regression) at one setting.

    Folds whose validation part contains a single class are skipped with a
    warning, since AUROC is undefined there.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if class_weighting is None:
        class_weighting = task == "classification"
    values = []
    for tr, va in folds:
        if task == "classification" and len(np.unique(y[va])) < 2:
            logger.warning("skipping CV fold with a single class in validation")
            continue
        model = fit(X[tr], y[tr], task, hyperparameter, class_weighting)
        pred = model.predict(X[va])
        if task == "classification":
            values.append(metrics.auroc(y[va], pred))
        else:
            values.append(metrics.mae(y[va], pred))
    if not values:
        raise ValueError("no usable CV folds")
    return float(np.mean(values))


def grid_search_cv(X, y, task, grid, folds) -> float:
    """Pick the grid value with the best mean CV metric.

    Ties break toward stronger regularization: the smaller C for
    classification, the larger lam for regression.
    """
    if len(folds) < 2:
        raise ValueError("grid search needs at least 2 folds")
    values = grid.for_task(task) if isinstance(grid, GridSpec) else tuple(grid)
    if not values:
        raise ValueError("empty grid")
    best, best_score = None, None
    # iterate weakest-to-strongest regularization so ties keep the stronger one
    ordered = sorted(values, reverse=task == "classification")
    for h in ordered:
        score = cross_val_metric(X, y, task, h, folds)
        if best is None:
            best, best_score = h, score
        elif task == "classification" and score >= best_score:
            best, best_score = h, score
        elif task == "regression" and score <= best_score:
            best, best_score = h, score
    return float(best)
