"""Logistic regression and linear SVM comparison classifiers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset

C_GRID = tuple(10.0 ** k for k in range(-4, 5))
DEFAULT_C = 100.0


class BaselineError(ValueError):
    pass


@dataclass
class LinearModel:
    kind: str  # "logistic" | "svm"
    coefficients: np.ndarray
    intercept: float
    C: float | None = None
    training_config: dict = field(default_factory=dict)
    n_iter: int = 0
    converged: bool = False
    history: list = field(default_factory=list, repr=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.coefficients):
            raise BaselineError(f"expected {len(self.coefficients)} features, got {X.shape[1]}")
        return X @ self.coefficients + self.intercept

    def predict(self, X) -> np.ndarray:
        # decision value 0 is p = 0.5 for LR and the hyperplane itself for SVM; both map to 1
        return (self.decision_function(X) >= 0).astype(np.int64)


def _check(data: LabeledDataset):
    X, y = data.features, data.labels
    if not np.isfinite(X).all():
        raise BaselineError("non-finite feature values")
    if len(np.unique(y)) < 2:
        raise BaselineError("both classes must be present")
    return X, y


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_likelihood(w, b, X, y) -> float:
    """Mean binomial log-likelihood of labels y under p = sigmoid(Xw + b)."""
    z = X @ w + b
    return float(np.mean(y * z - np.logaddexp(0.0, z)))


def log_likelihood_gradient(w, b, X, y):
    """Gradient of :func:`log_likelihood` with respect to (w, b)."""
    r = y - sigmoid(X @ w + b)
    return X.T @ r / len(y), float(r.mean())


def train_logreg(data: LabeledDataset, max_iterations: int = 500, step: float = 1.0,
                 tol: float = 1e-6, seed: int = 0) -> LinearModel:
    """Unregularized logistic regression by full-batch gradient ascent.

    The step is halved whenever it would lower the likelihood, so the loss
    never increases between iterations. Stops when the gradient's max-norm
    drops below ``tol`` or after ``max_iterations``.
    """
    X, y = _check(data)
    y = y.astype(float)
    w = np.zeros(X.shape[1])
    b = 0.0
    ll = log_likelihood(w, b, X, y)
    history = [-ll]
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        gw, gb = log_likelihood_gradient(w, b, X, y)
        if max(np.abs(gw).max(initial=0.0), abs(gb)) < tol:
            converged = True
            it -= 1
            break
        eta = step
        for _ in range(60):
            w_new, b_new = w + eta * gw, b + eta * gb
            ll_new = log_likelihood(w_new, b_new, X, y)
            if ll_new >= ll:
                break
            eta *= 0.5
        else:
            converged = True  # no ascent direction left at float precision
            break
        w, b, ll = w_new, b_new, ll_new
        history.append(-ll)
    config = dict(max_iterations=max_iterations, step=step, tol=tol, seed=seed)
    return LinearModel("logistic", w, b, None, config, it, converged, history)


def predict_logreg(model: LinearModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Classes (1 iff p >= 0.5) and probabilities p."""
    p = sigmoid(model.decision_function(X))
    return (p >= 0.5).astype(np.int64), p


def svm_objective(w, b, X, y_pm, C) -> float:
    """(1/2)||w||^2 + C * sum of hinge losses, labels in {-1, +1}."""
    margins = y_pm * (X @ w + b)
    return float(0.5 * w @ w + C * np.maximum(0.0, 1.0 - margins).sum())


def _best_intercept(s, y_pm) -> float:
    """argmin_b sum_i max(0, 1 - y_i (s_i + b)); ties go to the smallest b."""
    p = np.sort(1.0 - s[y_pm > 0])  # positives are penalized while b < p
    q = np.sort(-1.0 - s[y_pm < 0])  # negatives are penalized while b > q
    cand = np.concatenate([p, q])
    if len(cand) == 0:
        return 0.0
    p_suffix = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
    q_prefix = np.concatenate([[0.0], np.cumsum(q)])
    ip = np.searchsorted(p, cand, side="right")
    iq = np.searchsorted(q, cand, side="left")
    cost = (p_suffix[ip] - cand * (len(p) - ip)) + (cand * iq - q_prefix[iq])
    best = cost.min()
    return float(cand[cost == best].min())


def train_linear_svm(data: LabeledDataset, C: float = DEFAULT_C, epochs: int = 200,
                     seed: int = 0) -> LinearModel:
    """Primal linear SVM by deterministic full-batch sub-gradient descent.

    Works on the objective scaled by 1/(nC), i.e. lambda/2 ||w||^2 + mean
    hinge with lambda = 1/(nC), taking steps of 1/(lambda t) on w with
    projection onto the ball ||w|| <= 1/sqrt(lambda). The unregularized
    intercept is set to its exact minimizer after every step. Of the
    iterates 1..epochs, the one with the lowest objective is returned.
    """
    if not C > 0:
        raise BaselineError("C must be positive")
    if epochs < 1:
        raise BaselineError("epochs must be >= 1")
    X, y = _check(data)
    y_pm = np.where(y == 1, 1.0, -1.0)
    n, d = X.shape
    lam = 1.0 / (n * C)
    radius = 1.0 / np.sqrt(lam)
    w = np.zeros(d)
    b = _best_intercept(X @ w, y_pm)
    # the all-zero start is not a candidate: with large C no later iterate may
    # beat it within the epoch budget, and returning it would be a constant model
    best = (np.inf, w, b)
    history = [svm_objective(w, b, X, y_pm, C)]
    for t in range(1, epochs + 1):
        viol = y_pm * (X @ w + b) < 1.0
        grad = lam * w - (y_pm[viol] @ X[viol]) / n
        w = w - grad / (lam * t)
        norm = np.linalg.norm(w)
        if norm > radius:
            w *= radius / norm
        b = _best_intercept(X @ w, y_pm)
        obj = svm_objective(w, b, X, y_pm, C)
        history.append(obj)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    config = dict(epochs=epochs, step="1/(lambda t)", seed=seed)
    return LinearModel("svm", best[1], best[2], C, config, epochs, True, history)


def predict_svm(model: LinearModel, X) -> np.ndarray:
    """1 iff w.x + b >= 0."""
    return model.predict(X)
