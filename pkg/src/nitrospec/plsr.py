"""Single-response PLS regression (NIPALS) and backward band elimination."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .cv import fold_assignment
from .ensemble import SelectionResult
from .preprocess import SpectralDataset

log = logging.getLogger(__name__)


class PlsError(ValueError):
    pass


@dataclass(frozen=True)
class PlsModel:
    n_components: int
    W: np.ndarray  # weights, p x A
    P: np.ndarray  # x-loadings, p x A
    q: np.ndarray  # y-loadings, A
    T: np.ndarray  # training scores, n x A
    x_means: np.ndarray
    x_sds: np.ndarray
    y_mean: float
    truncated: bool = False

    def coef_for(self, a: int) -> np.ndarray:
        """Regression vector in standardised-X space using the first ``a`` components."""
        a = min(a, self.n_components)
        if a == 0:
            return np.zeros(self.W.shape[0])
        W, P = self.W[:, :a], self.P[:, :a]
        return W @ np.linalg.solve(P.T @ W, self.q[:a])

    @property
    def coef(self) -> np.ndarray:
        return self.coef_for(self.n_components)

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_means) / self.x_sds

    def predict(self, X, a: int | None = None) -> np.ndarray:
        b = self.coef if a is None else self.coef_for(a)
        return self.y_mean + self.standardize(X) @ b


def fit_plsr(X: np.ndarray, y: np.ndarray, n_components: int) -> PlsModel:
    """NIPALS on standardised X and centred y.

    Stops early (``truncated=True``) once y has been fully explained, possibly
    with zero components when y is orthogonal to X.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if not 1 <= n_components <= min(n - 1, p):
        raise PlsError(f"n_components must be in [1, {min(n - 1, p)}], got {n_components}")
    x_means = X.mean(axis=0)
    x_sds = X.std(axis=0, ddof=1)
    bad = np.nonzero(~(x_sds > 0))[0]
    if bad.size:
        raise PlsError(f"column {int(bad[0])} is constant")
    E = (X - x_means) / x_sds
    y_mean = float(y.mean())
    f = y - y_mean
    scale = np.sqrt(np.sum(E * E)) * np.sqrt(f @ f) + 1e-300

    W = np.zeros((p, n_components))
    P = np.zeros((p, n_components))
    T = np.zeros((n, n_components))
    q = np.zeros(n_components)
    a = 0
    truncated = False
    for a in range(n_components):
        w = E.T @ f
        norm = np.sqrt(w @ w)
        if norm <= 1e-12 * scale:
            truncated = True
            break
        w /= norm
        t = E @ w
        tt = t @ t
        pl = E.T @ t / tt
        qa = (f @ t) / tt
        E = E - np.outer(t, pl)
        f = f - qa * t
        W[:, a], P[:, a], T[:, a], q[a] = w, pl, t, qa
    else:
        a = n_components
    if truncated:
        # a == 0 means y is orthogonal to every column: the model predicts mean(y)
        log.info("PLS stopped after %d of %d components (y fully deflated)", a, n_components)
    return PlsModel(a, W[:, :a], P[:, :a], q[:a], T[:, :a], x_means, x_sds, y_mean, truncated)


def max_components(n: int, p: int, folds: int, a_max: int) -> int:
    return max(1, min(a_max, n - math.ceil(n / folds) - 1, p))


def cv_predictions(X, y, labels: np.ndarray, a_hi: int) -> np.ndarray:
    """Out-of-fold predictions for every component count 1..a_hi, shape (a_hi, n)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.empty((a_hi, len(y)))
    for k in np.unique(labels):
        test = labels == k
        model = fit_plsr(X[~test], y[~test], min(a_hi, (~test).sum() - 1, X.shape[1]))
        Zt = model.standardize(X[test])
        for a in range(1, a_hi + 1):
            out[a - 1, test] = model.y_mean + Zt @ model.coef_for(a)
    return out


def choose_components(X, y, a_max: int = 20, folds: int = 10, seed: int = 0,
                      labels: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Component count minimising pooled CV MSE (ties to fewer). Returns (A, mse per A)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if labels is None:
        labels = fold_assignment(n, folds, seed)
    a_hi = max_components(n, p, folds, a_max)
    pred = cv_predictions(X, y, labels, a_hi)
    mse = np.mean((pred - y) ** 2, axis=1)
    return int(np.argmin(mse)) + 1, mse


def _r2(y, pred) -> float:
    sst = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - pred) ** 2)) / sst if sst > 0 else float("nan")


def backward_select(X, y, folds: int = 10, seed: int = 0, min_features: int = 2,
                    a_max: int = 20):
    """Drop the smallest-|coef| band one at a time; keep the best CV-MSE subset.

    Returns ``(selected, importance_order, curve)`` where ``curve`` holds
    ``(m, mse, r2)`` per visited subset size, ascending in m.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    labels = fold_assignment(n, folds, seed)
    current = list(range(p))
    removed = []
    trajectory = []
    while True:
        Xc = X[:, current]
        a, mse = choose_components(Xc, y, a_max=a_max, folds=folds, labels=labels)
        pred = cv_predictions(Xc, y, labels, a)[a - 1]
        trajectory.append((len(current), float(mse[a - 1]), _r2(y, pred), list(current)))
        if len(current) <= max(min_features, 1):
            break
        coef = fit_plsr(Xc, y, a).coef
        drop = int(np.argmin(np.abs(coef)))
        removed.append(current.pop(drop))
    # lowest MSE wins, ties to the smaller subset (visited later)
    best = min(range(len(trajectory)), key=lambda k: (trajectory[k][1], trajectory[k][0]))
    selected = sorted(trajectory[best][3])
    final = trajectory[-1][3]
    if len(final) > 1:
        a_fin, _ = choose_components(X[:, final], y, a_max=a_max, folds=folds, labels=labels)
        c = np.abs(fit_plsr(X[:, final], y, a_fin).coef)
        final = [final[k] for k in np.argsort(-c, kind="stable")]
    order = list(final) + removed[::-1]
    curve = sorted((m, mse, r2) for m, mse, r2, _ in trajectory)
    return selected, order, curve


def plsr_backward_select(ds: SpectralDataset, folds: int = 10, seed: int = 0,
                         min_features: int = 2, a_max: int = 20) -> SelectionResult:
    ds.require_target()
    selected, order, curve = backward_select(ds.X, ds.y, folds, seed, min_features, a_max)
    result_curve = tuple((m, math.sqrt(mse), r2) for m, mse, r2 in curve)
    return SelectionResult("plsr", ds.grid, np.asarray(order), np.asarray(selected),
                           result_curve, len(selected))
