"""Fold assignment and regression metrics shared by model selection code."""

from __future__ import annotations

import numpy as np

from ._seeding import rng_for


class CvError(ValueError):
    pass


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label per sample: a seeded shuffle split into near-equal folds."""
    if folds < 2:
        raise CvError("need at least 2 folds")
    if n < folds:
        raise CvError(f"need at least {folds} samples for {folds}-fold CV, got {n}")
    perm = rng_for(seed, "folds").permutation(n)
    labels = np.empty(n, dtype=int)
    for k, part in enumerate(np.array_split(perm, folds)):
        labels[part] = k
    return labels


def regression_metrics(y, pred) -> dict:
    """R^2 = 1 - SS_res/SS_tot, RMSE and MAE of pooled predictions."""
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    err = y - pred
    sst = float(np.sum((y - y.mean()) ** 2))
    return {
        "r2": 1.0 - float(err @ err) / sst if sst > 0 else float("nan"),
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "mae": float(np.mean(np.abs(err))),
    }


def fit_line(measured, predicted) -> dict:
    """Least-squares line predicted ~ measured, for scatter plots."""
    slope, intercept = np.polyfit(np.asarray(measured, float), np.asarray(predicted, float), 1)
    return {"slope": float(slope), "intercept": float(intercept)}
