"""Ensemble feature ranking over repeated 90% subsamples and six rankers.

Each (iteration, ranker) cell yields an importance vector that is min-max
normalised and turned into ranks (1 = most important, ties share the mean
rank). Average ranks across all cells order the bands; a leave-one-out MLR
curve over the top-m bands then picks how many to keep.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from . import linear, trees
from ._seeding import derive_seed, rng_for
from .preprocess import SpectralDataset

log = logging.getLogger(__name__)

RANKER_NAMES = ("f_score", "lasso", "ridge", "random_forest", "extra_trees", "gradient_boosting")
PENALTY_GRID = tuple(np.logspace(-4, 0, 5))
MAX_FAILED_FRACTION = 0.2


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    n_iterations: int = 50
    train_fraction: float = 0.9
    master_seed: int = 0
    rankers: tuple = RANKER_NAMES
    n_trees: int = 100

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        unknown = set(self.rankers) - set(RANKER_NAMES)
        if unknown:
            raise ValueError(f"unknown rankers: {sorted(unknown)}")
        object.__setattr__(self, "rankers", tuple(self.rankers))


@dataclass(frozen=True)
class FeatureRanking:
    band_order: np.ndarray
    avg_rank: np.ndarray
    contributions: dict = field(repr=False)  # (iteration, ranker) -> normalised importances
    failures: tuple = ()


@dataclass(frozen=True)
class SelectionResult:
    """Selected band indices (into ``grid``) plus the curve that chose them."""

    method: str
    grid: np.ndarray
    band_order: np.ndarray
    selected_bands: np.ndarray
    curve: tuple  # (m, rmse, r2) with None for failed points
    chosen_m: int

    @property
    def selected_nm(self) -> list[float]:
        return [float(self.grid[i]) for i in self.selected_bands]


# -- rankers ------------------------------------------------------------------

def _folds(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    return np.array_split(rng.permutation(n), k)


def _cv_penalty(Z, y, fit, seed, k=3):
    folds = _folds(len(y), k, rng_for(seed, "penalty-folds"))
    errs = np.zeros(len(PENALTY_GRID))
    for test in folds:
        train = np.setdiff1d(np.arange(len(y)), test)
        coef = None
        # largest penalty first so lasso can warm-start down the path
        for j in range(len(PENALTY_GRID) - 1, -1, -1):
            try:
                f = fit(Z[train], y[train], PENALTY_GRID[j], coef)
            except linear.LinearModelError:
                errs[j] = np.inf
                continue
            coef = f.coef
            errs[j] += float(np.sum((y[test] - f.predict(Z[test])) ** 2))
    if not np.any(np.isfinite(errs)):
        raise linear.ConvergenceError("no penalty value could be fitted")
    return PENALTY_GRID[int(np.argmin(errs))]


def _lasso(Z, y, lam, coef0=None):
    return linear.lasso_fit(Z, y, lam, coef0=coef0)


def _ridge(Z, y, lam, coef0=None):
    return linear.ridge_fit(Z, y, lam)


def rank_f_score(Z, y, seed, n_trees):
    return linear.f_scores(Z, y)


def rank_lasso(Z, y, seed, n_trees):
    lam = _cv_penalty(Z, y, _lasso, seed)
    return np.abs(linear.lasso_fit(Z, y, lam).coef)


def rank_ridge(Z, y, seed, n_trees):
    lam = _cv_penalty(Z, y, _ridge, seed)
    return np.abs(linear.ridge_fit(Z, y, lam).coef)


def rank_random_forest(Z, y, seed, n_trees):
    return trees.fit_random_forest(Z, y, n_trees=n_trees, seed=seed).feature_importances


def rank_extra_trees(Z, y, seed, n_trees):
    return trees.fit_extra_trees(Z, y, n_trees=n_trees, seed=seed).feature_importances


def rank_gradient_boosting(Z, y, seed, n_trees):
    p = trees.BoostParams(n_estimators=n_trees, max_depth=3, learning_rate=0.1,
                          subsample=1.0, seed=seed)
    return trees.fit_gradient_boosting(Z, y, p).feature_importances


RANKERS: dict[str, Callable] = {
    "f_score": rank_f_score,
    "lasso": rank_lasso,
    "ridge": rank_ridge,
    "random_forest": rank_random_forest,
    "extra_trees": rank_extra_trees,
    "gradient_boosting": rank_gradient_boosting,
}


def minmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    lo, hi = v.min(), v.max()
    return (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)


def to_ranks(importance: np.ndarray) -> np.ndarray:
    return rankdata(-np.asarray(importance, dtype=float), method="average")


# -- ensemble -----------------------------------------------------------------

def _run_iteration(i, X, y, cfg: EnsembleConfig, funcs: Mapping[str, Callable]):
    n = len(y)
    size = math.ceil(cfg.train_fraction * n)
    rows = np.sort(rng_for(cfg.master_seed, "subset", i).choice(n, size=size, replace=False))
    out = {}
    fails = []
    try:
        Z, _, _ = linear.standardize(X[rows])
    except linear.LinearModelError as exc:
        return out, [((i, name), str(exc)) for name in cfg.rankers]
    yi = y[rows]
    for name in cfg.rankers:
        seed = derive_seed(cfg.master_seed, i, name)
        try:
            imp = np.asarray(funcs[name](Z, yi, seed, cfg.n_trees), dtype=float)
            if imp.shape != (X.shape[1],) or not np.all(np.isfinite(imp)):
                raise ValueError("ranker returned an invalid importance vector")
        except (ValueError, np.linalg.LinAlgError, trees.TreeError) as exc:
            fails.append(((i, name), str(exc)))
            continue
        out[(i, name)] = minmax(imp)
    return out, fails


def rank_features(X: np.ndarray, y: np.ndarray, cfg: EnsembleConfig = EnsembleConfig(),
                  threads: int = 1, rankers: Mapping[str, Callable] | None = None) -> FeatureRanking:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 10:
        raise EnsembleError("ensemble ranking needs at least 10 samples")
    funcs = dict(RANKERS)
    if rankers:
        funcs.update(rankers)

    def job(i):
        return _run_iteration(i, X, y, cfg, funcs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(cfg.n_iterations)))
    else:
        results = [job(i) for i in range(cfg.n_iterations)]

    contributions = {}
    failures = []
    for cells, fails in results:
        contributions.update(cells)
        failures.extend(fails)
    for (cell, msg) in failures:
        log.warning("ranker cell %s skipped: %s", cell, msg)
    total = cfg.n_iterations * len(cfg.rankers)
    if len(failures) > MAX_FAILED_FRACTION * total:
        raise EnsembleError(f"{len(failures)} of {total} ranker cells failed")

    keys = sorted(contributions)
    ranks = np.array([to_ranks(contributions[k]) for k in keys])
    avg = ranks.mean(axis=0)
    order = np.argsort(avg, kind="stable")
    return FeatureRanking(order, avg, {k: contributions[k] for k in keys}, tuple(failures))


def run_ensemble_ranking(ds: SpectralDataset, cfg: EnsembleConfig = EnsembleConfig(),
                         threads: int = 1, rankers=None) -> FeatureRanking:
    ds.require_target()
    return rank_features(ds.X, ds.y, cfg, threads=threads, rankers=rankers)


def count_curve(X: np.ndarray, y: np.ndarray, order: Sequence[int], m_max: int) -> list:
    """LOOCV (m, rmse, r2) of an MLR on the top-m bands of ``order``."""
    curve = []
    for m in range(1, m_max + 1):
        try:
            rmse, r2 = linear.loocv_mlr(X[:, np.asarray(order[:m])], y)
            curve.append((m, rmse, r2))
        except linear.LinearModelError as exc:
            log.warning("LOOCV failed at m=%d: %s", m, exc)
            curve.append((m, None, None))
    return curve


def plateau_count(curve, epsilon: float) -> int:
    valid = [(m, r2) for m, _, r2 in curve if r2 is not None and np.isfinite(r2)]
    if not valid:
        raise EnsembleError("no valid point on the feature-count curve")
    best = max(r2 for _, r2 in valid)
    return min(m for m, r2 in valid if r2 >= best - epsilon)


def select_optimal_count(ranking: FeatureRanking, ds: SpectralDataset, epsilon: float = 0.005,
                         m_max: int = 40) -> SelectionResult:
    ds.require_target()
    m_max = min(m_max, ds.n_bands, ds.n_samples - 3)
    if m_max < 1:
        raise EnsembleError("too few samples for the feature-count curve")
    curve = count_curve(ds.X, ds.y, ranking.band_order, m_max)
    chosen = plateau_count(curve, epsilon)
    order = np.asarray(ranking.band_order)
    return SelectionResult("ensemble", ds.grid, order, np.sort(order[:chosen]), tuple(curve), chosen)
