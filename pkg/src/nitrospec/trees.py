"""Regression trees and ensembles: CART, random forest, extra trees, boosting.

All models are plain dataclasses holding flat node arrays; growth happens in
the numba kernels of :mod:`nitrospec._tree_kernels`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _tree_kernels as K

MODEL_FORMAT = "nitrospec-tree-model"
MODEL_VERSION = 1
UNLIMITED_DEPTH = 1 << 30


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: str = "all"  # all | third | sqrt
    split_mode: str = "exact_best"  # exact_best | random_threshold

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise TreeError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise TreeError("min_samples_split must be >= 2")
        if self.max_features not in ("all", "third", "sqrt"):
            raise TreeError(f"unknown max_features: {self.max_features}")
        if self.split_mode not in ("exact_best", "random_threshold"):
            raise TreeError(f"unknown split_mode: {self.split_mode}")

    def n_candidates(self, p: int) -> int:
        if self.max_features == "third":
            return max(1, p // 3)
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(p)))
        return p

    @property
    def depth_limit(self) -> int:
        return UNLIMITED_DEPTH if self.max_depth is None else int(self.max_depth)


@dataclass(frozen=True)
class BoostParams:
    n_estimators: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    subsample: float = 1.0
    l2_leaf: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise TreeError("n_estimators must be >= 0")
        if self.max_depth < 1:
            raise TreeError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise TreeError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise TreeError("subsample must be in (0, 1]")
        if self.l2_leaf < 0:
            raise TreeError("l2_leaf must be >= 0")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left == K.LEAF))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return K.predict_tree(np.ascontiguousarray(X, dtype=float), self.feature,
                              self.threshold, self.left, self.right, self.value)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
            gain=np.asarray(d["gain"], dtype=float),
        )


def _importances(trees: Sequence[Tree], p: int) -> np.ndarray:
    imp = np.zeros(p)
    for t in trees:
        split = t.left != K.LEAF
        np.add.at(imp, t.feature[split], t.gain[split])
    total = imp.sum()
    return imp / total if total > 0 else imp


@dataclass(frozen=True)
class ForestModel:
    kind: str  # cart | random_forest | extra_trees
    trees: tuple
    n_features: int
    params: TreeParams
    seed: int = 0
    feature_importances: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.feature_importances is None:
            object.__setattr__(self, "feature_importances",
                               _importances(self.trees, self.n_features))

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)


@dataclass(frozen=True)
class BoostModel:
    kind: str  # gradient | newton
    trees: tuple
    base_prediction: float
    n_features: int
    params: BoostParams
    train_loss: tuple = ()
    feature_importances: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.feature_importances is None:
            object.__setattr__(self, "feature_importances",
                               _importances(self.trees, self.n_features))

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        F = np.full(X.shape[0], self.base_prediction)
        lr = self.params.learning_rate
        for t in self.trees:
            F += lr * t.predict(X)
        return F


def _check_X(X, p: int) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != p:
        raise TreeError(f"expected {p} feature columns, got shape {X.shape}")
    return X


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise TreeError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if X.shape[0] == 0:
        raise TreeError("empty training set")
    return X, y


def _alloc(n_trees: int, n_nodes: int):
    return (np.full((n_trees, n_nodes), K.LEAF, np.int64), np.zeros((n_trees, n_nodes)),
            np.full((n_trees, n_nodes), K.LEAF, np.int64),
            np.full((n_trees, n_nodes), K.LEAF, np.int64), np.zeros((n_trees, n_nodes)),
            np.zeros((n_trees, n_nodes)), np.zeros(n_trees, np.int64))


def _unpack(arrays, n_trees: int) -> tuple:
    feat, thr, lft, rgt, val, gn, counts = arrays
    return tuple(
        Tree(feat[t, :c].copy(), thr[t, :c].copy(), lft[t, :c].copy(), rgt[t, :c].copy(),
             val[t, :c].copy(), gn[t, :c].copy())
        for t, c in ((t, int(counts[t])) for t in range(n_trees))
    )


def _key(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)


def fit_cart(X, y, params: TreeParams = TreeParams(), seed: int = 0) -> ForestModel:
    """Single regression tree on all rows.

    Rows are put in lexicographic order of (features, target) first, so the
    fitted tree does not depend on the order samples arrive in.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    Xs = np.ascontiguousarray(X[order])
    ys = np.ascontiguousarray(y[order])
    arrays = _alloc(1, 2 * n - 1)
    feat, thr, lft, rgt, val, gn, counts = arrays
    counts[0] = K.grow_tree(Xs, ys, np.arange(n), params.depth_limit, params.min_samples_split,
                            params.n_candidates(p), params.split_mode == "random_threshold", 0.0,
                            _key(seed), feat[0], thr[0], lft[0], rgt[0], val[0], gn[0])
    return ForestModel("cart", _unpack(arrays, 1), p, params, int(seed))


def _fit_forest(kind, X, y, n_trees, params, seed, bootstrap):
    X, y = _check_xy(X, y)
    n, p = X.shape
    if n < 2:
        raise TreeError("forests need at least 2 samples")
    if n_trees < 1:
        raise TreeError("n_trees must be >= 1")
    arrays = _alloc(n_trees, 2 * n - 1)
    K.fit_forest(X, y, n_trees, params.depth_limit, params.min_samples_split,
                 params.n_candidates(p), params.split_mode == "random_threshold", bootstrap,
                 _key(seed), *arrays)
    return ForestModel(kind, _unpack(arrays, n_trees), p, params, int(seed))


def fit_random_forest(X, y, n_trees: int = 100, params: TreeParams | None = None,
                      seed: int = 0, bootstrap: bool = True) -> ForestModel:
    """Bagged exact-split trees; each tree sees n draws with replacement."""
    params = params or TreeParams(max_features="third")
    params = dataclasses.replace(params, split_mode="exact_best")
    return _fit_forest("random_forest", X, y, n_trees, params, seed, bootstrap)


def fit_extra_trees(X, y, n_trees: int = 100, params: TreeParams | None = None,
                    seed: int = 0) -> ForestModel:
    """Trees on the full sample with one uniform random threshold per candidate feature."""
    params = params or TreeParams(max_features="third")
    params = dataclasses.replace(params, split_mode="random_threshold")
    return _fit_forest("extra_trees", X, y, n_trees, params, seed, False)


def _fit_boost(kind, X, y, p: BoostParams, l2: float) -> BoostModel:
    X, y = _check_xy(X, y)
    n, nf = X.shape
    n_sub = n if p.subsample >= 1 else max(1, int(np.floor(p.subsample * n)))
    rounds = p.n_estimators
    arrays = _alloc(max(rounds, 1), 2 * n_sub - 1)
    loss = np.zeros(max(rounds, 1))
    base = K.fit_boost(X, y, rounds, p.max_depth, float(p.learning_rate), n_sub, float(l2),
                       _key(p.seed), *arrays, loss)
    trees = _unpack(arrays, rounds)
    return BoostModel(kind, trees, float(base), nf, p, tuple(loss[:rounds].tolist()))


def fit_gradient_boosting(X, y, p: BoostParams) -> BoostModel:
    """First-order boosting: each round fits a mean-leaf CART to the residuals."""
    return _fit_boost("gradient", X, y, p, 0.0)


def fit_newton_boosting(X, y, p: BoostParams) -> BoostModel:
    """Second-order boosting; leaves are sum(residual) / (count + l2_leaf)."""
    return _fit_boost("newton", X, y, p, p.l2_leaf)


def predict(model, X) -> np.ndarray:
    return model.predict(X)


# -- serialisation --------------------------------------------------------------

def model_to_dict(model) -> dict:
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": model.kind,
           "n_features": model.n_features, "params": dataclasses.asdict(model.params),
           "feature_importances": model.feature_importances.tolist(),
           "trees": [t.to_dict() for t in model.trees]}
    if isinstance(model, BoostModel):
        doc["base_prediction"] = model.base_prediction
    else:
        doc["seed"] = model.seed
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise TreeError("not a tree-model document")
    if doc.get("version") != MODEL_VERSION:
        raise TreeError(f"unsupported model version {doc.get('version')}")
    trees = tuple(Tree.from_dict(t) for t in doc["trees"])
    imp = np.asarray(doc["feature_importances"], dtype=float)
    if doc["kind"] in ("gradient", "newton"):
        return BoostModel(doc["kind"], trees, float(doc["base_prediction"]), int(doc["n_features"]),
                          BoostParams(**doc["params"]), feature_importances=imp)
    return ForestModel(doc["kind"], trees, int(doc["n_features"]), TreeParams(**doc["params"]),
                       int(doc.get("seed", 0)), feature_importances=imp)


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model), indent=1)


def loads_model(text: str):
    return model_from_dict(json.loads(text))
