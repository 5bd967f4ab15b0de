"""Second-order gradient boosting and a Gini random forest, exact greedy.

Both families share a flat-array tree representation (node lists with child
indices) that serializes to JSON and reproduces predictions bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ._tree_kernels import build_boost_tree, build_gini_tree, tree_predict_add

PROB_EPS = 1e-15


@dataclass(frozen=True)
class BoostParams:
    """Boosting hyperparameters; defaults are the experiment's operating point."""

    n_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.12
    subsample: float = 0.7
    colsample_bytree: float = 0.75
    reg_lambda: float = 5.0
    reg_alpha: float = 5.0
    min_child_weight: float = 9.0
    gamma: float = 0.3
    base_score: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not (0.0 < self.subsample <= 1.0):
            raise ValueError("subsample must be in (0, 1]")
        if not (0.0 < self.colsample_bytree <= 1.0):
            raise ValueError("colsample_bytree must be in (0, 1]")
        if self.reg_lambda < 0 or self.reg_alpha < 0 or self.gamma < 0:
            raise ValueError("regularization terms must be >= 0")
        if self.min_child_weight < 0:
            raise ValueError("min_child_weight must be >= 0")
        if not (0.0 < self.base_score < 1.0):
            raise ValueError("base_score must be in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters; defaults are the experiment's operating point."""

    n_trees: int = 100
    max_depth: int = 18
    min_samples_leaf: int = 4
    max_features: Optional[int] = None  # None means floor(sqrt(d))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf, children are indices."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

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
    def from_dict(cls, raw: dict) -> "Tree":
        return cls(
            feature=np.asarray(raw["feature"], dtype=np.int64),
            threshold=np.asarray(raw["threshold"], dtype=float),
            left=np.asarray(raw["left"], dtype=np.int64),
            right=np.asarray(raw["right"], dtype=np.int64),
            value=np.asarray(raw["value"], dtype=float),
            gain=np.asarray(raw["gain"], dtype=float),
        )


@dataclass
class TrainHistory:
    """Per-iteration training curves; val lists are empty without an eval set."""

    train_logloss: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    val_logloss: List[float] = field(default_factory=list)
    val_acc: List[float] = field(default_factory=list)


@dataclass
class Booster:
    trees: List[Tree]
    params: BoostParams
    feature_count: int
    base_logit: float
    history: Optional[TrainHistory] = None


@dataclass
class Forest:
    trees: List[Tree]
    params: ForestParams
    feature_count: int
    bootstrap_indices: Optional[List[np.ndarray]] = None


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1.0 - p)))


def labels_from_proba(p: np.ndarray) -> np.ndarray:
    """Class labels at probability threshold 0.5; an exact tie goes to class 0."""
    return (np.asarray(p) > 0.5).astype(np.int64)


def _validate_xy(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if y.shape != (X.shape[0],):
        raise ValueError("y must be a vector aligned with the rows of X")
    if not np.isfinite(X).all():
        raise ValueError("X must be finite")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("y must contain only 0 and 1")
    if np.unique(y).size < 2:
        raise ValueError("training labels contain a single class")
    return X, y


def round_masks(params: BoostParams, n_rows: int, n_cols: int,
                round_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row mask and ascending column indices for one boosting round.

    A pure function of (params.seed, round_index), so training and any replay
    of it draw identical masks.
    """
    rng = np.random.default_rng((params.seed, round_index))
    mask = np.ones(n_rows, dtype=bool)
    if params.subsample < 1.0:
        m = max(1, int(round(params.subsample * n_rows)))
        mask = np.zeros(n_rows, dtype=bool)
        mask[rng.permutation(n_rows)[:m]] = True
    cols = np.arange(n_cols, dtype=np.int64)
    if params.colsample_bytree < 1.0:
        c = max(1, int(round(params.colsample_bytree * n_cols)))
        cols = np.sort(rng.permutation(n_cols)[:c]).astype(np.int64)
    return mask, cols


def fit_boosted_tree(X: np.ndarray, grad: np.ndarray, hess: np.ndarray,
                     params: BoostParams,
                     row_mask: Optional[np.ndarray] = None,
                     col_mask: Optional[np.ndarray] = None) -> Tree:
    """Fit one tree to (grad, hess) by exact greedy search.

    Split gain is 0.5 * [GL^2/(HL+lambda) + GR^2/(HR+lambda)
    - (GL+GR)^2/(HL+HR+lambda)] - gamma over candidate midpoints of
    consecutive distinct sorted values; leaves take the L1-soft-thresholded
    weight -sign(G) * max(|G| - alpha, 0) / (H + lambda).
    """
    X = np.ascontiguousarray(X, dtype=float)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    n, d = X.shape
    if grad.shape != (n,) or hess.shape != (n,):
        raise ValueError("grad and hess must align with the rows of X")
    if (hess < 0).any():
        raise ValueError("hessians must be >= 0")
    if row_mask is None:
        row_mask = np.ones(n, dtype=bool)
    if col_mask is None:
        col_idx = np.arange(d, dtype=np.int64)
    else:
        col_mask = np.asarray(col_mask)
        col_idx = (np.flatnonzero(col_mask).astype(np.int64)
                   if col_mask.dtype == bool else np.sort(col_mask.astype(np.int64)))
    sort_idx_t = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    out = build_boost_tree(X, sort_idx_t, grad, hess,
                           np.ascontiguousarray(row_mask, dtype=np.bool_), col_idx,
                           params.max_depth, params.reg_lambda, params.reg_alpha,
                           params.gamma, params.min_child_weight)
    return Tree(*out)


def _tree_from_kernel(out) -> Tree:
    return Tree(*out)


def fit_booster(X: np.ndarray, y: np.ndarray,
                params: Optional[BoostParams] = None,
                eval_set: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Booster:
    """Train a logistic-loss booster; records per-round curves in history.

    Per round: p = sigmoid(current logit), grad = p - y, hess = p * (1 - p);
    rows are subsampled without replacement and columns per tree from the
    seeded stream; the running logit accumulates learning_rate-scaled tree
    outputs while stored leaf weights stay unscaled.
    """
    params = params if params is not None else BoostParams()
    X, y = _validate_xy(X, y)
    n, d = X.shape

    base_logit = math.log(params.base_score / (1.0 - params.base_score))
    sort_idx_t = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    logits = np.full(n, base_logit)
    history = TrainHistory()

    Xv = yv = None
    val_logits = None
    if eval_set is not None:
        Xv = np.ascontiguousarray(eval_set[0], dtype=float)
        yv = np.asarray(eval_set[1], dtype=np.int64)
        if Xv.ndim != 2 or Xv.shape[1] != d or yv.shape != (Xv.shape[0],):
            raise ValueError("eval_set does not align with the training matrix")
        val_logits = np.full(Xv.shape[0], base_logit)

    trees: List[Tree] = []
    for r in range(params.n_rounds):
        p = sigmoid(logits)
        grad = p - y
        hess = p * (1.0 - p)
        row_mask, col_idx = round_masks(params, n, d, r)
        out = build_boost_tree(X, sort_idx_t, grad, hess, row_mask, col_idx,
                               params.max_depth, params.reg_lambda,
                               params.reg_alpha, params.gamma,
                               params.min_child_weight)
        tree = _tree_from_kernel(out)
        trees.append(tree)
        tree_predict_add(tree.feature, tree.threshold, tree.left, tree.right,
                         tree.value, X, logits, params.learning_rate)
        p_now = sigmoid(logits)
        history.train_logloss.append(log_loss(y, p_now))
        history.train_acc.append(float(np.mean(labels_from_proba(p_now) == y)))
        if val_logits is not None:
            tree_predict_add(tree.feature, tree.threshold, tree.left, tree.right,
                             tree.value, Xv, val_logits, params.learning_rate)
            pv = sigmoid(val_logits)
            history.val_logloss.append(log_loss(yv, pv))
            history.val_acc.append(float(np.mean(labels_from_proba(pv) == yv)))

    return Booster(trees=trees, params=params, feature_count=d,
                   base_logit=base_logit, history=history)


def predict_booster(booster: Booster, X: np.ndarray) -> np.ndarray:
    """Probabilities sigmoid(base logit + lr * sum of tree outputs).

    An empty ensemble predicts sigmoid(base logit), 0.5 at the default
    base score.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != booster.feature_count:
        raise ValueError(f"X must have {booster.feature_count} columns")
    logits = np.full(X.shape[0], booster.base_logit)
    for tree in booster.trees:
        tree_predict_add(tree.feature, tree.threshold, tree.left, tree.right,
                         tree.value, X, logits, booster.params.learning_rate)
    return sigmoid(logits)


def feature_importance(booster: Booster) -> np.ndarray:
    """Total split gain per feature, normalized to sum 1; zeros if no splits."""
    imp = np.zeros(booster.feature_count)
    for tree in booster.trees:
        internal = tree.feature >= 0
        np.add.at(imp, tree.feature[internal], tree.gain[internal])
    total = imp.sum()
    return imp / total if total > 0 else imp


def fit_forest(X: np.ndarray, y: np.ndarray,
               params: Optional[ForestParams] = None) -> Forest:
    """Train a bootstrap forest of Gini CART trees.

    Tree t draws its bootstrap rows and kernel seed from an independent
    stream indexed by t, so results do not depend on training order.
    """
    params = params if params is not None else ForestParams()
    X, y = _validate_xy(X, y)
    n, d = X.shape
    max_features = params.max_features
    if max_features is None:
        max_features = max(1, int(math.isqrt(d)))
    if max_features > d:
        raise ValueError(f"max_features must be <= {d}")

    trees: List[Tree] = []
    boots: List[np.ndarray] = []
    for t in range(params.n_trees):
        rng = np.random.default_rng((params.seed, t))
        if params.bootstrap:
            boot = rng.integers(0, n, size=n).astype(np.int64)
        else:
            boot = np.arange(n, dtype=np.int64)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        out = build_gini_tree(X, y, boot, params.max_depth,
                              params.min_samples_leaf, max_features, tree_seed)
        trees.append(_tree_from_kernel(out))
        boots.append(boot)
    return Forest(trees=trees, params=params, feature_count=d,
                  bootstrap_indices=boots)


def predict_forest(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Probability of class 1: the mean of per-tree leaf class-1 frequencies."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != forest.feature_count:
        raise ValueError(f"X must have {forest.feature_count} columns")
    probs = np.zeros(X.shape[0])
    scale = 1.0 / len(forest.trees)
    for tree in forest.trees:
        tree_predict_add(tree.feature, tree.threshold, tree.left, tree.right,
                         tree.value, X, probs, scale)
    return probs


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _boost_params_dict(p: BoostParams) -> dict:
    return {
        "n_rounds": p.n_rounds, "max_depth": p.max_depth,
        "learning_rate": p.learning_rate, "subsample": p.subsample,
        "colsample_bytree": p.colsample_bytree, "reg_lambda": p.reg_lambda,
        "reg_alpha": p.reg_alpha, "min_child_weight": p.min_child_weight,
        "gamma": p.gamma, "base_score": p.base_score, "seed": p.seed,
    }


def _forest_params_dict(p: ForestParams) -> dict:
    return {
        "n_trees": p.n_trees, "max_depth": p.max_depth,
        "min_samples_leaf": p.min_samples_leaf, "max_features": p.max_features,
        "bootstrap": p.bootstrap, "seed": p.seed,
    }


def booster_to_json(booster: Booster) -> str:
    return json.dumps({
        "kind": "booster",
        "params": _boost_params_dict(booster.params),
        "feature_count": booster.feature_count,
        "base_logit": booster.base_logit,
        "trees": [tree.to_dict() for tree in booster.trees],
    }, indent=2, sort_keys=True)


def booster_from_json(text: str) -> Booster:
    raw = json.loads(text)
    if raw.get("kind") != "booster":
        raise ValueError("not a serialized booster")
    return Booster(
        trees=[Tree.from_dict(t) for t in raw["trees"]],
        params=BoostParams(**raw["params"]),
        feature_count=int(raw["feature_count"]),
        base_logit=float(raw["base_logit"]),
    )


def forest_to_json(forest: Forest) -> str:
    return json.dumps({
        "kind": "forest",
        "params": _forest_params_dict(forest.params),
        "feature_count": forest.feature_count,
        "trees": [tree.to_dict() for tree in forest.trees],
    }, indent=2, sort_keys=True)


def forest_from_json(text: str) -> Forest:
    raw = json.loads(text)
    if raw.get("kind") != "forest":
        raise ValueError("not a serialized forest")
    return Forest(
        trees=[Tree.from_dict(t) for t in raw["trees"]],
        params=ForestParams(**raw["params"]),
        feature_count=int(raw["feature_count"]),
        bootstrap_indices=None,
    )
