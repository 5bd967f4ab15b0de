"""Small feed-forward classifier whose layer weights are rescaled each epoch
by tree-ensemble feature importances computed on that layer's inputs.

Architecture is fixed: bias-free d_in -> 8 -> 4 -> 2 with ReLU on the two
hidden layers and a softmax head, trained with Adam on cross-entropy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .trees import (BoostParams, Booster, TrainHistory, _validate_xy,
                    feature_importance, fit_booster, labels_from_proba)

HIDDEN_DIMS = (8, 4, 2)
N_LAYERS = len(HIDDEN_DIMS)

LAYER_BOOST_DEFAULTS = BoostParams(
    n_rounds=6, max_depth=2, learning_rate=0.3, subsample=0.8,
    colsample_bytree=0.8, reg_lambda=1.0, reg_alpha=0.0,
    min_child_weight=1.0, gamma=0.0, base_score=0.5, seed=0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    layer_boost: BoostParams = LAYER_BOOST_DEFAULTS
    importance_init: bool = False
    boosted_updates: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must be in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass
class Network:
    """Per-layer weight matrices (out x in) plus the current column scales.

    importance_scales[l] tracks the cumulative importance factor applied to
    each input column of layer l, so a fresh importance vector can replace
    the previous scaling instead of compounding on top of it.
    """

    weights: List[np.ndarray]
    importance_scales: List[np.ndarray]

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)


def init_network(d_in: int, seed: int = 0) -> Network:
    """He-initialized bias-free network, N(0, sqrt(2 / fan_in)) per layer."""
    if d_in < 1:
        raise ValueError("d_in must be >= 1")
    rng = np.random.default_rng(seed)
    dims = (d_in,) + HIDDEN_DIMS
    weights = []
    for l in range(N_LAYERS):
        fan_in = dims[l]
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                  size=(dims[l + 1], fan_in)))
    scales = [np.ones(dims[l]) for l in range(N_LAYERS)]
    return Network(weights=weights, importance_scales=scales)


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def forward(net: Network, X: np.ndarray) -> Tuple[np.ndarray, Dict[str, List[np.ndarray]]]:
    """Class probabilities plus caches of each layer's input and pre-activation."""
    X = np.asarray(X, dtype=float)
    z0 = X @ net.weights[0].T
    h0 = _relu(z0)
    z1 = h0 @ net.weights[1].T
    h1 = _relu(z1)
    z2 = h1 @ net.weights[2].T
    probs = softmax(z2)
    caches = {"inputs": [X, h0, h1], "pre": [z0, z1, z2]}
    return probs, caches


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood from raw logits, computed stably."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(y.shape[0]), y]
    return float(np.mean(lse - picked))


def network_loss(net: Network, X: np.ndarray, y: np.ndarray) -> float:
    _, caches = forward(net, X)
    return cross_entropy(caches["pre"][2], np.asarray(y, dtype=np.int64))


def backward(net: Network, caches: Dict[str, List[np.ndarray]],
             probs: np.ndarray, y: np.ndarray) -> List[np.ndarray]:
    """Gradients of the mean cross-entropy with respect to each weight matrix."""
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    X, h0, h1 = caches["inputs"]
    z0, z1, _ = caches["pre"]
    dz2 = probs.copy()
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    g2 = dz2.T @ h1
    dh1 = dz2 @ net.weights[2]
    dz1 = dh1 * (z1 > 0)
    g1 = dz1.T @ h0
    dh0 = dz1 @ net.weights[1]
    dz0 = dh0 * (z0 > 0)
    g0 = dz0.T @ X
    return [g0, g1, g2]


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def for_network(cls, net: Network) -> "AdamState":
        return cls(m=[np.zeros_like(w) for w in net.weights],
                   v=[np.zeros_like(w) for w in net.weights])


def adam_step(net: Network, grads: List[np.ndarray], state: AdamState,
              config: TrainConfig) -> None:
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    for w, g, m, v in zip(net.weights, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        w -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


def apply_importance_scaling(weights: np.ndarray,
                             importance: np.ndarray) -> np.ndarray:
    """Scale column j of a weight matrix by in_dim * importance[j].

    A uniform importance vector (1 / in_dim everywhere) leaves the matrix
    unchanged; a one-hot vector keeps a single column, amplified by in_dim,
    and zeroes the rest.
    """
    imp = np.asarray(importance, dtype=float)
    if weights.ndim != 2 or imp.shape != (weights.shape[1],):
        raise ValueError("importance must align with the weight columns")
    return weights * (imp.size * imp)[np.newaxis, :]


def _rebase_columns(net: Network, layer: int, importance: np.ndarray) -> None:
    # Replace the previous importance scaling rather than stacking a new
    # multiply on top of it; repeating the same importance is then a no-op.
    s_new = importance.size * importance
    s_prev = net.importance_scales[layer]
    safe_prev = np.where(s_prev > 0, s_prev, 1.0)
    factor = np.where(s_prev > 0, s_new / safe_prev, 0.0)
    net.weights[layer] *= factor[np.newaxis, :]
    net.importance_scales[layer] = s_new


def boosted_update(net: Network, layer_inputs: Sequence[np.ndarray],
                   y: np.ndarray,
                   params_per_layer: Sequence[BoostParams]) -> List[Booster]:
    """Fit one booster per layer on that layer's inputs and rescale columns.

    A layer whose booster finds no splits (all-zero importance) is left
    untouched.
    """
    if len(layer_inputs) != N_LAYERS or len(params_per_layer) != N_LAYERS:
        raise ValueError(f"expected {N_LAYERS} layer inputs and parameter sets")
    boosters = []
    for l in range(N_LAYERS):
        booster = fit_booster(layer_inputs[l], y, params_per_layer[l])
        boosters.append(booster)
        imp = feature_importance(booster)
        if imp.sum() > 0:
            _rebase_columns(net, l, imp)
    return boosters


@dataclass
class TrainedNetwork:
    network: Network
    feature_means: np.ndarray
    feature_stds: np.ndarray
    config: TrainConfig
    history: Optional[TrainHistory] = None
    layer_boosters: Optional[List[Booster]] = None


def _standardize_fit(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds == 0, 1.0, stds)
    return means, stds


def _train(X: np.ndarray, y: np.ndarray, X_val, y_val,
           config: TrainConfig) -> TrainedNetwork:
    X, y = _validate_xy(X, y)
    n, d = X.shape
    means, stds = _standardize_fit(X)
    Xs = (X - means) / stds
    Xvs = yv = None
    if X_val is not None:
        Xv = np.asarray(X_val, dtype=float)
        yv = np.asarray(y_val, dtype=np.int64)
        if Xv.ndim != 2 or Xv.shape[1] != d or yv.shape != (Xv.shape[0],):
            raise ValueError("validation set does not align with training data")
        Xvs = (Xv - means) / stds

    net = init_network(d, seed=config.seed)
    booster_seeds = np.random.default_rng((config.seed, 1)).integers(
        0, 2**31 - 1, size=(config.epochs, N_LAYERS))
    if config.importance_init:
        init_seed = int(np.random.default_rng((config.seed, 2)).integers(0, 2**31 - 1))
        init_booster = fit_booster(Xs, y, replace(config.layer_boost, seed=init_seed))
        imp = feature_importance(init_booster)
        if imp.sum() > 0:
            _rebase_columns(net, 0, imp)

    state = AdamState.for_network(net)
    shuffle_rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    boosters: Optional[List[Booster]] = None

    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        cached: List[List[np.ndarray]] = [[], [], []]
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            probs, caches = forward(net, Xs[idx])
            grads = backward(net, caches, probs, y[idx])
            adam_step(net, grads, state, config)
            if config.boosted_updates:
                for l in range(N_LAYERS):
                    cached[l].append(caches["inputs"][l])

        if config.boosted_updates:
            layer_inputs = [np.concatenate(parts, axis=0) for parts in cached]
            params = [replace(config.layer_boost, seed=int(booster_seeds[epoch, l]))
                      for l in range(N_LAYERS)]
            boosters = boosted_update(net, layer_inputs, y[perm], params)

        probs_train, _ = forward(net, Xs)
        train_ll = cross_entropy_probs(probs_train, y)
        history.train_logloss.append(train_ll)
        history.train_acc.append(
            float(np.mean(labels_from_proba(probs_train[:, 1]) == y)))
        if Xvs is not None:
            probs_val, _ = forward(net, Xvs)
            history.val_logloss.append(cross_entropy_probs(probs_val, yv))
            history.val_acc.append(
                float(np.mean(labels_from_proba(probs_val[:, 1]) == yv)))

        if not all(np.isfinite(w).all() for w in net.weights) \
                or not np.isfinite(train_ll):
            raise RuntimeError(
                f"training produced non-finite values at epoch {epoch}")

    return TrainedNetwork(network=net, feature_means=means, feature_stds=stds,
                          config=config, history=history,
                          layer_boosters=boosters)


def cross_entropy_probs(probs: np.ndarray, y: np.ndarray) -> float:
    picked = np.clip(probs[np.arange(y.shape[0]), y], 1e-15, None)
    return float(-np.mean(np.log(picked)))


def train_xbnet(X: np.ndarray, y: np.ndarray, X_val=None, y_val=None,
                config: Optional[TrainConfig] = None) -> TrainedNetwork:
    """Train with per-epoch boosted column rescaling (unless disabled)."""
    config = config if config is not None else TrainConfig()
    return _train(X, y, X_val, y_val, config)


def train_mlp(X: np.ndarray, y: np.ndarray, X_val=None, y_val=None,
              config: Optional[TrainConfig] = None) -> TrainedNetwork:
    """Plain Adam baseline: the same engine with boosted updates off."""
    config = config if config is not None else TrainConfig()
    return _train(X, y, X_val, y_val, replace(config, boosted_updates=False))


def predict_proba(model: TrainedNetwork, X: np.ndarray) -> np.ndarray:
    """Probability of class 1 for each row."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.feature_means.shape[0]:
        raise ValueError(f"X must have {model.feature_means.shape[0]} columns")
    Xs = (X - model.feature_means) / model.feature_stds
    probs, _ = forward(model.network, Xs)
    return probs[:, 1]


def _config_dict(config: TrainConfig) -> dict:
    return {
        "epochs": config.epochs, "batch_size": config.batch_size,
        "learning_rate": config.learning_rate, "beta1": config.beta1,
        "beta2": config.beta2, "eps": config.eps, "seed": config.seed,
        "importance_init": config.importance_init,
        "boosted_updates": config.boosted_updates,
        "layer_boost": {
            "n_rounds": config.layer_boost.n_rounds,
            "max_depth": config.layer_boost.max_depth,
            "learning_rate": config.layer_boost.learning_rate,
            "subsample": config.layer_boost.subsample,
            "colsample_bytree": config.layer_boost.colsample_bytree,
            "reg_lambda": config.layer_boost.reg_lambda,
            "reg_alpha": config.layer_boost.reg_alpha,
            "min_child_weight": config.layer_boost.min_child_weight,
            "gamma": config.layer_boost.gamma,
            "base_score": config.layer_boost.base_score,
            "seed": config.layer_boost.seed,
        },
    }


def network_to_json(model: TrainedNetwork) -> str:
    net = model.network
    return json.dumps({
        "kind": "network",
        "layer_dims": list(net.layer_dims),
        "weights": [w.tolist() for w in net.weights],
        "importance_scales": [s.tolist() for s in net.importance_scales],
        "feature_means": model.feature_means.tolist(),
        "feature_stds": model.feature_stds.tolist(),
        "config": _config_dict(model.config),
    }, indent=2, sort_keys=True)


def network_from_json(text: str) -> TrainedNetwork:
    raw = json.loads(text)
    if raw.get("kind") != "network":
        raise ValueError("not a serialized network")
    cfg_raw = dict(raw["config"])
    cfg_raw["layer_boost"] = BoostParams(**cfg_raw["layer_boost"])
    config = TrainConfig(**cfg_raw)
    net = Network(
        weights=[np.asarray(w, dtype=float) for w in raw["weights"]],
        importance_scales=[np.asarray(s, dtype=float)
                           for s in raw["importance_scales"]],
    )
    expected = (net.weights[0].shape[1],) + HIDDEN_DIMS
    if tuple(raw["layer_dims"]) != expected:
        raise ValueError("layer_dims do not match the stored weights")
    return TrainedNetwork(
        network=net,
        feature_means=np.asarray(raw["feature_means"], dtype=float),
        feature_stds=np.asarray(raw["feature_stds"], dtype=float),
        config=config,
    )


def history_csv(history: TrainHistory) -> str:
    """CSV with one row per epoch; validation columns are blank when absent."""
    lines = ["epoch,train_logloss,val_logloss,train_acc,val_acc"]
    has_val = bool(history.val_logloss)
    for i in range(len(history.train_logloss)):
        vll = repr(history.val_logloss[i]) if has_val else ""
        vacc = repr(history.val_acc[i]) if has_val else ""
        lines.append(f"{i + 1},{repr(history.train_logloss[i])},{vll},"
                     f"{repr(history.train_acc[i])},{vacc}")
    return "\n".join(lines) + "\n"
