from dataclasses import replace

import numpy as np
import pytest

from cdpred import (HIDDEN_DIMS, LAYER_BOOST_DEFAULTS, AdamState, Network,
                    TrainConfig, TrainHistory, adam_step,
                    apply_importance_scaling, backward, boosted_update,
                    cross_entropy, forward, history_csv, init_network,
                    network_from_json, network_loss, network_predict_proba,
                    network_to_json, train_mlp, train_xbnet)
from cdpred.network import _rebase_columns


def blobs(n_per_class, seed=0, spread=1.0, sep=2.0):
    rng = np.random.default_rng(seed)
    X0 = rng.normal(-sep / 2, spread, size=(n_per_class, 2))
    X1 = rng.normal(sep / 2, spread, size=(n_per_class, 2))
    X = np.vstack([X0, X1])
    y = np.repeat([0, 1], n_per_class)
    perm = rng.permutation(2 * n_per_class)
    return X[perm], y[perm]


def test_init_network_shapes_and_he_scale():
    net = init_network(400, seed=1)
    assert [w.shape for w in net.weights] == [(8, 400), (4, 8), (2, 4)]
    assert net.layer_dims == (400,) + HIDDEN_DIMS
    assert all(np.all(s == 1.0) for s in net.importance_scales)
    # He scale: std sqrt(2 / fan_in) on the wide first layer
    assert net.weights[0].std() == pytest.approx(np.sqrt(2.0 / 400), rel=0.1)
    again = init_network(400, seed=1)
    assert all(np.array_equal(a, b)
               for a, b in zip(net.weights, again.weights))
    with pytest.raises(ValueError):
        init_network(0)


def test_forward_shapes_and_probabilities():
    net = init_network(5, seed=2)
    X = np.random.default_rng(3).normal(size=(7, 5))
    probs, caches = forward(net, X)
    assert probs.shape == (7, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert (probs >= 0).all()
    assert [a.shape for a in caches["inputs"]] == [(7, 5), (7, 8), (7, 4)]
    assert [a.shape for a in caches["pre"]] == [(7, 8), (7, 4), (7, 2)]


def test_cross_entropy_matches_manual_and_is_stable():
    logits = np.array([[2.0, 0.5], [-1.0, 1.0]])
    y = np.array([0, 1])
    manual = -np.mean(np.log([
        np.exp(2.0) / (np.exp(2.0) + np.exp(0.5)),
        np.exp(1.0) / (np.exp(-1.0) + np.exp(1.0)),
    ]))
    assert cross_entropy(logits, y) == pytest.approx(manual, abs=1e-12)
    huge = np.array([[1000.0, 0.0]])
    assert cross_entropy(huge, np.array([0])) == pytest.approx(0.0, abs=1e-12)
    assert np.isfinite(cross_entropy(huge, np.array([1])))


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(11)
    net = init_network(5, seed=4)
    X = rng.normal(size=(12, 5))
    y = rng.integers(0, 2, size=12)
    probs, caches = forward(net, X)
    grads = backward(net, caches, probs, y)
    h = 1e-5
    for l, w in enumerate(net.weights):
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                orig = w[i, j]
                w[i, j] = orig + h
                up = network_loss(net, X, y)
                w[i, j] = orig - h
                down = network_loss(net, X, y)
                w[i, j] = orig
                fd = (up - down) / (2 * h)
                an = grads[l][i, j]
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
                assert rel < 1e-4, (l, i, j, fd, an)


def test_adam_single_step_hand_check():
    net = Network(weights=[np.array([[1.0]])],
                  importance_scales=[np.ones(1)])
    state = AdamState(m=[np.zeros((1, 1))], v=[np.zeros((1, 1))])
    cfg = TrainConfig(learning_rate=0.1)
    adam_step(net, [np.array([[0.5]])], state, cfg)
    # bias-corrected first step moves by lr * g / (|g| + eps)
    assert state.t == 1
    assert net.weights[0][0, 0] == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8))
    assert state.m[0][0, 0] == pytest.approx(0.05)
    assert state.v[0][0, 0] == pytest.approx(2.5e-4)
    adam_step(net, [np.array([[0.5]])], state, cfg)
    assert state.t == 2


def test_importance_scaling_identity_and_onehot():
    rng = np.random.default_rng(5)
    W = rng.normal(size=(3, 8))
    uniform = np.full(8, 1.0 / 8.0)
    assert np.array_equal(apply_importance_scaling(W, uniform), W)
    W4 = rng.normal(size=(2, 4))
    onehot = np.array([0.0, 0.0, 1.0, 0.0])
    scaled = apply_importance_scaling(W4, onehot)
    assert np.array_equal(scaled[:, 2], 4.0 * W4[:, 2])
    assert np.all(scaled[:, [0, 1, 3]] == 0.0)
    with pytest.raises(ValueError):
        apply_importance_scaling(W, np.ones(5))
    with pytest.raises(ValueError):
        apply_importance_scaling(W[0], np.ones(8))


def test_rebase_replaces_previous_scaling():
    net = init_network(6, seed=6)
    w0 = net.weights[0].copy()
    imp = np.array([0.4, 0.3, 0.1, 0.1, 0.05, 0.05])
    _rebase_columns(net, 0, imp)
    assert np.array_equal(net.weights[0], apply_importance_scaling(w0, imp))
    before = net.weights[0].copy()
    _rebase_columns(net, 0, imp)
    assert np.array_equal(net.weights[0], before)
    imp2 = np.full(6, 1.0 / 6.0)
    _rebase_columns(net, 0, imp2)
    assert np.allclose(net.weights[0], apply_importance_scaling(w0, imp2))


def test_rebase_keeps_zeroed_columns_dead():
    net = init_network(4, seed=7)
    onehot = np.array([0.0, 1.0, 0.0, 0.0])
    _rebase_columns(net, 0, onehot)
    _rebase_columns(net, 0, np.full(4, 0.25))
    assert np.all(net.weights[0][:, [0, 2, 3]] == 0.0)
    assert np.all(net.weights[0][:, 1] != 0.0)


def test_boosted_update_skips_layer_without_splits():
    net = init_network(3, seed=8)
    rng = np.random.default_rng(9)
    n = 60
    y = np.repeat([0, 1], n // 2)
    x0 = np.where(y[:, None] == 1, 2.0, -2.0) + rng.normal(0, 0.3, size=(n, 3))
    x1 = np.ones((n, 8))                       # constant: no booster splits
    x2 = rng.normal(size=(n, 4))
    x2[:, 0] += 3.0 * y
    w1_before = net.weights[1].copy()
    boosters = boosted_update(net, [x0, x1, x2], y, [LAYER_BOOST_DEFAULTS] * 3)
    assert len(boosters) == 3
    assert np.array_equal(net.weights[1], w1_before)
    assert not np.array_equal(net.weights[0], init_network(3, seed=8).weights[0])
    with pytest.raises(ValueError):
        boosted_update(net, [x0, x1], y, [LAYER_BOOST_DEFAULTS] * 3)


def test_train_histories_and_boosters():
    X, y = blobs(40, seed=10)
    cfg = TrainConfig(epochs=3, batch_size=16, seed=1)
    model = train_xbnet(X[:60], y[:60], X[60:], y[60:], cfg)
    h = model.history
    assert len(h.train_logloss) == 3 and len(h.train_acc) == 3
    assert len(h.val_logloss) == 3 and len(h.val_acc) == 3
    assert model.layer_boosters is not None and len(model.layer_boosters) == 3
    plain = train_mlp(X[:60], y[:60], config=cfg)
    assert plain.layer_boosters is None
    assert plain.config.boosted_updates is False
    assert plain.history.val_logloss == []


def test_mlp_is_xbnet_with_updates_off():
    X, y = blobs(30, seed=12)
    cfg = TrainConfig(epochs=2, batch_size=16, seed=3)
    a = train_mlp(X, y, config=cfg)
    b = train_xbnet(X, y, config=replace(cfg, boosted_updates=False))
    assert all(np.array_equal(wa, wb)
               for wa, wb in zip(a.network.weights, b.network.weights))
    assert a.history.train_logloss == b.history.train_logloss


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_epoch():
    X, y = blobs(20, seed=13)
    cfg = TrainConfig(epochs=1, learning_rate=np.inf)
    with pytest.raises(RuntimeError, match="epoch 0"):
        train_mlp(X, y, config=cfg)


def test_learns_separable_blobs():
    X, y = blobs(100, seed=14)
    cfg = TrainConfig(epochs=40, batch_size=32, learning_rate=3e-3, seed=0)
    model = train_xbnet(X, y, config=cfg)
    p = network_predict_proba(model, X)
    assert np.isfinite(p).all()
    assert np.mean((p > 0.5).astype(int) == y) >= 0.9


def test_standardization_is_stored_on_the_model():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(40, 3))
    X[:, 2] = 7.0
    y = (X[:, 0] > 0).astype(np.int64)
    model = train_mlp(X, y, config=TrainConfig(epochs=1))
    assert np.allclose(model.feature_means, X.mean(axis=0))
    assert model.feature_stds[2] == 1.0
    with pytest.raises(ValueError):
        network_predict_proba(model, np.zeros((2, 4)))


def test_network_json_round_trip():
    X, y = blobs(25, seed=16)
    cfg = TrainConfig(epochs=2, batch_size=16, seed=5)
    model = train_xbnet(X, y, config=cfg)
    back = network_from_json(network_to_json(model))
    fresh = np.random.default_rng(17).normal(size=(9, 2))
    assert np.array_equal(network_predict_proba(model, fresh),
                          network_predict_proba(back, fresh))
    assert back.config == model.config
    assert all(np.array_equal(a, b) for a, b in zip(
        back.network.importance_scales, model.network.importance_scales))
    with pytest.raises(ValueError):
        network_from_json('{"kind": "booster"}')


def test_train_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=0.0),
                dict(beta1=1.0), dict(beta2=-0.1), dict(eps=0.0),
                dict(seed=-1)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_history_csv_format():
    h = TrainHistory(train_logloss=[0.5, 0.25], train_acc=[0.75, 1.0],
                     val_logloss=[0.6, 0.3], val_acc=[0.5, 0.875])
    text = history_csv(h)
    lines = text.splitlines()
    assert lines[0] == "epoch,train_logloss,val_logloss,train_acc,val_acc"
    assert lines[1] == "1,0.5,0.6,0.75,0.5"
    assert lines[2] == "2,0.25,0.3,1.0,0.875"
    assert text.endswith("\n")
    no_val = TrainHistory(train_logloss=[0.5], train_acc=[1.0])
    assert history_csv(no_val).splitlines()[1] == "1,0.5,,1.0,"
