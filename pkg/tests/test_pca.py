import numpy as np
import pytest

from cdpred import (PcaModel, components_for_variance, fit_pca,
                    inverse_transform, transform)

from oracles import symmetric3_eigenvalues


def test_perfectly_correlated_pair():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    model = fit_pca(X)
    assert model.eigenvalues == pytest.approx([2.0, 0.0], abs=1e-12)
    assert model.components[0] == pytest.approx([np.sqrt(0.5), np.sqrt(0.5)])
    assert model.explained_variance_ratio == pytest.approx([1.0, 0.0], abs=1e-12)
    assert components_for_variance(model, 0.95) == 1
    assert components_for_variance(model, 1.0) == 1


def test_eigenvalues_match_closed_form_3x3():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(40, 3)) @ np.array([[1.0, 0.4, 0.0],
                                             [0.0, 1.0, 0.3],
                                             [0.2, 0.0, 1.0]])
    model = fit_pca(X)
    Z = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
    cov = Z.T @ Z / (X.shape[0] - 1)
    expected = symmetric3_eigenvalues(cov)
    assert model.eigenvalues == pytest.approx(expected, abs=1e-9)


def test_components_orthonormal():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 6))
    model = fit_pca(X)
    gram = model.components @ model.components.T
    assert np.abs(gram - np.eye(6)).max() < 1e-9


def test_full_rank_reconstruction():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(25, 5)) * np.array([1.0, 3.0, 0.5, 2.0, 1.5]) + 7.0
    model = fit_pca(X)
    T = transform(model, X, 5)
    back = inverse_transform(model, T)
    assert np.abs(back - X).max() < 1e-8


def test_descending_order_and_ratio_sums_to_one():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 8))
    model = fit_pca(X)
    assert (np.diff(model.eigenvalues) <= 1e-12).all()
    assert model.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-12)
    assert (model.eigenvalues >= 0.0).all()


def test_constant_column_contributes_no_variance():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(40, 4))
    X[:, 2] = 3.25
    model = fit_pca(X)
    # divisor n - 1 on standardized columns puts each varying column's
    # variance at exactly 1, so the total is the number of varying columns
    assert model.eigenvalues.sum() == pytest.approx(3.0, abs=1e-9)
    assert model.stds[2] == 1.0


def test_sign_convention_largest_entry_positive():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(30, 5))
    model = fit_pca(X)
    for row in model.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_pca(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        fit_pca(np.array([[np.nan, 1.0], [2.0, 3.0]]))
    with pytest.raises(ValueError):
        fit_pca(np.ones((5, 3)))
    with pytest.raises(ValueError):
        fit_pca(np.zeros(4))


def test_components_for_variance_validation_and_fallback():
    X = np.random.default_rng(9).normal(size=(20, 4))
    model = fit_pca(X)
    with pytest.raises(ValueError):
        components_for_variance(model, 0.0)
    with pytest.raises(ValueError):
        components_for_variance(model, 1.0001)
    assert components_for_variance(model, 1.0) == 4
    assert 1 <= components_for_variance(model, 0.5) <= 4


def test_transform_validation():
    X = np.random.default_rng(10).normal(size=(20, 4))
    model = fit_pca(X)
    with pytest.raises(ValueError):
        transform(model, X, 0)
    with pytest.raises(ValueError):
        transform(model, X, 5)
    with pytest.raises(ValueError):
        transform(model, X[:, :3], 2)
    T = transform(model, X, 2)
    assert T.shape == (20, 2)


def test_json_round_trip_is_exact():
    X = np.random.default_rng(11).normal(size=(30, 6))
    model = fit_pca(X)
    restored = PcaModel.from_json(model.to_json())
    assert np.array_equal(
        transform(model, X, 4), transform(restored, X, 4))
    assert np.array_equal(restored.eigenvalues, model.eigenvalues)
