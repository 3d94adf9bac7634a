import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snn_sleep.readout import (ConvergenceWarning, Standardizer, accuracy, aggregate_rates,
                               export_features_csv, fit_readout, mlr_loss_grad, mlr_predict,
                               mlr_train, pca_apply, pca_fit, softmax, standardize_fit_apply)


def jacobi_eigenvalues(A, sweeps=100):
    """Cyclic Jacobi rotations; independent of LAPACK."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off < 1e-14:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta else 1.0
                c = 1 / np.hypot(t, 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))[::-1]


# -- rates and standardization -------------------------------------------------------

def test_rates():
    assert np.all(aggregate_rates(np.zeros((5, 100)), 100.0) == 0)
    assert aggregate_rates(np.ones((1, 100)), 100.0)[0] == 1000.0
    assert aggregate_rates(np.array([10]), 100.0)[0] == 100.0


def test_standardize_examples():
    X = np.array([[0.0, 5.0], [2.0, 5.0]])
    Z, st = standardize_fit_apply(X)
    np.testing.assert_array_equal(Z, [[-1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_array_equal(st.apply(X), Z)
    with pytest.raises(ValueError):
        Standardizer.fit(X[:1])


@given(seed=st.integers(0, 10_000), n=st.integers(2, 40), d=st.integers(1, 8))
def test_standardize_moments(seed, n, d):
    X = np.random.default_rng(seed).normal(3, 2, (n, d))
    Z, _ = standardize_fit_apply(X)
    np.testing.assert_allclose(Z.mean(0), 0, atol=1e-10)
    np.testing.assert_allclose(Z.std(0), 1, rtol=1e-9)


# -- PCA --------------------------------------------------------------------------------

@settings(max_examples=25)
@given(seed=st.integers(0, 10_000), n=st.integers(5, 60), d=st.integers(2, 9),
       retain=st.floats(0.5, 0.99))
def test_pca_invariants(seed, n, d, retain):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, d)) @ r.normal(size=(d, d)) * r.random(d)
    s = pca_fit(X, retain)
    V = s.basis
    np.testing.assert_allclose(V.T @ V, np.eye(s.k), atol=1e-8)
    cum = np.cumsum(s.explained_ratio)
    assert cum[s.k - 1] >= retain - 1e-12
    if s.k > 1:
        assert cum[s.k - 2] < retain
    # reconstruction error = sum of discarded eigenvalues (ddof = 1)
    Xc = X - s.mean
    resid = Xc - (Xc @ V) @ V.T
    assert np.sum(resid ** 2) / (n - 1) == pytest.approx(s.eigenvalues[s.k:].sum(), abs=1e-6)
    # eigenvalues agree with an independent Jacobi decomposition
    C = Xc.T @ Xc / (n - 1)
    np.testing.assert_allclose(s.eigenvalues, np.clip(jacobi_eigenvalues(C), 0, None), atol=1e-6)


def test_pca_rank_one_recovers_axis(rng):
    t = rng.normal(size=50)
    X = np.zeros((50, 4))
    X[:, 2] = t
    s = pca_fit(X)
    assert s.k == 1
    proj = pca_apply(s, X)[:, 0]
    np.testing.assert_allclose(np.abs(proj), np.abs(t - t.mean()), atol=1e-10)


def test_pca_isotropic_needs_all_components():
    X = np.random.default_rng(0).normal(size=(20_000, 3))
    s = pca_fit(X, 0.95)
    assert s.k == 3
    np.testing.assert_allclose(s.explained_ratio, 1 / 3, atol=0.01)


def test_pca_errors():
    with pytest.raises(FloatingPointError):
        pca_fit(np.array([[0.0, np.inf], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        pca_fit(np.ones((1, 3)))


# -- MLR ------------------------------------------------------------------------------------

def test_gradient_matches_finite_differences(rng):
    X = rng.normal(size=(5, 3))
    Y = np.eye(3)[[0, 1, 2, 1, 0]]
    W, b = rng.normal(size=(3, 3)), rng.normal(size=3)
    _, gW, gb = mlr_loss_grad(W, b, X, Y, 0.1)
    h = 1e-6
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        fd = (mlr_loss_grad(Wp, b, X, Y, 0.1)[0] - mlr_loss_grad(Wm, b, X, Y, 0.1)[0]) / (2 * h)
        assert gW[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)
    for c in range(3):
        bp, bm = b.copy(), b.copy()
        bp[c] += h
        bm[c] -= h
        fd = (mlr_loss_grad(W, bp, X, Y, 0.1)[0] - mlr_loss_grad(W, bm, X, Y, 0.1)[0]) / (2 * h)
        assert gb[c] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_optimum_gradient_small(rng):
    X = rng.normal(size=(5, 2))
    y = np.array([0, 1, 0, 1, 1])
    m = mlr_train(X, y, reg_strength=0.1, max_iters=20_000, tol=1e-7, record_losses=True)
    _, gW, gb = mlr_loss_grad(m.W, m.b, X, np.eye(2)[y], 0.1)
    assert m.converged
    assert np.sqrt(np.sum(gW ** 2) + np.sum(gb ** 2)) <= 1e-5 * (1 + np.linalg.norm(m.W))
    assert all(b <= a for a, b in zip(m.losses, m.losses[1:]))


def test_separable_clusters(rng):
    X = np.vstack([rng.normal(-3, 0.5, (30, 2)), rng.normal(3, 0.5, (30, 2))])
    y = np.repeat([0, 1], 30)
    m = mlr_train(X, y)
    assert accuracy(mlr_predict(m, X), y) == 1.0
    np.testing.assert_allclose(m.proba(X).sum(1), 1.0, atol=1e-9)


def test_single_class(rng):
    X = rng.normal(size=(10, 3))
    m = mlr_train(X, np.zeros(10, int), n_classes=3)
    assert np.all(mlr_predict(m, rng.normal(size=(20, 3))) == 0)


def test_ties_pick_lowest_index():
    m = mlr_train(np.zeros((4, 2)), np.array([0, 1, 0, 1]))
    assert np.all(mlr_predict(m, np.zeros((3, 2))) == 0)


def test_convergence_warning(rng):
    X = rng.normal(size=(30, 3))
    with pytest.warns(ConvergenceWarning):
        m = mlr_train(X, rng.integers(0, 3, 30), max_iters=2, tol=1e-12)
    assert not m.converged


def test_softmax_stable():
    p = softmax(np.array([[1000.0, 1000.0], [-1000.0, 0.0]]))
    np.testing.assert_allclose(p, [[0.5, 0.5], [0.0, 1.0]], atol=1e-12)


def test_accuracy():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([1, 2], [2, 1]) == 0.0
    assert accuracy([1, 2], [1, 1]) == 0.5
    with pytest.raises(ValueError):
        accuracy([1], [1, 2])


# -- pipeline ------------------------------------------------------------------------------

def test_pipeline_uses_training_statistics_only(rng):
    centers = rng.normal(0, 20, (3, 12))
    y = rng.integers(0, 3, 150)
    F = np.abs(centers[y] + rng.normal(0, 2, (150, 12)))
    ro = fit_readout(F[:100], y[:100], 3)
    assert ro.score(F[100:], y[100:]) > 0.9
    # shifting the evaluation set must not change the fitted transforms
    before = ro.transform(F[:5]).copy()
    ro.score(F[100:] + 50, y[100:])
    np.testing.assert_array_equal(ro.transform(F[:5]), before)


def test_feature_export(tmp_path):
    export_features_csv(tmp_path / "f.csv", np.array([[1.5, 0.0]]), [3])
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines == ["sample_id,label,rate_1,rate_2", "0,3,1.5,0.0"]
