"""Spike-rate readout: standardize -> PCA (95% variance) -> multinomial logistic regression.

Everything is fitted on training features only; a :class:`FittedReadout`
carries the frozen transforms and can only be applied, never refitted.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np


class ConvergenceWarning(UserWarning):
    pass


def aggregate_rates(counts, T_image_ms: float) -> np.ndarray:
    """Spike counts over one presentation -> mean rates in Hz.

    ``counts`` may be a raster (neurons x steps) or a vector of counts.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 2:
        counts = counts.sum(axis=1)
    return counts / (T_image_ms / 1000.0)


# -- standardization ---------------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    varying: np.ndarray  # False for columns constant on the training set

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        if X.shape[0] < 2:
            raise ValueError("need at least two samples to standardize")
        mean = X.mean(axis=0)
        std = X.std(axis=0)  # population std
        varying = std > 0
        return cls(mean, np.where(varying, std, 1.0), varying)

    def apply(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        Z[:, ~self.varying] = 0.0
        return Z


def standardize_fit_apply(X):
    st = Standardizer.fit(X)
    return st.apply(X), st


# -- PCA ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PCAState:
    mean: np.ndarray
    components: np.ndarray  # (n_features, n_features), columns sorted by variance
    eigenvalues: np.ndarray
    explained_ratio: np.ndarray
    k: int

    @property
    def basis(self) -> np.ndarray:
        return self.components[:, : self.k]


def pca_fit(X, retain: float = 0.95) -> PCAState:
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least two rows for PCA")
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite values in PCA input")
    mean = X.mean(axis=0)
    C = np.cov(X - mean, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    vals, vecs = np.linalg.eigh(C)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    total = vals.sum()
    if total <= 0:
        return PCAState(mean, vecs, vals, np.zeros_like(vals), 1)
    ratio = vals / total
    cum = np.cumsum(ratio)
    k = int(np.searchsorted(cum, retain - 1e-12) + 1)
    return PCAState(mean, vecs, vals, ratio, min(k, vals.size))


def pca_apply(state: PCAState, X) -> np.ndarray:
    return (np.asarray(X, dtype=float) - state.mean) @ state.basis


# -- multinomial logistic regression ---------------------------------------------------

@dataclass(frozen=True)
class MLRModel:
    W: np.ndarray  # (n_features, n_classes)
    b: np.ndarray
    converged: bool = True
    iterations: int = 0
    losses: tuple = ()

    def scores(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.W + self.b

    def proba(self, X) -> np.ndarray:
        return softmax(self.scores(X))


def softmax(Z) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def mlr_loss_grad(W, b, X, Y, reg):
    """Mean softmax cross-entropy + reg/2 * ||W||^2 and its gradients.

    ``Y`` is one-hot (n, C).
    """
    n = X.shape[0]
    Z = X @ W + b
    Z = Z - Z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(Z).sum(axis=1))
    loss = float((logsum - (Z * Y).sum(axis=1)).mean() + 0.5 * reg * np.sum(W * W))
    P = np.exp(Z - logsum[:, None])
    G = (P - Y) / n
    return loss, X.T @ G + reg * W, G.sum(axis=0)


def mlr_train(X, labels, reg_strength: float = 1e-4, max_iters: int = 2000,
              tol: float = 1e-5, n_classes: int | None = None,
              record_losses: bool = False) -> MLRModel:
    """Full-batch gradient descent with Armijo backtracking."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    C = int(n_classes if n_classes is not None else labels.max() + 1)
    Y = np.eye(C)[labels]
    W = np.zeros((X.shape[1], C))
    b = np.zeros(C)
    loss, gW, gb = mlr_loss_grad(W, b, X, Y, reg_strength)
    step = 1.0
    losses = [loss]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        gnorm2 = float(np.sum(gW * gW) + np.sum(gb * gb))
        if np.sqrt(gnorm2) <= tol * (1.0 + np.linalg.norm(W)):
            converged = True
            it -= 1
            break
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, nW, nb = mlr_loss_grad(W_new, b_new, X, Y, reg_strength)
            if new_loss <= loss - 0.5 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        if new_loss > loss:  # step underflow; stay put
            break
        W, b, loss, gW, gb = W_new, b_new, new_loss, nW, nb
        if record_losses:
            losses.append(loss)
        step *= 2.0
    if not converged:
        warnings.warn(f"MLR did not reach gradient tolerance in {max_iters} iterations",
                      ConvergenceWarning, stacklevel=2)
    return MLRModel(W, b, converged, it, tuple(losses))


def mlr_predict(model: MLRModel, X) -> np.ndarray:
    # argmax returns the lowest index on ties
    return np.argmax(model.scores(X), axis=1)


def accuracy(predicted, actual) -> float:
    predicted, actual = np.asarray(predicted), np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ValueError("predicted and actual differ in length")
    if predicted.size == 0:
        return 0.0
    return float(np.mean(predicted == actual))


# -- pipeline -----------------------------------------------------------------------------

@dataclass(frozen=True)
class FittedReadout:
    standardizer: Standardizer
    pca: PCAState
    mlr: MLRModel

    def transform(self, features) -> np.ndarray:
        return pca_apply(self.pca, self.standardizer.apply(features))

    def predict(self, features) -> np.ndarray:
        return mlr_predict(self.mlr, self.transform(features))

    def score(self, features, labels) -> float:
        return accuracy(self.predict(features), labels)


def fit_readout(features, labels, n_classes: int, retain: float = 0.95,
                reg_strength: float = 1e-4, max_iters: int = 2000,
                tol: float = 1e-5) -> FittedReadout:
    Z, st = standardize_fit_apply(features)
    pca = pca_fit(Z, retain)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        mlr = mlr_train(pca_apply(pca, Z), labels, reg_strength, max_iters, tol, n_classes)
    return FittedReadout(st, pca, mlr)


def export_features_csv(path, features, labels, sample_ids=None):
    features = np.asarray(features, dtype=float)
    ids = np.arange(len(features)) if sample_ids is None else sample_ids
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sample_id", "label"] + [f"rate_{i + 1}" for i in range(features.shape[1])])
        for sid, lab, row in zip(ids, labels, features):
            w.writerow([int(sid), int(lab)] + [repr(float(x)) for x in row])
