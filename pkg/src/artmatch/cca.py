"""Canonical correlation analysis over paired visual/textual encodings.

Directions are found by SVD of the whitened cross-covariance; a ridge
term keeps the per-view covariances invertible for rank-deficient
tf-idf data.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .validation import check_matrix, check_paired


def _inv_sqrt_psd(S: np.ndarray) -> np.ndarray:
    """Inverse matrix square root of a symmetric PSD matrix."""
    eigvals, eigvecs = np.linalg.eigh(S)
    if np.any(eigvals <= 1e-14) or not np.all(np.isfinite(eigvals)):
        raise np.linalg.LinAlgError(
            "covariance is numerically singular; increase the ridge term"
        )
    return (eigvecs / np.sqrt(eigvals)) @ eigvecs.T


def normalize_rows_keep_zero(P: np.ndarray) -> np.ndarray:
    """Row-wise l2 normalization; exactly-zero rows stay zero (degenerate)."""
    norms = np.linalg.norm(P, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return P / safe


class CcaModel(BaseEstimator):
    """Linear projections of two views maximizing normalized correlation.

    Parameters
    ----------
    n_components : dimension of the shared space (128 by default).
    ridge : added to both view covariances before whitening.
    """

    def __init__(self, n_components: int = 128, ridge: float = 1e-4):
        self.n_components = n_components
        self.ridge = ridge

    def fit(self, X, Y):
        """Learn projection matrices from paired rows (X = visual view,
        Y = textual view)."""
        X = check_matrix(X, "X")
        Y = check_matrix(Y, "Y")
        check_paired(X, Y)
        n, dx = X.shape
        dy = Y.shape[1]
        d = self.n_components
        if n < 2:
            raise ValueError("CCA needs at least 2 paired samples")
        if d > min(dx, dy, n - 1):
            raise ValueError(
                f"n_components={d} exceeds min(dx={dx}, dy={dy}, n-1={n-1})"
            )
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")

        self.mean_x_ = X.mean(axis=0)
        self.mean_y_ = Y.mean(axis=0)
        Xc = X - self.mean_x_
        Yc = Y - self.mean_y_

        Sxx = Xc.T @ Xc / (n - 1) + self.ridge * np.eye(dx)
        Syy = Yc.T @ Yc / (n - 1) + self.ridge * np.eye(dy)
        Sxy = Xc.T @ Yc / (n - 1)

        Kx = _inv_sqrt_psd(Sxx)
        Ky = _inv_sqrt_psd(Syy)
        U, sigma, Vt = np.linalg.svd(Kx @ Sxy @ Ky)

        self.Wx_ = Kx @ U[:, :d]
        self.Wy_ = Ky @ Vt.T[:, :d]
        self.correlations_ = np.clip(sigma[:d], 0.0, 1.0 + 1e-6)
        return self

    def transform(self, X=None, Y=None, normalize: bool = True):
        """Project one or both views; rows projecting to exactly zero
        (inputs equal to the training mean) are left as zero rows."""
        self._check_fitted()
        out = []
        if X is not None:
            out.append(self._project(check_matrix(X, "X"), "vis", normalize))
        if Y is not None:
            out.append(self._project(check_matrix(Y, "Y"), "text", normalize))
        if not out:
            raise ValueError("transform needs X, Y, or both")
        return out[0] if len(out) == 1 else tuple(out)

    def _project(self, M: np.ndarray, side: str, normalize: bool) -> np.ndarray:
        mean, W = (
            (self.mean_x_, self.Wx_) if side == "vis" else (self.mean_y_, self.Wy_)
        )
        if M.shape[1] != mean.shape[0]:
            raise ValueError(
                f"{side} input has dim {M.shape[1]}, model expects {mean.shape[0]}"
            )
        P = (M - mean) @ W
        return normalize_rows_keep_zero(P) if normalize else P

    def _check_fitted(self):
        if not hasattr(self, "Wx_"):
            raise NotFittedError("CcaModel must be fitted before transform")


def fit_cca(X, Y, d: int, ridge: float = 1e-4) -> CcaModel:
    """Functional wrapper around CcaModel.fit."""
    return CcaModel(n_components=d, ridge=ridge).fit(X, Y)


def cca_project(model: CcaModel, x: np.ndarray, side: str) -> np.ndarray:
    """Project one vector from the named side ("vis" or "text") into the
    shared space, l2-normalized (zero stays zero)."""
    if side not in ("vis", "text"):
        raise ValueError(f"side must be 'vis' or 'text', got {side!r}")
    x = np.asarray(x, dtype=np.float64)
    return model._project(x.reshape(1, -1), side, normalize=True)[0]
