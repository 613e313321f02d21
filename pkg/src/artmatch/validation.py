"""Input validation helpers used by the estimators and numeric kernels."""

from __future__ import annotations

import numpy as np

UNIT_NORM_TOL = 1e-6


def check_matrix(X, name: str = "X", dtype=np.float64) -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    X = np.asarray(X, dtype=dtype)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_vector(x, name: str = "x", dtype=np.float64) -> np.ndarray:
    """Coerce to a finite 1-D float array."""
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_paired(X: np.ndarray, Y: np.ndarray, x_name: str = "X", y_name: str = "Y") -> None:
    """Paired-sample matrices must have one row per shared sample."""
    if X.shape[0] != Y.shape[0]:
        raise ValueError(
            f"{x_name} and {y_name} must pair row-for-row: "
            f"{X.shape[0]} vs {Y.shape[0]} rows"
        )


def check_unit_rows(X: np.ndarray, name: str = "X", tol: float = UNIT_NORM_TOL) -> None:
    """Every row must already be unit-norm; callers rely on cosine = dot."""
    norms = np.linalg.norm(X, axis=-1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(
            f"{name} must have unit-norm rows (worst deviation {worst:.3g} > {tol:g})"
        )
