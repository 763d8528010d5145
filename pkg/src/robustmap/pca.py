"""PCA projection used to initialize the 2D embeddings."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ConfigurationError


def pca_initialize(X: np.ndarray, out_dims: int = 2) -> np.ndarray:
    """Project mean-centered rows onto the top principal components.

    Components come out in descending eigenvalue order with a fixed sign
    convention (the largest-magnitude loading is positive), so the result
    is deterministic. If the data has rank below out_dims the missing
    columns are zero-padded with a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigurationError(f"expected a 2D matrix, got shape {X.shape}")
    n, d = X.shape
    if n < out_dims or d < out_dims:
        raise ConfigurationError(
            f"need at least {out_dims} rows and columns, got {X.shape}"
        )
    centered = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s[0] * max(n, d) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    components = vt[:out_dims].copy()
    if rank < out_dims:
        warnings.warn(
            f"data rank {rank} < {out_dims}; padding missing components with zeros",
            stacklevel=2,
        )
        components[rank:] = 0.0
    for row in components:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return centered @ components.T
