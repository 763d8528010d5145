"""Perplexity-calibrated input affinities for the embedding step.

Each row's Gaussian bandwidth is found by bisection on the precision so
that the conditional distribution's Shannon-entropy perplexity hits the
target. The joint matrix is the symmetrized average, which sums to one.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import BandwidthSearchError, ConfigurationError

PERPLEXITY_TOL = 1e-7  # realized-vs-target gap; contract allows 1e-5
MAX_BISECTIONS = 200
_JITTER_SCALE = 1e-12


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _jitter_duplicates(X: np.ndarray, d2: np.ndarray, seed: int) -> np.ndarray:
    off = d2.copy()
    np.fill_diagonal(off, np.inf)
    dup_rows = np.flatnonzero((off == 0.0).any(axis=1))
    if dup_rows.size == 0:
        return X
    warnings.warn(
        f"{dup_rows.size} duplicate rows; applying tiny seeded jitter",
        stacklevel=3,
    )
    scale = float(np.sqrt(X.var(axis=0).mean()))
    if scale == 0.0:
        scale = 1.0
    rng = np.random.default_rng(seed)
    X = X.copy()
    X[dup_rows] += rng.normal(0.0, _JITTER_SCALE * scale, (dup_rows.size, X.shape[1]))
    return X


def _entropy_and_probs(d2_row: np.ndarray, beta: np.ndarray):
    """Shannon entropy (nats) and conditional probabilities per row.

    d2_row excludes the diagonal; beta is the per-row precision 1/(2 sigma^2).
    """
    logits = -d2_row * beta[:, None]
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    sums = w.sum(axis=1)
    p = w / sums[:, None]
    # H = log(sum w) - sum(w * log w) / sum w, computed from normalized p
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(p), 0.0)
    return -plogp.sum(axis=1), p


def calibrate_affinities(X: np.ndarray, perplexity: float, *, seed: int = 0) -> np.ndarray:
    """Symmetric affinity matrix whose conditionals hit the target perplexity.

    Requires 1 < perplexity <= N - 1 so the entropy target is reachable.
    Duplicate rows get a tiny seeded jitter (with a warning); a row whose
    bisection fails to converge within the budget raises.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 4:
        raise ConfigurationError(f"need at least 4 samples, got {n}")
    if not 1.0 < perplexity <= n - 1:
        raise ConfigurationError(
            f"perplexity must be in (1, N-1] = (1, {n - 1}], got {perplexity}"
        )
    d2 = squared_distances(X)
    Xj = _jitter_duplicates(X, d2, seed)
    if Xj is not X:
        d2 = squared_distances(Xj)
    # strip the diagonal so every row is its N-1 neighbor distances
    mask = ~np.eye(n, dtype=bool)
    rows = d2[mask].reshape(n, n - 1)

    target_h = np.log(perplexity)
    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    p = None
    for _ in range(MAX_BISECTIONS):
        h, p = _entropy_and_probs(rows, beta)
        realized = np.exp(h)
        done = np.abs(realized - perplexity) <= PERPLEXITY_TOL
        if done.all():
            break
        too_wide = h > target_h  # entropy too high -> sharpen -> raise beta
        lo = np.where(~done & too_wide, beta, lo)
        hi = np.where(~done & ~too_wide, beta, hi)
        grow = ~done & too_wide
        shrink = ~done & ~too_wide
        beta = np.where(grow, np.where(np.isinf(hi), beta * 2.0, (beta + hi) / 2.0), beta)
        beta = np.where(shrink, np.where(np.isinf(lo), beta / 2.0, (beta + lo) / 2.0), beta)
    else:
        bad = np.flatnonzero(np.abs(np.exp(_entropy_and_probs(rows, beta)[0]) - perplexity)
                             > PERPLEXITY_TOL)
        raise BandwidthSearchError(
            f"bandwidth search did not converge for rows {bad[:10].tolist()} "
            f"after {MAX_BISECTIONS} bisections"
        )
    cond = np.zeros((n, n))
    cond[mask] = p.reshape(-1)
    joint = (cond + cond.T) / (2.0 * n)
    return joint
