"""2D t-SNE with an exact gradient and a Barnes-Hut quadtree approximation.

The optimizer fixes the externally meaningful knobs (perplexity, iteration
count, theta, PCA initialization) and uses the standard recipe for the rest:
early exaggeration 12 for the first 250 iterations, learning rate 200,
momentum 0.5 switching to 0.8 when exaggeration ends, and per-coordinate
adaptive gains. All of it is overridable through TsneConfig.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .affinities import calibrate_affinities, squared_distances
from .errors import ConfigurationError, GradientNonFiniteError
from .pca import pca_initialize
from .quadtree import QuadTree

_INIT_STD = 1e-4
_MIN_GAIN = 0.01
_KL_EVERY = 50


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 50.0
    iterations: int = 1500
    theta: float = 0.5
    learning_rate: float = 200.0
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 1.0:
            raise ConfigurationError("perplexity must exceed 1")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0, 1]")
        if self.learning_rate <= 0 or self.early_exaggeration_factor <= 0:
            raise ConfigurationError("learning rate and exaggeration must be positive")
        if self.early_exaggeration_iters < 0:
            raise ConfigurationError("early_exaggeration_iters must be >= 0")

    def effective_perplexity(self, n: int) -> float:
        """Auto-reduce the perplexity when N < 3 * perplexity + 1."""
        if n >= 3 * self.perplexity + 1:
            return self.perplexity
        reduced = math.floor((n - 1) / 3)
        if reduced <= 1:
            raise ConfigurationError(
                f"{n} samples is too few for any usable perplexity"
            )
        warnings.warn(
            f"perplexity {self.perplexity} too large for {n} samples; "
            f"reduced to {reduced}",
            stacklevel=3,
        )
        return float(reduced)


def _student_kernel(Y: np.ndarray) -> np.ndarray:
    """Unnormalized Student-t(1) affinities 1 / (1 + d^2), zero diagonal."""
    q = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(q, 0.0)
    return q


def exact_gradient(Y: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Dense O(N^2) KL gradient: 4 * sum_j (p_ij - q_ij) q'_ij (y_i - y_j)."""
    Y = np.asarray(Y, dtype=float)
    qn = _student_kernel(Y)
    z = qn.sum()
    attr_w = P * qn
    attr = attr_w.sum(axis=1)[:, None] * Y - attr_w @ Y
    if z > 0.0:
        rep_w = qn * qn
        rep = (rep_w.sum(axis=1)[:, None] * Y - rep_w @ Y) / z
    else:
        rep = np.zeros_like(Y)
    return 4.0 * (attr - rep)


def bh_gradient(Y: np.ndarray, P: np.ndarray, theta: float) -> np.ndarray:
    """KL gradient with quadtree-approximated repulsion.

    theta = 0 opens every cell, reproducing the exact gradient up to
    summation order.
    """
    Y = np.asarray(Y, dtype=float)
    qn = _student_kernel(Y)
    attr_w = P * qn
    attr = attr_w.sum(axis=1)[:, None] * Y - attr_w @ Y
    num, z = QuadTree(Y).repulsion(theta)
    rep = num / z if z > 0.0 else np.zeros_like(Y)
    return 4.0 * (attr - rep)


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    """KL(P || Q) of the current embedding, skipping zero-P terms."""
    qn = _student_kernel(Y)
    z = qn.sum()
    if z <= 0.0:
        return 0.0
    q = np.maximum(qn / z, 1e-12)
    mask = P > 0.0
    return float(np.sum(P[mask] * np.log(P[mask] / q[mask])))


def tsne_embed(X: np.ndarray, config: TsneConfig,
               init: np.ndarray | None = None) -> tuple[np.ndarray, list[float]]:
    """Embed rows of X into 2D; returns (Y, kl_trace).

    Deterministic given (X, config, init). The KL trace is sampled at
    iteration 0, every 50 iterations, and at the final iteration, always
    against the un-exaggerated affinities.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigurationError(f"expected a 2D matrix, got shape {X.shape}")
    n = X.shape[0]
    perplexity = config.effective_perplexity(n)
    P = calibrate_affinities(X, perplexity, seed=config.seed)

    if init is None:
        Y = pca_initialize(X, 2)
        spread = Y[:, 0].std()
        if spread > 0.0:
            Y = Y / spread * _INIT_STD
        else:
            Y = np.random.default_rng(config.seed).normal(0.0, _INIT_STD, (n, 2))
    else:
        Y = np.array(init, dtype=float)
        if Y.shape != (n, 2):
            raise ConfigurationError(f"init must be ({n}, 2), got {Y.shape}")

    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_trace = [kl_divergence(P, Y)]
    for it in range(1, config.iterations + 1):
        exaggerated = it <= config.early_exaggeration_iters
        p_run = P * config.early_exaggeration_factor if exaggerated else P
        if config.theta == 0.0:
            grad = exact_gradient(Y, p_run)
        else:
            grad = bh_gradient(Y, p_run, config.theta)
        if not np.all(np.isfinite(grad)):
            raise GradientNonFiniteError(it)
        mismatch = (grad > 0.0) != (update > 0.0)
        gains = np.where(mismatch, gains + 0.2, gains * 0.8)
        np.maximum(gains, _MIN_GAIN, out=gains)
        momentum = 0.5 if exaggerated else 0.8
        update = momentum * update - config.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        if it % _KL_EVERY == 0:
            kl_trace.append(kl_divergence(P, Y))
    if config.iterations % _KL_EVERY != 0:
        kl_trace.append(kl_divergence(P, Y))
    return Y, kl_trace
