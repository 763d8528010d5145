"""Attack objectives over logits: cross-entropy and the DLR family.

All three accept a single logit vector or a batch of rows. Softmax only
ever appears inside the CE loss; networks emit raw logits. The DLR losses
are invariant to logit shifts and to positive rescaling, which is what
makes them usable as attack objectives on models with uncalibrated heads.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateLogitsError, UnsupportedLossError

LOSS_KINDS = ("ce", "dlr", "dlr-t")


def _as_batch(logits, y, t=None):
    z = np.asarray(logits, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    yv = np.atleast_1d(np.asarray(y, dtype=int))
    if t is None:
        return z, yv, None, single
    tv = np.atleast_1d(np.asarray(t, dtype=int))
    return z, yv, tv, single


def _unbatch(single, *arrays):
    out = tuple(a[0] if single else a for a in arrays)
    return out if len(out) > 1 else out[0]


def ce_loss(logits, y):
    """Cross-entropy -log softmax(z)[y], stabilized by max subtraction."""
    loss, _ = ce_loss_grad(logits, y)
    return loss


def ce_loss_grad(logits, y):
    z, yv, _, single = _as_batch(logits, y)
    if z.shape[1] < 2:
        raise UnsupportedLossError("cross-entropy needs at least 2 classes")
    zs = z - z.max(axis=1, keepdims=True)
    ez = np.exp(zs)
    sm = ez / ez.sum(axis=1, keepdims=True)
    rows = np.arange(z.shape[0])
    loss = np.log(ez.sum(axis=1)) - zs[rows, yv]
    grad = sm.copy()
    grad[rows, yv] -= 1.0
    return _unbatch(single, loss, grad)


def _dlr_pieces(z, yv):
    # pi sorts each row descending, stable so ties resolve by class index
    order = np.argsort(-z, axis=1, kind="stable")
    rows = np.arange(z.shape[0])
    z1 = z[rows, order[:, 0]]
    z3 = z[rows, order[:, 2]]
    # largest logit excluding the true class
    zy = z[rows, yv]
    masked = z.copy()
    masked[rows, yv] = -np.inf
    other = masked.argmax(axis=1)
    return order, rows, zy, other, z1, z3


def dlr_loss(logits, y):
    """DLR loss -(z_y - max_{i!=y} z_i) / (z_pi1 - z_pi3)."""
    loss, _ = dlr_loss_grad(logits, y)
    return loss


def dlr_loss_grad(logits, y):
    z, yv, _, single = _as_batch(logits, y)
    if z.shape[1] < 4:
        raise UnsupportedLossError(
            f"DLR loss needs at least 4 classes, got {z.shape[1]}"
        )
    order, rows, zy, other, z1, z3 = _dlr_pieces(z, yv)
    denom = z1 - z3
    if np.any(denom == 0.0):
        raise DegenerateLogitsError(
            "DLR denominator vanished: top-1 logit equals top-3 logit"
        )
    num = zy - z[rows, other]
    loss = -num / denom
    # quotient rule: dL = -(du * v - u * dv) / v^2 with indicator one-hots
    grad = np.zeros_like(z)
    np.add.at(grad, (rows, yv), -1.0 / denom)
    np.add.at(grad, (rows, other), 1.0 / denom)
    np.add.at(grad, (rows, order[:, 0]), num / denom**2)
    np.add.at(grad, (rows, order[:, 2]), -num / denom**2)
    return _unbatch(single, loss, grad)


def targeted_dlr_loss(logits, y, t):
    """Targeted DLR loss -(z_y - z_t) / (z_pi1 - (z_pi3 + z_pi4) / 2)."""
    loss, _ = targeted_dlr_loss_grad(logits, y, t)
    return loss


def targeted_dlr_loss_grad(logits, y, t):
    z, yv, tv, single = _as_batch(logits, y, t)
    if z.shape[1] < 4:
        raise UnsupportedLossError(
            f"targeted DLR loss needs at least 4 classes, got {z.shape[1]}"
        )
    if np.any(tv == yv):
        raise UnsupportedLossError("target class must differ from the true class")
    order = np.argsort(-z, axis=1, kind="stable")
    rows = np.arange(z.shape[0])
    z1 = z[rows, order[:, 0]]
    z3 = z[rows, order[:, 2]]
    z4 = z[rows, order[:, 3]]
    denom = z1 - 0.5 * (z3 + z4)
    if np.any(denom == 0.0):
        raise DegenerateLogitsError(
            "targeted DLR denominator vanished: top-1 equals the top-3/4 midpoint"
        )
    num = z[rows, yv] - z[rows, tv]
    loss = -num / denom
    grad = np.zeros_like(z)
    np.add.at(grad, (rows, yv), -1.0 / denom)
    np.add.at(grad, (rows, tv), 1.0 / denom)
    np.add.at(grad, (rows, order[:, 0]), num / denom**2)
    np.add.at(grad, (rows, order[:, 2]), -0.5 * num / denom**2)
    np.add.at(grad, (rows, order[:, 3]), -0.5 * num / denom**2)
    return _unbatch(single, loss, grad)


def loss_grad(kind: str, logits, y, t=None):
    """Dispatch on loss kind; returns (loss, dloss/dlogits)."""
    if kind == "ce":
        return ce_loss_grad(logits, y)
    if kind == "dlr":
        return dlr_loss_grad(logits, y)
    if kind == "dlr-t":
        if t is None:
            raise UnsupportedLossError("dlr-t requires a target class")
        return targeted_dlr_loss_grad(logits, y, t)
    raise UnsupportedLossError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
