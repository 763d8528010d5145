"""Gradient-based adversarial attacks: Lp projections and auto-scheduled PGD.

The optimizer starts from the clean point (no random initialization, no
restarts), takes steepest-ascent steps for the configured norm with a 0.75
momentum term, and halves the step size at a fixed checkpoint schedule
whenever progress stalls, restarting from the best iterate seen. The
returned point is always the feasible iterate with the highest attack loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import losses
from .data import LabeledDataset
from .errors import ConfigurationError, UnsupportedLossError
from .network import Network

NORMS = ("l2", "linf")
FEASIBILITY_TOL = 1e-9

# checkpoint periods as fractions of the run: 0.22, then shrinking by 0.03
# per checkpoint down to a floor of 0.06
_P_START = 0.22
_P_DECREMENT = 0.03
_P_MIN = 0.06
_RHO = 0.75
_MOMENTUM = 0.75


@dataclass(frozen=True)
class AttackConfig:
    norm: str = "linf"
    epsilon: float = 8.0 / 255.0
    iterations: int = 100
    loss_kind: str = "ce"
    num_targets: int | None = None  # None -> min(9, C - 1) at attack time
    seed: int = 0

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ConfigurationError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.loss_kind not in losses.LOSS_KINDS:
            raise ConfigurationError(
                f"loss_kind must be one of {losses.LOSS_KINDS}, got {self.loss_kind!r}"
            )
        if self.num_targets is not None and self.num_targets < 1:
            raise ConfigurationError("num_targets must be >= 1")


@dataclass
class AdversarialBatch:
    """Paired clean/perturbed samples for the correctly classified inputs."""

    clean: np.ndarray
    perturbed: np.ndarray
    labels: np.ndarray
    success: np.ndarray
    source_index: np.ndarray
    norm: str
    epsilon: float
    loss_kind: str
    iterations: int
    seed: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        self.success = np.asarray(self.success, dtype=bool)
        self.source_index = np.asarray(self.source_index, dtype=int)
        n = self.clean.shape[0]
        if not (self.perturbed.shape == self.clean.shape
                and self.labels.shape == (n,)
                and self.success.shape == (n,)
                and self.source_index.shape == (n,)):
            raise ConfigurationError("adversarial batch fields disagree on length")
        if n:
            deltas = (self.perturbed - self.clean).reshape(n, -1)
            if self.norm == "linf":
                norms = np.abs(deltas).max(axis=1)
            else:
                norms = np.sqrt((deltas**2).sum(axis=1))
            if norms.max() > self.epsilon + FEASIBILITY_TOL:
                raise ConfigurationError(
                    f"perturbation exceeds budget: {norms.max()} > {self.epsilon}"
                )
            if self.perturbed.min() < 0.0 or self.perturbed.max() > 1.0:
                raise ConfigurationError("perturbed pixels must lie in [0, 1]")

    def __len__(self) -> int:
        return self.clean.shape[0]


def save_batch(batch: AdversarialBatch, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / "clean.npy", batch.clean)
    np.save(d / "perturbed.npy", batch.perturbed)
    meta = {
        "norm": batch.norm,
        "epsilon": batch.epsilon,
        "loss_kind": batch.loss_kind,
        "iterations": batch.iterations,
        "seed": batch.seed,
        "labels": batch.labels.tolist(),
        "success": batch.success.tolist(),
        "source_index": batch.source_index.tolist(),
    }
    (d / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_batch(directory) -> AdversarialBatch:
    d = Path(directory)
    meta = json.loads((d / "metadata.json").read_text())
    return AdversarialBatch(
        clean=np.load(d / "clean.npy"),
        perturbed=np.load(d / "perturbed.npy"),
        labels=np.array(meta["labels"], dtype=int),
        success=np.array(meta["success"], dtype=bool),
        source_index=np.array(meta["source_index"], dtype=int),
        norm=meta["norm"],
        epsilon=meta["epsilon"],
        loss_kind=meta["loss_kind"],
        iterations=meta["iterations"],
        seed=meta["seed"],
    )


def project_ball(x: np.ndarray, x0: np.ndarray, norm: str, epsilon: float) -> np.ndarray:
    """Project one sample onto the epsilon-ball around x0 intersected with [0,1].

    Ball first, box second: with x0 in the box, clamping after an L2 radial
    projection can only shrink the distance to x0, so feasibility survives.
    A point already inside both sets comes back unchanged.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x.shape != x0.shape:
        raise ConfigurationError(f"shape mismatch {x.shape} vs {x0.shape}")
    return _project_batch(x[None], x0[None], norm, epsilon)[0]


def _project_batch(x, x0, norm, epsilon):
    if norm == "linf":
        z = np.clip(x, x0 - epsilon, x0 + epsilon)
    else:
        delta = (x - x0).reshape(x.shape[0], -1)
        norms = np.sqrt((delta**2).sum(axis=1))
        scale = np.ones_like(norms)
        over = norms > epsilon
        scale[over] = epsilon / norms[over]
        z = x0 + (delta * scale[:, None]).reshape(x.shape)
    return np.clip(z, 0.0, 1.0)


def _checkpoints(iterations: int) -> list[int]:
    """Checkpoint iterations from the shrinking-period fraction schedule."""
    ps = [0.0, _P_START]
    while ps[-1] < 1.0:
        ps.append(ps[-1] + max(ps[-1] - ps[-2] - _P_DECREMENT, _P_MIN))
    out = []
    for p in ps[1:]:
        w = min(int(math.ceil(p * iterations)), iterations)
        if w >= 1 and (not out or w > out[-1]):
            out.append(w)
    return out


def _step_direction(grad: np.ndarray, norm: str) -> np.ndarray:
    if norm == "linf":
        return np.sign(grad)
    flat = grad.reshape(grad.shape[0], -1)
    norms = np.sqrt((flat**2).sum(axis=1))
    norms[norms == 0.0] = 1.0
    return grad / norms.reshape((-1,) + (1,) * (grad.ndim - 1))


def _loss_and_grad(net, x, y, loss_kind, targets):
    loss, grad = net.loss_input_gradient(x, y, loss_kind, target=targets)
    return np.asarray(loss, dtype=float), grad


def apgd_attack_batch(net: Network, x0: np.ndarray, y: np.ndarray,
                      config: AttackConfig, targets=None):
    """Vectorized APGD over a batch; per-sample step sizes and checkpoints.

    Returns (x_best, success, loss_trace) with loss_trace of shape
    (n, iterations + 1); x_best[i] is sample i's highest-loss feasible
    iterate and success[i] compares its argmax against y[i].
    """
    x0 = np.asarray(x0, dtype=float)
    y = np.asarray(y, dtype=int)
    n = x0.shape[0]
    iters = config.iterations
    if config.loss_kind != "ce" and net.num_classes < 4:
        raise UnsupportedLossError(
            f"{config.loss_kind} needs >= 4 classes, model has {net.num_classes}"
        )
    trace = np.zeros((n, iters + 1))
    if n == 0:
        return x0.copy(), np.zeros(0, dtype=bool), trace

    loss, grad = _loss_and_grad(net, x0, y, config.loss_kind, targets)
    trace[:, 0] = loss
    x = x0.copy()
    x_prev = x0.copy()
    x_best = x0.copy()
    grad_best = grad.copy()
    best = loss.copy()
    prev_loss = loss.copy()

    bshape = (n,) + (1,) * (x0.ndim - 1)
    step = np.full(n, 2.0 * config.epsilon)
    checkpoints = _checkpoints(iters)
    improved = np.zeros(n, dtype=int)
    last_best = best.copy()
    halved_last = np.zeros(n, dtype=bool)
    prev_checkpoint = 0

    for i in range(1, iters + 1):
        alpha = 1.0 if i == 1 else _MOMENTUM
        z = _project_batch(x + step.reshape(bshape) * _step_direction(grad, config.norm),
                           x0, config.norm, config.epsilon)
        x_new = _project_batch(x + alpha * (z - x) + (1.0 - alpha) * (x - x_prev),
                               x0, config.norm, config.epsilon)
        x_prev, x = x, x_new

        loss, grad = _loss_and_grad(net, x, y, config.loss_kind, targets)
        trace[:, i] = loss
        improved += loss > prev_loss
        prev_loss = loss.copy()
        gained = loss > best
        x_best[gained] = x[gained]
        grad_best[gained] = grad[gained]
        best[gained] = loss[gained]

        if i in checkpoints:
            window = i - prev_checkpoint
            stalled = improved < _RHO * window
            flat = ~halved_last & (best <= last_best)
            halve = stalled | flat
            step[halve] *= 0.5
            x[halve] = x_best[halve]
            grad[halve] = grad_best[halve]
            x_prev[halve] = x[halve]  # momentum restarts cleanly from the best point
            halved_last = halve
            last_best = best.copy()
            improved[:] = 0
            prev_checkpoint = i

    logits = net.forward(x_best)
    success = logits.argmax(axis=1) != y
    return x_best, success, trace


def apgd_attack(net: Network, x0: np.ndarray, y: int, config: AttackConfig):
    """APGD on a single sample; see apgd_attack_batch for the batch form."""
    if config.loss_kind == "dlr-t":
        raise ConfigurationError("use apgd_targeted for the targeted DLR loss")
    x0 = np.asarray(x0, dtype=float)
    xb, success, trace = apgd_attack_batch(net, x0[None], np.array([int(y)]), config)
    return xb[0], bool(success[0]), trace[0].tolist()


def _resolve_targets(net: Network, x0: np.ndarray, y: np.ndarray,
                     config: AttackConfig) -> np.ndarray:
    """Per-sample target classes: the largest non-true logits on the clean input."""
    c = net.num_classes
    k = config.num_targets if config.num_targets is not None else min(9, c - 1)
    if k > c - 1:
        raise ConfigurationError(f"num_targets {k} exceeds C - 1 = {c - 1}")
    logits = net.forward(x0)
    masked = logits.copy()
    masked[np.arange(len(y)), y] = -np.inf
    order = np.argsort(-masked, axis=1, kind="stable")
    return order[:, :k]


def apgd_targeted_batch(net: Network, x0: np.ndarray, y: np.ndarray,
                        config: AttackConfig):
    """Targeted-DLR APGD, one run per target class, stopping at first success.

    Samples with no successful target keep the run with the highest best
    loss. Returns the same triple as apgd_attack_batch.
    """
    x0 = np.asarray(x0, dtype=float)
    y = np.asarray(y, dtype=int)
    n = x0.shape[0]
    cfg = replace(config, loss_kind="dlr-t")
    if net.num_classes < 4:
        raise UnsupportedLossError(
            f"dlr-t needs >= 4 classes, model has {net.num_classes}"
        )
    if n == 0:
        return x0.copy(), np.zeros(0, dtype=bool), np.zeros((0, cfg.iterations + 1))

    target_table = _resolve_targets(net, x0, y, cfg)
    x_out = x0.copy()
    success = np.zeros(n, dtype=bool)
    trace = np.zeros((n, cfg.iterations + 1))
    best_loss = np.full(n, -np.inf)
    active = np.arange(n)
    for round_idx in range(target_table.shape[1]):
        if active.size == 0:
            break
        xb, ok, tr = apgd_attack_batch(
            net, x0[active], y[active], cfg, targets=target_table[active, round_idx])
        run_best = tr.max(axis=1)
        sel = ok | (run_best > best_loss[active])
        upd = active[sel]
        x_out[upd] = xb[sel]
        trace[upd] = tr[sel]
        best_loss[upd] = np.maximum(best_loss[upd], run_best[sel])
        success[active[ok]] = True
        active = active[~ok]
    return x_out, success, trace


def apgd_targeted(net: Network, x0: np.ndarray, y: int, config: AttackConfig):
    x0 = np.asarray(x0, dtype=float)
    xb, success, trace = apgd_targeted_batch(net, x0[None], np.array([int(y)]), config)
    return xb[0], bool(success[0]), trace[0].tolist()


def attack_dataset(net: Network, data: LabeledDataset,
                   config: AttackConfig) -> AdversarialBatch:
    """Attack every correctly classified sample in the dataset."""
    pred = net.forward(data.images).argmax(axis=1)
    idx = np.flatnonzero(pred == data.labels)
    x0 = data.images[idx]
    y = data.labels[idx]
    if config.loss_kind == "dlr-t":
        xb, success, _ = apgd_targeted_batch(net, x0, y, config)
    else:
        xb, success, _ = apgd_attack_batch(net, x0, y, config)
    return AdversarialBatch(
        clean=x0, perturbed=xb, labels=y, success=success, source_index=idx,
        norm=config.norm, epsilon=config.epsilon, loss_kind=config.loss_kind,
        iterations=config.iterations, seed=config.seed,
    )


def robust_accuracy(net: Network, data: LabeledDataset,
                    batch: AdversarialBatch) -> float:
    """Accuracy over all validation images after substituting perturbed ones.

    Images that were misclassified before the attack count as errors, so an
    empty batch reproduces the clean accuracy.
    """
    if len(data) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    images = data.images.copy()
    if len(batch):
        images[batch.source_index] = batch.perturbed
    pred = net.forward(images).argmax(axis=1)
    return float(np.mean(pred == data.labels))
