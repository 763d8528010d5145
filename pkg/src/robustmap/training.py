"""Plain SGD training for desk-scale classifiers, plus accuracy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import ConfigurationError, TrainingDivergedError
from .losses import ce_loss_grad
from .network import Network


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigurationError("train config values must be positive")


@dataclass
class TrainingReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_accuracies: list[float] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float | None:
        return self.epoch_accuracies[-1] if self.epoch_accuracies else None


def evaluate_accuracy(net: Network, data: LabeledDataset) -> float:
    """Fraction of samples whose argmax logit hits the label (ties -> lowest index)."""
    if len(data) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    pred = net.forward(data.images).argmax(axis=1)
    return float(np.mean(pred == data.labels))


def train(net: Network, data: LabeledDataset, config: TrainConfig) -> TrainingReport:
    """Minibatch SGD on cross-entropy; mutates the network in place.

    Deterministic given the seed. Raises TrainingDivergedError with the
    epoch number if the loss goes non-finite. Zero epochs is a no-op with
    an empty report.
    """
    if len(data) == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    report = TrainingReport()
    n = len(data)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = data.images[idx], data.labels[idx]
            acts = net._activations(xb)
            loss, dlogits = ce_loss_grad(acts[-1], yb)
            if not np.all(np.isfinite(loss)):
                raise TrainingDivergedError(epoch)
            total_loss += float(loss.sum())
            # average the gradient over the minibatch
            dy = dlogits / len(idx)
            for i in range(len(net.layers) - 1, -1, -1):
                dy, dparams = net.layers[i].backward(acts[i], dy, with_params=True)
                if dparams:
                    params = net.layers[i].params()
                    for pname, g in dparams.items():
                        params[pname] -= config.learning_rate * g
        report.epoch_losses.append(total_loss / n)
        report.epoch_accuracies.append(evaluate_accuracy(net, data))
    return report
