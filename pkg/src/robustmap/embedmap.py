"""Role-tagged 2D maps: the joint embedding of clean, perturbed, and
misclassified representations of one layer, serializable to CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .tsne import TsneConfig, tsne_embed

ROLE_CLEAN = "clean-paired"
ROLE_PERTURBED = "perturbed"
ROLE_MISCLASSIFIED = "clean-misclassified"
ROLES = (ROLE_CLEAN, ROLE_PERTURBED, ROLE_MISCLASSIFIED)

_CSV_COLUMNS = ("pair_index", "role", "true_label", "x", "y")


@dataclass
class EmbeddingMap:
    """2D points tagged with role, true label, and clean/perturbed pairing.

    Every clean-paired point shares its pair_index with exactly one
    perturbed point; misclassified points carry pair_index -1.
    """

    points: np.ndarray
    roles: list[str]
    true_labels: np.ndarray
    pair_index: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.true_labels = np.asarray(self.true_labels, dtype=int)
        self.pair_index = np.asarray(self.pair_index, dtype=int)
        n = self.points.shape[0]
        if self.points.shape != (n, 2):
            raise ConfigurationError(f"points must be (N, 2), got {self.points.shape}")
        if not (len(self.roles) == n and self.true_labels.shape == (n,)
                and self.pair_index.shape == (n,)):
            raise ConfigurationError("embedding map fields disagree on length")
        bad = set(self.roles) - set(ROLES)
        if bad:
            raise ConfigurationError(f"unknown roles {sorted(bad)}")
        roles = np.array(self.roles)
        clean_pairs = self.pair_index[roles == ROLE_CLEAN]
        pert_pairs = self.pair_index[roles == ROLE_PERTURBED]
        if (sorted(clean_pairs.tolist()) != sorted(set(clean_pairs.tolist()))
                or sorted(pert_pairs.tolist()) != sorted(set(pert_pairs.tolist()))
                or set(clean_pairs.tolist()) != set(pert_pairs.tolist())
                or (clean_pairs < 0).any()):
            raise ConfigurationError("clean/perturbed pair indices must match 1:1")
        if (self.pair_index[roles == ROLE_MISCLASSIFIED] != -1).any():
            raise ConfigurationError("misclassified points cannot carry a pair index")

    def __len__(self) -> int:
        return self.points.shape[0]

    def n_pairs(self) -> int:
        return sum(1 for r in self.roles if r == ROLE_CLEAN)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for i in range(len(self)):
            pair = "" if self.pair_index[i] < 0 else str(int(self.pair_index[i]))
            writer.writerow([pair, self.roles[i], int(self.true_labels[i]),
                             repr(float(self.points[i, 0])),
                             repr(float(self.points[i, 1]))])
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "EmbeddingMap":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != _CSV_COLUMNS:
            raise ConfigurationError(f"unexpected CSV header {header}")
        pairs, roles, labels, xs, ys = [], [], [], [], []
        for row in reader:
            pairs.append(int(row[0]) if row[0] else -1)
            roles.append(row[1])
            labels.append(int(row[2]))
            xs.append(float(row[3]))
            ys.append(float(row[4]))
        return cls(np.column_stack([xs, ys]), roles, np.array(labels), np.array(pairs))

    @classmethod
    def load(cls, path) -> "EmbeddingMap":
        return cls.from_csv(Path(path).read_text())


def joint_embedding(clean: np.ndarray, perturbed: np.ndarray, labels: np.ndarray,
                    config: TsneConfig,
                    misclassified: np.ndarray | None = None,
                    misclassified_labels: np.ndarray | None = None,
                    init: np.ndarray | None = None) -> tuple[EmbeddingMap, list[float]]:
    """Embed clean-paired, perturbed, and misclassified rows in one shared map.

    The overlap metric compares Euclidean distances between clean and
    perturbed embeddings, which is only meaningful when both populations are
    optimized jointly.
    """
    clean = np.asarray(clean, dtype=float)
    perturbed = np.asarray(perturbed, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = clean.shape[0]
    if perturbed.shape != clean.shape or labels.shape != (n,):
        raise ConfigurationError("clean/perturbed/label shapes disagree")
    blocks = [clean, perturbed]
    roles = [ROLE_CLEAN] * n + [ROLE_PERTURBED] * n
    all_labels = [labels, labels]
    pair_idx = [np.arange(n), np.arange(n)]
    if misclassified is not None and len(misclassified):
        misclassified = np.asarray(misclassified, dtype=float)
        mlabels = np.asarray(misclassified_labels, dtype=int)
        if mlabels.shape != (misclassified.shape[0],):
            raise ConfigurationError("misclassified labels disagree with rows")
        blocks.append(misclassified)
        roles += [ROLE_MISCLASSIFIED] * misclassified.shape[0]
        all_labels.append(mlabels)
        pair_idx.append(np.full(misclassified.shape[0], -1))
    X = np.vstack(blocks)
    Y, kl_trace = tsne_embed(X, config, init=init)
    emap = EmbeddingMap(Y, roles, np.concatenate(all_labels), np.concatenate(pair_idx))
    return emap, kl_trace
