"""Layerwise robustness metric: clean/perturbed overlap on the 2D map.

A clean-perturbed pair overlaps when the pair's Euclidean distance on the
map is strictly smaller than the distance from the clean point to its
nearest clean point of a different class. The metric is the overlapping
fraction: 1 means the layer keeps perturbed representations glued to their
clean counterparts, 0 means they have fully diverged.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedmap import ROLE_CLEAN, ROLE_PERTURBED, EmbeddingMap, joint_embedding
from .errors import MetricInputError, RobustmapError
from .tsne import TsneConfig


@dataclass(frozen=True)
class OverlapInputs:
    """Paired clean/perturbed 2D points with the clean points' true labels."""

    clean: np.ndarray
    perturbed: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "clean", np.asarray(self.clean, dtype=float))
        object.__setattr__(self, "perturbed", np.asarray(self.perturbed, dtype=float))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))
        n = self.clean.shape[0]
        if n < 1 or self.clean.shape != (n, 2) or self.perturbed.shape != (n, 2) \
                or self.labels.shape != (n,):
            raise MetricInputError(
                f"need matching (n, 2) point sets with n >= 1 labels, got "
                f"{self.clean.shape}/{self.perturbed.shape}/{self.labels.shape}"
            )
        if np.unique(self.labels).size < 2:
            raise MetricInputError(
                "overlap detection needs attacked instances from at least two classes"
            )

    def __len__(self) -> int:
        return self.clean.shape[0]


def _nearest_other_class(inputs: OverlapInputs) -> np.ndarray:
    c = inputs.clean
    diff = c[:, None, :] - c[None, :, :]
    dist = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    same = inputs.labels[:, None] == inputs.labels[None, :]
    dist[same] = np.inf
    return dist.min(axis=1)


def overlap_flags(inputs: OverlapInputs) -> np.ndarray:
    """Per-pair overlap decisions (vectorized form of `overlapping`)."""
    d = inputs.perturbed - inputs.clean
    pair_dist = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)
    return pair_dist < _nearest_other_class(inputs)


def overlapping(i: int, inputs: OverlapInputs) -> bool:
    """Does pair i overlap? Strict inequality; ties count as non-overlap."""
    if not 0 <= i < len(inputs):
        raise MetricInputError(f"pair index {i} out of range")
    other = inputs.labels != inputs.labels[i]
    if not other.any():
        raise MetricInputError(
            f"pair {i}: no clean point of a different class exists"
        )
    diff = inputs.clean[other] - inputs.clean[i]
    nearest = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2).min()
    d = inputs.perturbed[i] - inputs.clean[i]
    return bool(np.sqrt(d[0] ** 2 + d[1] ** 2) < nearest)


def robustness_metric(inputs: OverlapInputs) -> float:
    """Fraction of clean-perturbed pairs that overlap; always in [0, 1]."""
    return float(overlap_flags(inputs).mean())


@dataclass
class LayerRobustnessReport:
    layer_name: str
    metric_value: float
    n_pairs: int
    per_pair_overlap: list[bool]
    seed: int
    norm: str
    epsilon: float
    loss_kind: str

    def __post_init__(self):
        if abs(self.metric_value - float(np.mean(self.per_pair_overlap))) > 1e-12:
            raise MetricInputError("metric_value must equal mean(per_pair_overlap)")

    def to_dict(self) -> dict:
        return {
            "layer_name": self.layer_name,
            "metric_value": self.metric_value,
            "n_pairs": self.n_pairs,
            "per_pair_overlap": [bool(b) for b in self.per_pair_overlap],
            "seed": self.seed,
            "norm": self.norm,
            "epsilon": self.epsilon,
            "loss_kind": self.loss_kind,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "LayerRobustnessReport":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "LayerRobustnessReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def map_overlap_inputs(emap: EmbeddingMap) -> OverlapInputs:
    """Extract the paired points of a map, ordered by pair index."""
    roles = np.array(emap.roles)
    clean_sel = np.flatnonzero(roles == ROLE_CLEAN)
    pert_sel = np.flatnonzero(roles == ROLE_PERTURBED)
    clean_sel = clean_sel[np.argsort(emap.pair_index[clean_sel], kind="stable")]
    pert_sel = pert_sel[np.argsort(emap.pair_index[pert_sel], kind="stable")]
    return OverlapInputs(
        clean=emap.points[clean_sel],
        perturbed=emap.points[pert_sel],
        labels=emap.true_labels[clean_sel],
    )


def report_from_map(emap: EmbeddingMap, layer_name: str, seed: int,
                    norm: str, epsilon: float, loss_kind: str) -> LayerRobustnessReport:
    inputs = map_overlap_inputs(emap)
    flags = overlap_flags(inputs)
    return LayerRobustnessReport(
        layer_name=layer_name,
        metric_value=float(flags.mean()),
        n_pairs=len(inputs),
        per_pair_overlap=flags.tolist(),
        seed=seed,
        norm=norm,
        epsilon=epsilon,
        loss_kind=loss_kind,
    )


@dataclass
class LayerAnalysis:
    """Outcome for one layer: a report and its map, or an error marker."""

    layer_name: str
    report: LayerRobustnessReport | None = None
    embedding: EmbeddingMap | None = None
    kl_trace: list[float] = field(default_factory=list)
    error: str | None = None


def per_layer_metrics(layer_names: list[str], captures: dict,
                      labels: np.ndarray, tsne_config: TsneConfig,
                      seed: int, norm: str, epsilon: float, loss_kind: str,
                      misclassified: dict | None = None,
                      misclassified_labels: np.ndarray | None = None,
                      ) -> list[LayerAnalysis]:
    """Joint-embed and score every layer, continuing past per-layer failures.

    `captures` maps layer name -> (clean_matrix, perturbed_matrix); the
    optional `misclassified` maps layer name -> matrix for the clean images
    the model got wrong. Layers are processed in the order given, which the
    caller should keep topological.
    """
    results = []
    for name in layer_names:
        analysis = LayerAnalysis(layer_name=name)
        try:
            clean_m, pert_m = captures[name]
            mis = misclassified.get(name) if misclassified else None
            emap, kl_trace = joint_embedding(
                clean_m, pert_m, labels, tsne_config,
                misclassified=mis, misclassified_labels=misclassified_labels,
            )
            analysis.embedding = emap
            analysis.kl_trace = kl_trace
            analysis.report = report_from_map(emap, name, seed, norm, epsilon, loss_kind)
        except (RobustmapError, KeyError) as err:
            analysis.error = f"{type(err).__name__}: {err}"
        results.append(analysis)
    return results


REPORT_CSV_COLUMNS = ("layer", "seed", "norm", "epsilon", "loss", "n_pairs", "metric")


def reports_to_csv(reports: list[LayerRobustnessReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_COLUMNS)
    for r in reports:
        writer.writerow([r.layer_name, r.seed, r.norm, repr(float(r.epsilon)),
                         r.loss_kind, r.n_pairs, repr(float(r.metric_value))])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[dict]:
    """Rows of the metrics CSV as dicts (values parsed back to numbers)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != REPORT_CSV_COLUMNS:
        raise MetricInputError(f"unexpected CSV header {header}")
    rows = []
    for row in reader:
        rows.append({
            "layer": row[0], "seed": int(row[1]), "norm": row[2],
            "epsilon": float(row[3]), "loss": row[4],
            "n_pairs": int(row[5]), "metric": float(row[6]),
        })
    return rows
