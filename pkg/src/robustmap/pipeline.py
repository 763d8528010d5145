"""End-to-end orchestration: splits, attacks, per-layer maps and metrics.

One analysis run loads a trained model and a dataset, then for every seed:
stratified split -> attack the correctly classified validation images ->
capture representations per layer for the clean-paired, perturbed, and
misclassified populations -> joint t-SNE -> overlap metric. Reports are
aggregated across seeds and everything lands in a manifest with content
hashes. Outputs are deterministic given the config; only the manifest's
wall-clock timings differ between identical runs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers
from .attacks import AttackConfig, attack_dataset, robust_accuracy, save_batch
from .data import LabeledDataset, load_dataset, stratified_split
from .embedmap import EmbeddingMap, joint_embedding
from .errors import ConfigurationError, RobustmapError
from .metric import LayerRobustnessReport, report_from_map, reports_to_csv
from .network import Network, build_network
from .training import evaluate_accuracy
from .tsne import TsneConfig

INPUT_LAYER = "input"
_VERSION = "0.1.0"


def toy_cnn(num_classes: int = 10, image_size: int = 8, channels: int = 1,
            seed: int = 0) -> Network:
    """The bundled desk-scale CNN: two conv blocks and a small dense head."""
    spec = [
        layers.conv2d(8, 3, name="conv2d"),
        layers.relu(name="activation"),
        layers.maxpool2d(2, name="max_pooling2d"),
        layers.conv2d(16, 3, name="conv2d_1"),
        layers.relu(name="activation_1"),
        layers.maxpool2d(2, name="max_pooling2d_1"),
        layers.flatten(name="flatten"),
        layers.dense(32, name="dense"),
        layers.relu(name="activation_2"),
        layers.dense(num_classes, name="dense_1"),
    ]
    return build_network((image_size, image_size, channels), spec, seed=seed)


@dataclass(frozen=True)
class AnalysisConfig:
    dataset: str
    model: str
    out_dir: str
    seeds: tuple = tuple(range(10))
    n_val: int = 120
    n_test: int = 120
    attack: AttackConfig = field(default_factory=AttackConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    capture_layers: tuple | str = "all"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        if self.capture_layers != "all":
            d["capture_layers"] = list(self.capture_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        d = dict(d)
        if "attack" in d and isinstance(d["attack"], dict):
            d["attack"] = AttackConfig(**d["attack"])
        if "tsne" in d and isinstance(d["tsne"], dict):
            d["tsne"] = TsneConfig(**d["tsne"])
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        if "capture_layers" in d and d["capture_layers"] != "all":
            d["capture_layers"] = tuple(d["capture_layers"])
        return cls(**d)


@dataclass
class RunManifest:
    version: str
    config: dict
    per_seed: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_capture_layers(net: Network, requested) -> list[str]:
    """Normalize the capture list to network order, with the input first."""
    known = [INPUT_LAYER] + net.layer_names
    if requested == "all":
        return known
    requested = list(requested)
    unknown = set(requested) - set(known)
    if unknown:
        raise ConfigurationError(
            f"unknown capture layer(s) {sorted(unknown)}; valid names: {known}"
        )
    return [name for name in known if name in requested]


def _capture_population(net: Network, images: np.ndarray,
                        capture: list[str]) -> dict[str, np.ndarray]:
    """Flattened per-layer representations, including the raw-input pseudo layer."""
    out = {}
    net_layers = [name for name in capture if name != INPUT_LAYER]
    if images.shape[0]:
        _, captured = net.forward_capture(images, net_layers)
    else:
        captured = {name: np.zeros((0, 1)) for name in net_layers}
    if INPUT_LAYER in capture:
        out[INPUT_LAYER] = images.reshape(images.shape[0], -1).copy()
    out.update(captured)
    return out


def _cache_key(seed: int, layer: str, config: AnalysisConfig,
               model_hash: str, dataset_hash: str) -> str:
    payload = {
        "seed": seed,
        "layer": layer,
        "attack": dataclasses.asdict(config.attack),
        "tsne": dataclasses.asdict(config.tsne),
        "n_val": config.n_val,
        "n_test": config.n_test,
        "model": model_hash,
        "dataset": dataset_hash,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def export_report(reports: list[LayerRobustnessReport], csv_path, json_path,
                  layer_order: list[str] | None = None) -> dict:
    """Write the per-row CSV and the per-layer aggregate JSON; returns the aggregates.

    CSV columns: layer, seed, norm, epsilon, loss, n_pairs, metric. Floats
    are written with repr so a re-import reproduces values exactly.
    """
    if not reports:
        raise ConfigurationError("no reports to export")
    Path(csv_path).write_text(reports_to_csv(reports))
    order = layer_order or list(dict.fromkeys(r.layer_name for r in reports))
    aggregates = {"layers": []}
    for layer in order:
        values = [r.metric_value for r in reports if r.layer_name == layer]
        if not values:
            continue
        aggregates["layers"].append({
            "layer": layer,
            "mean_metric": float(np.mean(values)),
            "std_metric": float(np.std(values)),
            "n_seeds": len(values),
        })
    Path(json_path).write_text(json.dumps(aggregates, indent=2) + "\n")
    return aggregates


def calibrate_epsilon(net: Network, data: LabeledDataset, attack: AttackConfig,
                      target_robust_accuracy: float = 0.05,
                      start: float | None = None, factor: float = 2.0,
                      max_steps: int = 12) -> tuple[float, float]:
    """Sweep epsilon upward until robust accuracy falls to the target.

    Emulates the regime where post-attack accuracy is near zero so the
    layerwise degradation is observable. Returns (epsilon, robust_accuracy).
    """
    eps = start if start is not None else (2.0 / 255.0 if attack.norm == "linf" else 0.1)
    for _ in range(max_steps):
        cfg = dataclasses.replace(attack, epsilon=eps)
        batch = attack_dataset(net, data, cfg)
        acc = robust_accuracy(net, data, batch)
        if acc <= target_robust_accuracy:
            return eps, acc
        eps *= factor
    raise RobustmapError(
        f"attack never reached robust accuracy <= {target_robust_accuracy} "
        f"within {max_steps} doublings (last epsilon {eps / factor})"
    )


def run_analysis(config: AnalysisConfig) -> RunManifest:
    t_start = time.perf_counter()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cache").mkdir(exist_ok=True)

    net = Network.load(config.model)
    data = load_dataset(config.dataset)
    capture = resolve_capture_layers(net, config.capture_layers)
    model_hash = _sha256(Path(config.model))
    dataset_hash = _sha256(Path(config.dataset))

    manifest = RunManifest(version=_VERSION, config=config.to_dict())
    all_reports: list[LayerRobustnessReport] = []

    for seed in config.seeds:
        t_seed = time.perf_counter()
        seed_dir = out / f"seed_{seed}"
        (seed_dir / "maps").mkdir(parents=True, exist_ok=True)
        (seed_dir / "reports").mkdir(exist_ok=True)

        val, _test = stratified_split(data, seed, (config.n_val, config.n_test))
        clean_acc = evaluate_accuracy(net, val)
        batch = attack_dataset(net, val, config.attack)
        save_batch(batch, seed_dir / "batch")
        rob_acc = robust_accuracy(net, val, batch)

        attacked = np.zeros(len(val), dtype=bool)
        attacked[batch.source_index] = True
        mis_images = val.images[~attacked]
        mis_labels = val.labels[~attacked]

        clean_caps = _capture_population(net, batch.clean, capture)
        pert_caps = _capture_population(net, batch.perturbed, capture)
        mis_caps = _capture_population(net, mis_images, capture)

        seed_entry = {
            "clean_accuracy": clean_acc,
            "robust_accuracy": rob_acc,
            "n_pairs": len(batch),
            "n_misclassified": int(mis_images.shape[0]),
            "failures": {},
        }
        for layer in capture:
            map_path = seed_dir / "maps" / f"{layer}.csv"
            report_path = seed_dir / "reports" / f"{layer}.json"
            cache_path = out / "cache" / (
                _cache_key(seed, layer, config, model_hash, dataset_hash) + ".csv")
            try:
                if cache_path.exists():
                    emap = EmbeddingMap.load(cache_path)
                else:
                    emap, _ = joint_embedding(
                        clean_caps[layer], pert_caps[layer], batch.labels,
                        config.tsne,
                        misclassified=mis_caps[layer] if mis_images.shape[0] else None,
                        misclassified_labels=mis_labels if mis_images.shape[0] else None,
                    )
                    emap.save(cache_path)
                report = report_from_map(
                    emap, layer, seed, config.attack.norm,
                    config.attack.epsilon, config.attack.loss_kind)
            except RobustmapError as err:
                seed_entry["failures"][layer] = f"{type(err).__name__}: {err}"
                continue
            emap.save(map_path)
            report.save(report_path)
            all_reports.append(report)
        manifest.per_seed[str(seed)] = seed_entry
        manifest.timings[f"seed_{seed}_s"] = time.perf_counter() - t_seed

    if all_reports:
        manifest.aggregates = export_report(
            all_reports, out / "metrics.csv", out / "summary_layers.json",
            layer_order=capture)
    summary = {
        "attack": dataclasses.asdict(config.attack),
        "per_seed_accuracy": {
            s: {"clean": e["clean_accuracy"], "robust": e["robust_accuracy"]}
            for s, e in manifest.per_seed.items()
        },
        "layers": manifest.aggregates.get("layers", []),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest.files[str(path.relative_to(out))] = _sha256(path)
    manifest.timings["total_s"] = time.perf_counter() - t_start
    manifest.save(out / "manifest.json")
    return manifest
