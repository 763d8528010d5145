"""Pydantic request/response models for the analysis service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SyntheticDatasetRequest(BaseModel):
    out: str
    num_classes: int = 10
    per_class: int = 40
    image_size: int = 8
    channels: int = 1
    noise: float = 0.06
    seed: int = 0


class DatasetResponse(BaseModel):
    path: str
    n_samples: int
    image_shape: list[int]
    num_classes: int


class TrainRequest(BaseModel):
    dataset: str
    out: str
    epochs: int = 10
    learning_rate: float = 0.2
    batch_size: int = 32
    seed: int = 0


class TrainResponse(BaseModel):
    model_path: str
    final_accuracy: float
    epoch_losses: list[float]
    epoch_accuracies: list[float]
    layer_names: list[str]


class AttackSettings(BaseModel):
    norm: str = "linf"
    eps: float = 8.0 / 255.0
    iterations: int = 100
    loss: str = "ce"
    num_targets: int | None = None
    seed: int = 0


class AttackRequest(BaseModel):
    model: str
    dataset: str
    out: str
    attack: AttackSettings = Field(default_factory=AttackSettings)
    split_seed: int | None = None
    n_val: int | None = None
    n_test: int = 0


class AttackResponse(BaseModel):
    batch_dir: str
    n_pairs: int
    n_success: int
    clean_accuracy: float
    robust_accuracy: float


class CalibrateRequest(BaseModel):
    model: str
    dataset: str
    attack: AttackSettings = Field(default_factory=AttackSettings)
    target_robust_accuracy: float = 0.05
    split_seed: int | None = None
    n_val: int | None = None
    n_test: int = 0


class CalibrateResponse(BaseModel):
    epsilon: float
    robust_accuracy: float


class TsneSettings(BaseModel):
    perplexity: float = 50.0
    iterations: int = 1500
    theta: float = 0.5
    learning_rate: float = 200.0
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: int = 250
    seed: int = 0


class EmbedRequest(BaseModel):
    model: str
    batch_dir: str
    layer: str
    out: str
    tsne: TsneSettings = Field(default_factory=TsneSettings)


class EmbedResponse(BaseModel):
    map_path: str
    layer: str
    n_points: int
    kl_final: float


class MetricRequest(BaseModel):
    map: str
    layer: str = ""
    out: str | None = None
    seed: int = 0
    norm: str = ""
    eps: float = 0.0
    loss: str = ""


class MetricResponse(BaseModel):
    metric_value: float
    n_pairs: int
    report_path: str | None


class RunRequest(BaseModel):
    dataset: str
    model: str
    out: str
    seeds: list[int] = Field(default_factory=lambda: list(range(10)))
    n_val: int = 120
    n_test: int = 120
    attack: AttackSettings = Field(default_factory=AttackSettings)
    tsne: TsneSettings = Field(default_factory=TsneSettings)
    layers: list[str] | str = "all"


class LayerAggregate(BaseModel):
    layer: str
    mean_metric: float
    std_metric: float
    n_seeds: int


class RunResponse(BaseModel):
    manifest_path: str
    metrics_csv: str
    summary_json: str
    layers: list[LayerAggregate]
    per_seed_accuracy: dict[str, dict[str, float]]


class RenderRequest(BaseModel):
    map: str
    out: str
    show: str = "all"
    color_by: str = "role"
    report: str | None = None  # report JSON with the persisted overlap flags


class RenderResponse(BaseModel):
    svg_path: str
    n_markers: int
