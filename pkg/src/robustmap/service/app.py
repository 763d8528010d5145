"""FastAPI service wrapping the core pipeline.

Every endpoint is a thin adapter: requests reference filesystem paths on
the service host, heavy artifacts (models, batches, maps, reports) are
exchanged through those paths, and responses carry the summaries. Core
errors surface as HTTP 400s with the original message.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..attacks import AttackConfig, attack_dataset, load_batch, robust_accuracy, save_batch
from ..data import load_dataset, save_dataset, stratified_split, synthetic_dataset
from ..embedmap import EmbeddingMap, joint_embedding
from ..errors import RobustmapError
from ..metric import LayerRobustnessReport, report_from_map
from ..network import Network
from ..pipeline import AnalysisConfig, calibrate_epsilon, run_analysis, toy_cnn
from ..render import RenderOptions, render_map
from ..training import TrainConfig, evaluate_accuracy, train
from ..tsne import TsneConfig
from . import schemas


def _attack_config(s: schemas.AttackSettings) -> AttackConfig:
    return AttackConfig(norm=s.norm, epsilon=s.eps, iterations=s.iterations,
                        loss_kind=s.loss, num_targets=s.num_targets, seed=s.seed)


def _tsne_config(s: schemas.TsneSettings) -> TsneConfig:
    return TsneConfig(**s.model_dump())


def _validation_set(req):
    """Load the dataset and optionally take a seeded stratified validation split."""
    data = load_dataset(req.dataset)
    if req.split_seed is None:
        return data
    n_val = req.n_val if req.n_val is not None else len(data) - req.n_test
    val, _ = stratified_split(data, req.split_seed, (n_val, req.n_test))
    return val


def create_app() -> FastAPI:
    app = FastAPI(title="robustmap", version=__version__)

    @app.exception_handler(RobustmapError)
    async def _core_error(request: Request, exc: RobustmapError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/datasets/synthetic", response_model=schemas.DatasetResponse)
    def make_dataset(req: schemas.SyntheticDatasetRequest):
        data = synthetic_dataset(req.num_classes, req.per_class, req.image_size,
                                 req.channels, req.noise, req.seed)
        Path(req.out).parent.mkdir(parents=True, exist_ok=True)
        save_dataset(data, req.out)
        return schemas.DatasetResponse(
            path=req.out, n_samples=len(data),
            image_shape=list(data.images.shape[1:]),
            num_classes=int(data.labels.max()) + 1,
        )

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_model(req: schemas.TrainRequest):
        data = load_dataset(req.dataset)
        h, w, c = data.images.shape[1:]
        if h != w:
            raise RobustmapError("toy CNN expects square images")
        net = toy_cnn(num_classes=int(data.labels.max()) + 1, image_size=h,
                      channels=c, seed=req.seed)
        report = train(net, data, TrainConfig(
            epochs=req.epochs, learning_rate=req.learning_rate,
            batch_size=req.batch_size, seed=req.seed))
        Path(req.out).parent.mkdir(parents=True, exist_ok=True)
        net.save(req.out)
        return schemas.TrainResponse(
            model_path=req.out,
            final_accuracy=report.final_accuracy if report.final_accuracy is not None
            else evaluate_accuracy(net, data),
            epoch_losses=report.epoch_losses,
            epoch_accuracies=report.epoch_accuracies,
            layer_names=net.layer_names,
        )

    @app.post("/attack", response_model=schemas.AttackResponse)
    def attack(req: schemas.AttackRequest):
        net = Network.load(req.model)
        val = _validation_set(req)
        batch = attack_dataset(net, val, _attack_config(req.attack))
        save_batch(batch, req.out)
        return schemas.AttackResponse(
            batch_dir=req.out,
            n_pairs=len(batch),
            n_success=int(batch.success.sum()),
            clean_accuracy=evaluate_accuracy(net, val),
            robust_accuracy=robust_accuracy(net, val, batch),
        )

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate(req: schemas.CalibrateRequest):
        net = Network.load(req.model)
        val = _validation_set(req)
        eps, acc = calibrate_epsilon(net, val, _attack_config(req.attack),
                                     target_robust_accuracy=req.target_robust_accuracy)
        return schemas.CalibrateResponse(epsilon=eps, robust_accuracy=acc)

    @app.post("/embed", response_model=schemas.EmbedResponse)
    def embed(req: schemas.EmbedRequest):
        net = Network.load(req.model)
        batch = load_batch(req.batch_dir)
        if req.layer == "input":
            clean = batch.clean.reshape(len(batch), -1)
            pert = batch.perturbed.reshape(len(batch), -1)
        else:
            _, ccaps = net.forward_capture(batch.clean, [req.layer])
            _, pcaps = net.forward_capture(batch.perturbed, [req.layer])
            clean, pert = ccaps[req.layer], pcaps[req.layer]
        emap, kl_trace = joint_embedding(clean, pert, batch.labels,
                                         _tsne_config(req.tsne))
        Path(req.out).parent.mkdir(parents=True, exist_ok=True)
        emap.save(req.out)
        return schemas.EmbedResponse(map_path=req.out, layer=req.layer,
                                     n_points=len(emap), kl_final=kl_trace[-1])

    @app.post("/metric", response_model=schemas.MetricResponse)
    def metric(req: schemas.MetricRequest):
        emap = EmbeddingMap.load(req.map)
        report = report_from_map(emap, req.layer, req.seed, req.norm,
                                 req.eps, req.loss)
        report_path = None
        if req.out:
            Path(req.out).parent.mkdir(parents=True, exist_ok=True)
            report.save(req.out)
            report_path = req.out
        return schemas.MetricResponse(metric_value=report.metric_value,
                                      n_pairs=report.n_pairs,
                                      report_path=report_path)

    @app.post("/run", response_model=schemas.RunResponse)
    def run(req: schemas.RunRequest):
        layers = req.layers if req.layers == "all" else tuple(req.layers)
        config = AnalysisConfig(
            dataset=req.dataset, model=req.model, out_dir=req.out,
            seeds=tuple(req.seeds), n_val=req.n_val, n_test=req.n_test,
            attack=_attack_config(req.attack), tsne=_tsne_config(req.tsne),
            capture_layers=layers,
        )
        manifest = run_analysis(config)
        return schemas.RunResponse(
            manifest_path=str(Path(req.out) / "manifest.json"),
            metrics_csv=str(Path(req.out) / "metrics.csv"),
            summary_json=str(Path(req.out) / "summary.json"),
            layers=[schemas.LayerAggregate(**a)
                    for a in manifest.aggregates.get("layers", [])],
            per_seed_accuracy={
                s: {"clean": e["clean_accuracy"], "robust": e["robust_accuracy"]}
                for s, e in manifest.per_seed.items()
            },
        )

    @app.post("/render", response_model=schemas.RenderResponse)
    def render(req: schemas.RenderRequest):
        emap = EmbeddingMap.load(req.map)
        overlap = None
        if req.report:
            overlap = LayerRobustnessReport.load(req.report).per_pair_overlap
        options = RenderOptions(show=req.show, color_by=req.color_by,
                                per_pair_overlap=overlap)
        svg = render_map(emap, options)
        Path(req.out).parent.mkdir(parents=True, exist_ok=True)
        Path(req.out).write_text(svg)
        markers_group = svg.split('<g class="markers">')[1].split("</g>")[0]
        return schemas.RenderResponse(svg_path=req.out,
                                      n_markers=markers_group.count("<circle"))

    return app


app = create_app()
