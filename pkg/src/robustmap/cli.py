"""Thin command-line client for the analysis service.

Every subcommand builds a JSON request and posts it to the service. With no
--server the requests go through an in-process ASGI transport, so the CLI
works standalone; point --server at a running `uvicorn robustmap.service:app`
to drive a remote instance (paths then refer to the server's filesystem).
"""

from __future__ import annotations

import json
import sys

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from .service import create_app
    transport = httpx.ASGITransport(app=create_app())
    return httpx.Client(transport=transport, base_url="http://robustmap.local",
                        timeout=None)


def _post(ctx, path: str, payload: dict):
    with _client(ctx.obj["server"]) as client:
        resp = client.post(path, json=payload)
    try:
        body = resp.json()
    except ValueError:
        body = {"detail": resp.text}
    if resp.status_code != 200:
        click.echo(f"error ({resp.status_code}): {body.get('detail', body)}", err=True)
        sys.exit(1)
    click.echo(json.dumps(body, indent=2))
    return body


def _attack_payload(norm, eps, iterations, loss, num_targets, seed) -> dict:
    out = {"norm": norm, "eps": eps, "iterations": iterations, "loss": loss,
           "seed": seed}
    if num_targets is not None:
        out["num_targets"] = num_targets
    return out


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Service URL; default runs the service in-process.")
@click.pass_context
def main(ctx, server):
    """Layerwise adversarial-robustness analysis toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--out", required=True, help="Output dataset path (.npz).")
@click.option("--classes", default=10, show_default=True)
@click.option("--per-class", default=40, show_default=True)
@click.option("--image-size", default=8, show_default=True)
@click.option("--channels", default=1, show_default=True)
@click.option("--noise", default=0.06, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def dataset(ctx, out, classes, per_class, image_size, channels, noise, seed):
    """Generate the bundled synthetic multi-class dataset."""
    _post(ctx, "/datasets/synthetic", {
        "out": out, "num_classes": classes, "per_class": per_class,
        "image_size": image_size, "channels": channels, "noise": noise,
        "seed": seed,
    })


@main.command()
@click.option("--dataset", "dataset_path", required=True)
@click.option("--out", required=True, help="Output model path (.npz).")
@click.option("--epochs", default=10, show_default=True)
@click.option("--lr", default=0.2, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def train(ctx, dataset_path, out, epochs, lr, batch_size, seed):
    """Train the desk-scale CNN on a dataset."""
    _post(ctx, "/train", {
        "dataset": dataset_path, "out": out, "epochs": epochs,
        "learning_rate": lr, "batch_size": batch_size, "seed": seed,
    })


_norm_opt = click.option("--norm", type=click.Choice(["l2", "linf"]), default="linf",
                         show_default=True)
_eps_opt = click.option("--eps", default=8.0 / 255.0, show_default=True)
_loss_opt = click.option("--loss", type=click.Choice(["ce", "dlr", "dlr-t"]),
                         default="ce", show_default=True)


@main.command()
@click.option("--model", required=True)
@click.option("--dataset", "dataset_path", required=True)
@click.option("--out", required=True, help="Output batch directory.")
@_norm_opt
@_eps_opt
@click.option("--iterations", default=100, show_default=True)
@_loss_opt
@click.option("--num-targets", default=None, type=int)
@click.option("--seed", default=None, type=int,
              help="Stratified-split seed; omit to attack the whole dataset.")
@click.option("--n-val", default=None, type=int)
@click.option("--n-test", default=0, show_default=True)
@click.pass_context
def attack(ctx, model, dataset_path, out, norm, eps, iterations, loss,
           num_targets, seed, n_val, n_test):
    """Attack the correctly classified images and store the paired batch."""
    _post(ctx, "/attack", {
        "model": model, "dataset": dataset_path, "out": out,
        "attack": _attack_payload(norm, eps, iterations, loss, num_targets, 0),
        "split_seed": seed, "n_val": n_val, "n_test": n_test,
    })


@main.command()
@click.option("--model", required=True)
@click.option("--dataset", "dataset_path", required=True)
@_norm_opt
@click.option("--iterations", default=100, show_default=True)
@_loss_opt
@click.option("--target", default=0.05, show_default=True,
              help="Robust-accuracy target for the epsilon sweep.")
@click.option("--seed", default=None, type=int)
@click.option("--n-val", default=None, type=int)
@click.option("--n-test", default=0, show_default=True)
@click.pass_context
def calibrate(ctx, model, dataset_path, norm, iterations, loss, target, seed,
              n_val, n_test):
    """Sweep epsilon until robust accuracy drops to the target."""
    _post(ctx, "/calibrate", {
        "model": model, "dataset": dataset_path,
        "attack": _attack_payload(norm, 8.0 / 255.0, iterations, loss, None, 0),
        "target_robust_accuracy": target,
        "split_seed": seed, "n_val": n_val, "n_test": n_test,
    })


@main.command()
@click.option("--model", required=True)
@click.option("--batch", "batch_dir", required=True)
@click.option("--layer", required=True)
@click.option("--out", required=True, help="Output map path (.csv).")
@click.option("--perplexity", default=50.0, show_default=True)
@click.option("--tsne-iterations", default=1500, show_default=True)
@click.option("--theta", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def embed(ctx, model, batch_dir, layer, out, perplexity, tsne_iterations, theta, seed):
    """Joint t-SNE map of one layer's clean/perturbed representations."""
    _post(ctx, "/embed", {
        "model": model, "batch_dir": batch_dir, "layer": layer, "out": out,
        "tsne": {"perplexity": perplexity, "iterations": tsne_iterations,
                 "theta": theta, "seed": seed},
    })


@main.command()
@click.option("--map", "map_path", required=True)
@click.option("--layer", default="", help="Layer name recorded in the report.")
@click.option("--out", default=None, help="Optional report path (.json).")
@click.pass_context
def metric(ctx, map_path, layer, out):
    """Overlap metric of a stored embedding map."""
    _post(ctx, "/metric", {"map": map_path, "layer": layer, "out": out})


@main.command()
@click.option("--config", "config_path", default=None,
              help="JSON file with the full analysis configuration.")
@click.option("--dataset", "dataset_path", default=None)
@click.option("--model", default=None)
@click.option("--out", default=None, help="Output directory.")
@click.option("--seed", default=None, type=int, help="Override: run this seed only.")
@click.option("--norm", type=click.Choice(["l2", "linf"]), default=None)
@click.option("--eps", default=None, type=float)
@click.option("--loss", type=click.Choice(["ce", "dlr", "dlr-t"]), default=None)
@click.option("--layers", default=None,
              help="Comma-separated capture layers, or 'all'.")
@click.pass_context
def run(ctx, config_path, dataset_path, model, out, seed, norm, eps, loss, layers):
    """Full pipeline: split, attack, embed, and score every layer per seed."""
    payload = {}
    if config_path:
        payload = json.loads(open(config_path).read())
    payload.setdefault("attack", {})
    if dataset_path:
        payload["dataset"] = dataset_path
    if model:
        payload["model"] = model
    if out:
        payload["out"] = out
    if seed is not None:
        payload["seeds"] = [seed]
    if norm:
        payload["attack"]["norm"] = norm
    if eps is not None:
        payload["attack"]["eps"] = eps
    if loss:
        payload["attack"]["loss"] = loss
    if layers:
        payload["layers"] = "all" if layers == "all" else [
            name.strip() for name in layers.split(",") if name.strip()]
    missing = [k for k in ("dataset", "model", "out") if not payload.get(k)]
    if missing:
        click.echo(f"error: missing required field(s) {missing}; supply flags "
                   "or a --config file", err=True)
        sys.exit(2)
    _post(ctx, "/run", payload)


@main.command()
@click.option("--map", "map_path", required=True)
@click.option("--out", required=True, help="Output SVG path.")
@click.option("--show", type=click.Choice(["all", "non-overlapping-only"]),
              default="all", show_default=True)
@click.option("--color-by", type=click.Choice(["role", "label"]),
              default="role", show_default=True)
@click.option("--report", default=None,
              help="Report JSON with overlap flags (needed for the filter).")
@click.pass_context
def render(ctx, map_path, out, show, color_by, report):
    """Render a stored map to a static SVG scatter plot."""
    _post(ctx, "/render", {"map": map_path, "out": out, "show": show,
                           "color_by": color_by, "report": report})


if __name__ == "__main__":
    main()
