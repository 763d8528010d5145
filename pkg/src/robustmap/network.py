"""Network assembly, forward passes with activation capture, and input gradients.

Networks are ordered layer stacks ending in a dense logits head (no softmax
anywhere in the model; losses apply their own normalization). Parameters are
fixed during capture and attack passes; only the trainer mutates them.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from . import losses
from .errors import ConfigurationError
from .layers import LayerSpec, make_layer

_FORMAT_VERSION = 1


def _auto_name(kind: str, used: set[str]) -> str:
    name = kind
    i = 0
    while name in used:
        i += 1
        name = f"{kind}_{i}"
    return name


class Network:
    """Ordered layer stack with a length-C logits output."""

    def __init__(self, input_shape: tuple, layers: list, layer_names: list[str]):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = layers
        self.layer_names = layer_names
        self.num_classes = layers[-1].output_shape[0]

    def _check_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.input_shape:
            raise ConfigurationError(
                f"batch shape {x.shape[1:]} does not match network input "
                f"{self.input_shape}"
            )
        return x

    def _activations(self, batch: np.ndarray) -> list[np.ndarray]:
        """Inputs seen by each layer plus the final output (len = layers + 1)."""
        acts = [batch]
        for layer in self.layers:
            acts.append(layer.forward(acts[-1]))
        return acts

    def forward(self, batch: np.ndarray) -> np.ndarray:
        return self._activations(self._check_batch(batch))[-1]

    def forward_capture(self, batch, capture_layers=()):
        """Run the batch and capture the post-activation output of named layers.

        Returns (logits, captures) where captures maps each requested layer
        name to a per-sample flattened float64 copy of its output.
        """
        batch = self._check_batch(batch)
        requested = set(capture_layers)
        unknown = requested - set(self.layer_names)
        if unknown:
            raise ConfigurationError(
                f"unknown capture layer(s) {sorted(unknown)}; "
                f"valid names: {self.layer_names}"
            )
        acts = self._activations(batch)
        captures = {}
        for i, name in enumerate(self.layer_names):
            if name in requested:
                out = acts[i + 1]
                captures[name] = out.reshape(out.shape[0], -1).copy()
        return acts[-1], captures

    def input_gradient_from_logits(self, acts: list[np.ndarray],
                                   dlogits: np.ndarray) -> np.ndarray:
        dy = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            dy, _ = self.layers[i].backward(acts[i], dy, with_params=False)
        return dy

    def loss_input_gradient(self, x, y, loss_kind: str = "ce", target=None):
        """Loss value and its gradient with respect to the input.

        Accepts a single sample (shape == input_shape) or a batch; parameters
        are held fixed. For a batch, the loss is per-sample and the gradient
        has the batch shape.
        """
        x = np.asarray(x, dtype=float)
        single = x.shape == self.input_shape
        batch = x[None] if single else self._check_batch(x)
        acts = self._activations(batch)
        loss, dlogits = losses.loss_grad(
            loss_kind,
            acts[-1],
            np.full(batch.shape[0], y) if single else y,
            None if target is None else (np.full(batch.shape[0], target) if single else target),
        )
        grad = self.input_gradient_from_logits(acts, np.atleast_2d(dlogits))
        if single:
            return float(np.asarray(loss).reshape(-1)[0]), grad[0]
        return loss, grad

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in zip(self.layer_names, self.layers):
            for pname, val in layer.params().items():
                out[f"{name}.{pname}"] = val
        return out

    def save(self, path) -> None:
        """Write spec + parameters to an .npz; parameter round-trip is bit-exact."""
        meta = {
            "format_version": _FORMAT_VERSION,
            "input_shape": list(self.input_shape),
            "layers": [
                {"kind": l.spec.kind, "name": name,
                 "filters": l.spec.filters, "kernel_size": l.spec.kernel_size,
                 "stride": l.spec.stride, "padding": l.spec.padding,
                 "pool_size": l.spec.pool_size, "units": l.spec.units}
                for name, l in zip(self.layer_names, self.layers)
            ],
        }
        arrays = {f"param:{k}": v for k, v in self.parameters().items()}
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)

    @classmethod
    def load(cls, path) -> "Network":
        with np.load(path) as archive:
            meta = json.loads(bytes(archive["meta"]).decode())
            if meta.get("format_version") != _FORMAT_VERSION:
                raise ConfigurationError(
                    f"unsupported model format version {meta.get('format_version')}"
                )
            specs = [LayerSpec(**d) for d in meta["layers"]]
            net = build_network(tuple(meta["input_shape"]), specs, seed=0)
            for name, layer in zip(net.layer_names, net.layers):
                for pname in layer.params():
                    layer.params()[pname][...] = archive[f"param:{name}.{pname}"]
        return net


def build_network(input_shape: tuple, specs: list[LayerSpec], seed: int = 0) -> Network:
    """Build a network with parameters drawn deterministically from the seed.

    Shapes are threaded through the spec list; any mismatch raises a
    ConfigurationError naming the offending layer. The final layer must be
    dense (the logits head).
    """
    if not specs:
        raise ConfigurationError("network spec is empty")
    if specs[-1].kind != "dense":
        raise ConfigurationError(
            f"final layer must be dense (logits head), got {specs[-1].kind!r}"
        )
    rng = np.random.default_rng(seed)
    used: set[str] = set()
    names, impls = [], []
    shape = tuple(int(d) for d in input_shape)
    for spec in specs:
        name = spec.name or _auto_name(spec.kind, used)
        if name in used:
            raise ConfigurationError(f"duplicate layer name {name!r}")
        used.add(name)
        try:
            layer = make_layer(dataclasses.replace(spec, name=name), shape, rng)
        except ConfigurationError as err:
            prev = names[-1] if names else "<input>"
            raise ConfigurationError(f"{err} (fed by {prev!r})") from None
        names.append(name)
        impls.append(layer)
        shape = layer.output_shape
    return Network(input_shape, impls, names)
