"""Layer specs and their forward/backward kernels.

Everything runs in float64 on channels-last batches: image tensors are
(N, H, W, C), flat feature tensors are (N, F). Backward passes return the
gradient with respect to the layer input and, when asked, gradients with
respect to the parameters; parameters themselves are never touched here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

LAYER_KINDS = ("conv2d", "dense", "relu", "maxpool2d", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    Only the fields relevant to ``kind`` are read: conv2d uses filters,
    kernel_size, stride and padding; dense uses units; maxpool2d uses
    pool_size. ``name`` defaults to Keras-style auto-numbering at build
    time (conv2d, conv2d_1, ...).
    """

    kind: str
    name: str | None = None
    filters: int = 0
    kernel_size: int = 3
    stride: int = 1
    padding: str = "same"
    pool_size: int = 2
    units: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(
                f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}"
            )


def conv2d(filters: int, kernel_size: int = 3, stride: int = 1,
           padding: str = "same", name: str | None = None) -> LayerSpec:
    return LayerSpec("conv2d", name=name, filters=filters,
                     kernel_size=kernel_size, stride=stride, padding=padding)


def dense(units: int, name: str | None = None) -> LayerSpec:
    return LayerSpec("dense", name=name, units=units)


def relu(name: str | None = None) -> LayerSpec:
    return LayerSpec("relu", name=name)


def maxpool2d(pool_size: int = 2, name: str | None = None) -> LayerSpec:
    return LayerSpec("maxpool2d", name=name, pool_size=pool_size)


def flatten(name: str | None = None) -> LayerSpec:
    return LayerSpec("flatten", name=name)


class Conv2D:
    """2D convolution, channels last. Weights are (k, k, in_c, filters)."""

    def __init__(self, spec: LayerSpec, input_shape: tuple, rng: np.random.Generator):
        if len(input_shape) != 3:
            raise ConfigurationError(
                f"conv2d layer {spec.name!r} expects (H, W, C) input, got {input_shape}"
            )
        if spec.filters < 1 or spec.kernel_size < 1 or spec.stride < 1:
            raise ConfigurationError(
                f"conv2d layer {spec.name!r} needs positive filters/kernel_size/stride"
            )
        if spec.padding not in ("same", "valid"):
            raise ConfigurationError(
                f"conv2d layer {spec.name!r}: padding must be 'same' or 'valid'"
            )
        if spec.padding == "same" and spec.stride != 1:
            raise ConfigurationError(
                f"conv2d layer {spec.name!r}: 'same' padding requires stride 1"
            )
        h, w, in_c = input_shape
        k, s = spec.kernel_size, spec.stride
        if spec.padding == "same":
            self.pad = ((k - 1) // 2, k - 1 - (k - 1) // 2)
            out_h, out_w = h, w
        else:
            self.pad = (0, 0)
            if h < k or w < k:
                raise ConfigurationError(
                    f"conv2d layer {spec.name!r}: kernel {k} larger than input {input_shape}"
                )
            out_h = (h - k) // s + 1
            out_w = (w - k) // s + 1
        self.spec = spec
        self.input_shape = input_shape
        self.output_shape = (out_h, out_w, spec.filters)
        fan_in = k * k * in_c
        bound = 1.0 / np.sqrt(fan_in)
        self.w = rng.uniform(-bound, bound, size=(k, k, in_c, spec.filters))
        self.b = np.zeros(spec.filters)

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def _padded(self, x):
        p0, p1 = self.pad
        if p0 == 0 and p1 == 0:
            return x
        return np.pad(x, ((0, 0), (p0, p1), (p0, p1), (0, 0)))

    def forward(self, x: np.ndarray) -> np.ndarray:
        xp = self._padded(x)
        k, s = self.spec.kernel_size, self.spec.stride
        oh, ow, f = self.output_shape
        y = np.zeros((x.shape[0], oh, ow, f))
        for a in range(k):
            for b in range(k):
                xs = xp[:, a:a + s * oh:s, b:b + s * ow:s, :]
                y += xs @ self.w[a, b]
        return y + self.b

    def backward(self, x: np.ndarray, dy: np.ndarray, with_params: bool = False):
        xp = self._padded(x)
        k, s = self.spec.kernel_size, self.spec.stride
        oh, ow, _ = self.output_shape
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(self.w) if with_params else None
        for a in range(k):
            for b in range(k):
                dxp[:, a:a + s * oh:s, b:b + s * ow:s, :] += dy @ self.w[a, b].T
                if with_params:
                    xs = xp[:, a:a + s * oh:s, b:b + s * ow:s, :]
                    dw[a, b] = np.tensordot(xs, dy, axes=([0, 1, 2], [0, 1, 2]))
        p0, p1 = self.pad
        dx = dxp[:, p0:dxp.shape[1] - p1, p0:dxp.shape[2] - p1, :]
        if not with_params:
            return dx, None
        return dx, {"w": dw, "b": dy.sum(axis=(0, 1, 2))}


class Dense:
    """Fully connected layer over flat features. Weights are (in, units)."""

    def __init__(self, spec: LayerSpec, input_shape: tuple, rng: np.random.Generator):
        if len(input_shape) != 1:
            raise ConfigurationError(
                f"dense layer {spec.name!r} expects flat input, got {input_shape}; "
                "insert a flatten layer first"
            )
        if spec.units < 1:
            raise ConfigurationError(f"dense layer {spec.name!r} needs positive units")
        self.spec = spec
        self.input_shape = input_shape
        self.output_shape = (spec.units,)
        bound = 1.0 / np.sqrt(input_shape[0])
        self.w = rng.uniform(-bound, bound, size=(input_shape[0], spec.units))
        self.b = np.zeros(spec.units)

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w + self.b

    def backward(self, x: np.ndarray, dy: np.ndarray, with_params: bool = False):
        dx = dy @ self.w.T
        if not with_params:
            return dx, None
        return dx, {"w": x.T @ dy, "b": dy.sum(axis=0)}


class ReLU:
    def __init__(self, spec: LayerSpec, input_shape: tuple, rng: np.random.Generator):
        self.spec = spec
        self.input_shape = input_shape
        self.output_shape = input_shape

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def backward(self, x: np.ndarray, dy: np.ndarray, with_params: bool = False):
        return dy * (x > 0.0), ({} if with_params else None)


class MaxPool2D:
    """Non-overlapping max pooling; stride equals pool size.

    Input height/width must be divisible by the pool size. Ties within a
    window route the gradient to the first maximal position, so backward
    is deterministic even for constant activations.
    """

    def __init__(self, spec: LayerSpec, input_shape: tuple, rng: np.random.Generator):
        if len(input_shape) != 3:
            raise ConfigurationError(
                f"maxpool2d layer {spec.name!r} expects (H, W, C) input, got {input_shape}"
            )
        p = spec.pool_size
        h, w, c = input_shape
        if p < 1 or h % p or w % p:
            raise ConfigurationError(
                f"maxpool2d layer {spec.name!r}: input {input_shape} not divisible "
                f"by pool size {p}"
            )
        self.spec = spec
        self.input_shape = input_shape
        self.output_shape = (h // p, w // p, c)

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def _windows(self, x):
        n = x.shape[0]
        oh, ow, c = self.output_shape
        p = self.spec.pool_size
        xr = x.reshape(n, oh, p, ow, p, c)
        return xr.transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, c, p * p)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._windows(x).max(axis=-1)

    def backward(self, x: np.ndarray, dy: np.ndarray, with_params: bool = False):
        n = x.shape[0]
        oh, ow, c = self.output_shape
        p = self.spec.pool_size
        win = self._windows(x)
        idx = win.argmax(axis=-1)
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        dx = dwin.reshape(n, oh, ow, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        return dx.reshape(x.shape), ({} if with_params else None)


class Flatten:
    def __init__(self, spec: LayerSpec, input_shape: tuple, rng: np.random.Generator):
        self.spec = spec
        self.input_shape = input_shape
        self.output_shape = (int(np.prod(input_shape)),)

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(x.shape[0], -1)

    def backward(self, x: np.ndarray, dy: np.ndarray, with_params: bool = False):
        return dy.reshape(x.shape), ({} if with_params else None)


_IMPLS = {
    "conv2d": Conv2D,
    "dense": Dense,
    "relu": ReLU,
    "maxpool2d": MaxPool2D,
    "flatten": Flatten,
}


def make_layer(spec: LayerSpec, input_shape: tuple, rng: np.random.Generator):
    return _IMPLS[spec.kind](spec, input_shape, rng)
