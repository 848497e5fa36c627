"""Minimal trainable layer zoo backing the feature extraction network.

Layers operate on NHWC arrays in a configurable dtype, cache what backward
needs when called with ``train=True``, and write parameter gradients into
preallocated buffers. Convolution weights are HWIO (kh, kw, C_in, C_out);
convolutions dispatch to the active compute backend.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DimensionError


class Layer:
    """Base layer: stateless unless it declares parameters."""

    name = "layer"

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, value, gradient-buffer) triples; empty for stateless layers."""
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        """Named non-trainable state that must persist in checkpoints."""
        return []

    def out_spatial(self, hw: tuple[int, int]) -> tuple[int, int]:
        return hw


class Conv2D(Layer):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: tuple[int, int],
        stride: int,
        pad: int,
        rng: np.random.Generator,
        dtype=np.float32,
        weight_scale: float | None = None,
        name: str = "conv",
    ):
        kh, kw = kernel
        self.c_in, self.c_out = c_in, c_out
        self.kh, self.kw = kh, kw
        self.stride, self.pad = stride, pad
        self.name = name
        fan_in = c_in * kh * kw
        scale = weight_scale if weight_scale is not None else np.sqrt(2.0 / fan_in)
        self.w = (rng.standard_normal((kh, kw, c_in, c_out)) * scale).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None
        self._first = False  # set on the entry layer; skips the unused input gradient

    def forward(self, x, train=False):
        if x.shape[3] != self.c_in:
            raise DimensionError(
                f"{self.name}: expected {self.c_in} input channels, got {x.shape[3]}"
            )
        self._x = x if train else None
        return kernels.conv2d_forward(x, self.w, self.b, self.stride, self.pad)

    def backward(self, dy):
        dx, dw, db = kernels.conv2d_backward(
            self._x, self.w, dy, self.stride, self.pad, need_dx=not self._first
        )
        self.dw[...] = dw
        self.db[...] = db
        return dx

    def parameters(self):
        return [(f"{self.name}.w", self.w, self.dw), (f"{self.name}.b", self.b, self.db)]

    def out_spatial(self, hw):
        h, w = hw
        ho = (h + 2 * self.pad - self.kh) // self.stride + 1
        wo = (w + 2 * self.pad - self.kw) // self.stride + 1
        return ho, wo


class ReLU(Layer):
    name = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask


class InstanceNorm(Layer):
    """Per-sample, per-channel normalization over the spatial extent."""

    name = "inorm"

    def __init__(self, eps: float = 1e-5):
        self.eps = eps
        self._y = None
        self._inv_std = None

    def forward(self, x, train=False):
        mean = x.mean(axis=(1, 2), keepdims=True)
        var = x.var(axis=(1, 2), keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        y = ((x - mean) * inv_std).astype(x.dtype, copy=False)
        if train:
            self._y = y
            self._inv_std = inv_std
        return y

    def backward(self, dy):
        y = self._y
        m_dy = dy.mean(axis=(1, 2), keepdims=True)
        m_dyy = (dy * y).mean(axis=(1, 2), keepdims=True)
        return ((dy - m_dy - y * m_dyy) * self._inv_std).astype(dy.dtype, copy=False)


class GlobalAvgPool(Layer):
    """(N, H, W, C) -> (N, C) mean over the residual spatial extent."""

    name = "gap"

    def __init__(self):
        self._hw = None

    def forward(self, x, train=False):
        self._hw = x.shape[1:3]
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        h, w = self._hw
        n, c = dy.shape
        out = np.broadcast_to(dy[:, None, None, :], (n, h, w, c))
        return (out / (h * w)).astype(dy.dtype, copy=False)

    def out_spatial(self, hw):
        return (1, 1)


class OutputCalibration(Layer):
    """Fixed per-channel affine y = x * gain + offset on (N, C) vectors.

    Not trainable: it only sets the units of the regression outputs so the
    trainable weights upstream can live at order-1 scale. Gain and offset
    persist in checkpoints as buffers.
    """

    name = "calib"

    def __init__(self, gain: np.ndarray, offset: np.ndarray, dtype=np.float32):
        self.gain = np.asarray(gain, dtype=dtype)
        self.offset = np.asarray(offset, dtype=dtype)

    def forward(self, x, train=False):
        return x * self.gain + self.offset

    def backward(self, dy):
        return dy * self.gain

    def buffers(self):
        return [(f"{self.name}.gain", self.gain), (f"{self.name}.offset", self.offset)]


class Network:
    """Plain layer sequence with explicit forward/backward."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for layer in self.layers:
            out.extend(layer.buffers())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: value for name, value, _ in self.parameters()}
        state.update({name: value for name, value in self.buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        entries = [(name, value) for name, value, _ in self.parameters()]
        entries += self.buffers()
        names = {name for name, _ in entries}
        missing = names - set(state)
        extra = set(state) - names
        if missing or extra:
            raise DimensionError(
                f"state does not match network (missing={sorted(missing)}, "
                f"unexpected={sorted(extra)})"
            )
        for name, value in entries:
            src = np.asarray(state[name])
            if src.shape != value.shape:
                raise DimensionError(
                    f"tensor {name}: shape {src.shape} != expected {value.shape}"
                )
            value[...] = src.astype(value.dtype, copy=False)
