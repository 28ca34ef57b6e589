"""Layer kinds with explicit forward/backward passes.

Each ``forward`` returns ``(output, cache)`` and each ``backward`` takes the
upstream gradient and that cache and returns ``(input_grad, param_grads)``.
Layers hold no hidden state between calls, so a forward cache can be
replayed or discarded freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from ..linalg import SparsityPattern, csr_from_mask, spmm


class Layer:
    name: str

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, cache, need_input_grad=True):
        raise NotImplementedError

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, input_shape: tuple) -> tuple:
        return input_shape


class WeightLayer(Layer):
    """Shared mask handling for FC and conv layers. Biases are never masked."""

    weight: np.ndarray
    bias: np.ndarray
    mask: SparsityPattern | None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def set_mask(self, mask: SparsityPattern | None) -> None:
        if mask is not None and mask.shape != self.weight.shape:
            raise ShapeError(f"{self.name}: mask shape {mask.shape} != weight shape {self.weight.shape}")
        self.mask = mask
        self.enforce_mask()

    def enforce_mask(self) -> None:
        if self.mask is not None:
            self.weight[~self.mask.bits] = 0

    @property
    def sparsity(self) -> float:
        return 0.0 if self.mask is None else self.mask.sparsity

    @property
    def kept(self) -> int:
        return self.weight.size if self.mask is None else self.mask.nnz

    def _masked_grad(self, dw):
        if self.mask is not None:
            dw[~self.mask.bits] = 0
        return dw


@dataclass(eq=False)
class Dense(WeightLayer):
    """Fully connected layer, ``y = x @ W + b`` with ``W`` shaped (in, out).

    With ``use_csr`` the forward product and the input gradient go through
    the CSR kernel instead of a dense GEMM over the masked weights.
    """

    name: str
    weight: np.ndarray
    bias: np.ndarray
    mask: SparsityPattern | None = None
    use_csr: bool = False

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(f"{self.name}: inconsistent weight {self.weight.shape} / bias {self.bias.shape}")
        self.set_mask(self.mask)

    @property
    def in_features(self):
        return self.weight.shape[0]

    @property
    def out_features(self):
        return self.weight.shape[1]

    def output_shape(self, input_shape):
        if input_shape != (self.in_features,):
            raise ShapeError(f"{self.name}: expects input ({self.in_features},), got {input_shape}")
        return (self.out_features,)

    def _csr_t(self):
        # CSR of W^T (out x in): rows of the sparse operand index output units
        mask = self.mask if self.mask is not None else SparsityPattern.ones(self.weight.shape)
        return csr_from_mask(self.weight.T, SparsityPattern(mask.bits.T))

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.name}: expects (batch, {self.in_features}) input, got {x.shape}")
        if self.use_csr:
            y = spmm(self._csr_t(), np.ascontiguousarray(x.T)).T + self.bias
        else:
            y = x @ self.weight + self.bias
        return y, x

    def backward(self, dy, x, need_input_grad=True):
        dw = self._masked_grad(x.T @ dy)
        grads = {"weight": dw, "bias": dy.sum(axis=0)}
        if not need_input_grad:
            return None, grads
        if self.use_csr:
            mask = self.mask if self.mask is not None else SparsityPattern.ones(self.weight.shape)
            dx = spmm(csr_from_mask(self.weight, mask), np.ascontiguousarray(dy.T)).T
        else:
            dx = dy @ self.weight.T
        return dx, grads


@dataclass(eq=False)
class Conv2D(WeightLayer):
    """Valid-padding 2-D convolution; kernels shaped (out, in, kh, kw)."""

    name: str
    weight: np.ndarray
    bias: np.ndarray
    mask: SparsityPattern | None = None
    stride: int = 1

    def __post_init__(self):
        if self.weight.ndim != 4 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"{self.name}: inconsistent kernel {self.weight.shape} / bias {self.bias.shape}")
        self.set_mask(self.mask)

    def output_shape(self, input_shape):
        out_c, in_c, kh, kw = self.weight.shape
        if len(input_shape) != 3 or input_shape[0] != in_c:
            raise ShapeError(f"{self.name}: expects ({in_c}, H, W) input, got {input_shape}")
        _, h, w = input_shape
        if h < kh or w < kw:
            raise ShapeError(f"{self.name}: input {input_shape} smaller than kernel")
        return (out_c, (h - kh) // self.stride + 1, (w - kw) // self.stride + 1)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expects (batch, C, H, W) input, got {x.shape}")
        out_c, in_c, kh, kw = self.weight.shape
        n = x.shape[0]
        _, oh, ow = self.output_shape(x.shape[1:])
        s = self.stride
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, : (oh - 1) * s + 1 : s, : (ow - 1) * s + 1 : s]
        # (n, oh, ow, c, kh, kw) -> rows are output pixels, columns the receptive field
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, in_c * kh * kw)
        y = cols @ self.weight.reshape(out_c, -1).T + self.bias
        y = np.ascontiguousarray(y.reshape(n, oh, ow, out_c).transpose(0, 3, 1, 2))
        return y, (cols, x.shape)

    def backward(self, dy, cache, need_input_grad=True):
        cols, x_shape = cache
        out_c, in_c, kh, kw = self.weight.shape
        n, _, oh, ow = dy.shape
        dy2 = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, out_c)
        dw = self._masked_grad((dy2.T @ cols).reshape(self.weight.shape))
        grads = {"weight": dw, "bias": dy2.sum(axis=0)}
        if not need_input_grad:
            return None, grads
        dcols = (dy2 @ self.weight.reshape(out_c, -1)).reshape(n, oh, ow, in_c, kh, kw)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        s = self.stride
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx, grads


@dataclass(eq=False)
class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""

    name: str = "pool"
    window: int = 2

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeError(f"{self.name}: expects (C, H, W) input, got {input_shape}")
        c, h, w = input_shape
        return (c, h // self.window, w // self.window)

    def forward(self, x):
        k = self.window
        n, c, h, w = x.shape
        oh, ow = h // k, w // k
        xr = x[:, :, : oh * k, : ow * k].reshape(n, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, k * k)
        arg = xr.argmax(axis=-1)  # first maximum wins ties
        y = np.take_along_axis(xr, arg[..., None], axis=-1)[..., 0]
        return y, (arg, x.shape)

    def backward(self, dy, cache, need_input_grad=True):
        arg, x_shape = cache
        k = self.window
        n, c, h, w = x_shape
        oh, ow = h // k, w // k
        g = np.zeros((n, c, oh, ow, k * k), dtype=dy.dtype)
        np.put_along_axis(g, arg[..., None], dy[..., None], axis=-1)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, :, : oh * k, : ow * k] = g.reshape(n, c, oh, ow, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * k, ow * k)
        return dx, {}


@dataclass(eq=False)
class ReLU(Layer):
    name: str = "relu"

    def forward(self, x):
        keep = x > 0
        return np.where(keep, x, np.zeros((), dtype=x.dtype)), keep

    def backward(self, dy, keep, need_input_grad=True):
        return np.where(keep, dy, np.zeros((), dtype=dy.dtype)), {}


@dataclass(eq=False)
class Flatten(Layer):
    name: str = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, shape, need_input_grad=True):
        return dy.reshape(shape), {}


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} disagree on batch size")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    sumexp = exp.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(np.mean(np.log(sumexp[:, 0]) - shifted[rows, labels]))
    grad = exp / sumexp
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)
