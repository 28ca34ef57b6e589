"""Model container, reference architectures and the forward/backward passes."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..linalg import DEFAULT_DTYPE, SparsityPattern, init_weights, make_rng
from .layers import Conv2D, Dense, Flatten, Layer, MaxPool2D, ReLU, WeightLayer, softmax_cross_entropy

MNIST_SHAPE = (1, 28, 28)
CIFAR_SHAPE = (3, 32, 32)
# classifier weights start this much smaller than their init scheme says, so
# initial logits are near zero and the starting loss sits at ln(10)
OUTPUT_GAIN = 0.1


@dataclass(eq=False)
class Model:
    layers: list[Layer]
    input_shape: tuple
    name: str = "model"
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"layer names must be unique: {names}")
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    @property
    def dtype(self):
        wl = self.weight_layers()
        return wl[0].weight.dtype if wl else np.dtype(DEFAULT_DTYPE)

    def weight_layers(self) -> list[WeightLayer]:
        return [l for l in self.layers if isinstance(l, WeightLayer)]

    def layer(self, name: str) -> Layer:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    @property
    def masks(self) -> dict[str, SparsityPattern | None]:
        return {l.name: l.mask for l in self.weight_layers()}

    def set_masks(self, masks: dict[str, SparsityPattern | None]) -> None:
        known = {l.name for l in self.weight_layers()}
        unknown = set(masks) - known
        if unknown:
            raise ShapeError(f"masks given for unknown layers {sorted(unknown)}; model has {sorted(known)}")
        for name, m in masks.items():
            self.layer(name).set_mask(m)

    def enforce_masks(self) -> None:
        for l in self.weight_layers():
            l.enforce_mask()

    def layer_sparsities(self) -> list[float]:
        return [l.sparsity for l in self.weight_layers()]

    def overall_sparsity(self) -> float:
        wl = self.weight_layers()
        total = sum(l.weight.size for l in wl)
        return 1.0 - sum(l.kept for l in wl) / total if total else 0.0

    def n_weights(self) -> int:
        return sum(l.weight.size for l in self.weight_layers())

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "Model":
        out = self.copy()
        for l in out.weight_layers():
            l.weight = l.weight.astype(dtype)
            l.bias = l.bias.astype(dtype)
        return out


def forward(model: Model, x: np.ndarray):
    """Run the network; returns logits and the per-layer caches."""
    x = np.asarray(x)
    if tuple(x.shape[1:]) != model.input_shape:
        if not (x.ndim == 2 and x.shape[1] == int(np.prod(model.input_shape))):
            raise ShapeError(f"input batch shape {x.shape[1:]} does not match model input {model.input_shape}")
        x = x.reshape((x.shape[0],) + model.input_shape)
    x = x.astype(model.dtype, copy=False)
    caches = []
    for layer in model.layers:
        x, cache = layer.forward(x)
        caches.append(cache)
    return x, caches


def backward(model: Model, caches, logits: np.ndarray, labels: np.ndarray):
    """Loss plus one gradient dict per layer (empty for parameter-free layers)."""
    if len(caches) != len(model.layers):
        raise ShapeError("cache does not come from this model's forward pass")
    loss, dy = softmax_cross_entropy(logits, labels)
    grads: list[dict] = [None] * len(model.layers)
    first_param = next((i for i, l in enumerate(model.layers) if l.params()), len(model.layers))
    for i in range(len(model.layers) - 1, -1, -1):
        dy, grads[i] = model.layers[i].backward(dy, caches[i], need_input_grad=i > first_param)
        if dy is None:
            grads[:i] = [{} for _ in range(i)]
            break
    return loss, grads


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _check_masks(masks, allowed):
    masks = dict(masks or {})
    unknown = set(masks) - set(allowed)
    if unknown:
        raise ShapeError(f"unknown mask layer(s) {sorted(unknown)}; expected a subset of {list(allowed)}")
    return masks


def _dense(name, n_in, n_out, rng, masks, init, dtype, gain=1.0):
    w = init_weights((n_in, n_out), rng, init, dtype)
    if gain != 1.0:
        w *= w.dtype.type(gain)
    return Dense(name, w, np.zeros(n_out, dtype=dtype), masks.get(name))


def _conv(name, c_out, c_in, k, rng, masks, init, dtype):
    w = init_weights((c_out, c_in, k, k), rng, init, dtype)
    return Conv2D(name, w, np.zeros(c_out, dtype=dtype), masks.get(name))


def build_mlp(sizes, masks=None, seed: int = 0, *, input_shape=None, init="he-normal", output_gain=OUTPUT_GAIN, dtype=DEFAULT_DTYPE, name="mlp") -> Model:
    """ReLU MLP with FC layers ``fc1..fcK``; the input is flattened first."""
    sizes = [int(s) for s in sizes]
    names = [f"fc{i + 1}" for i in range(len(sizes) - 1)]
    masks = _check_masks(masks, names)
    rng = make_rng(seed, "init")
    layers: list[Layer] = [Flatten()]
    for i, nm in enumerate(names):
        last = i == len(names) - 1
        layers.append(_dense(nm, sizes[i], sizes[i + 1], rng, masks, init, dtype, output_gain if last else 1.0))
        if not last:
            layers.append(ReLU(f"relu{i + 1}"))
    return Model(layers, input_shape or (sizes[0],), name, seed, {"sizes": sizes, "init": init, "output_gain": output_gain})


def build_lenet300(masks=None, seed: int = 0, *, hidden=(300, 100), input_shape=MNIST_SHAPE, init="he-normal", output_gain=OUTPUT_GAIN, dtype=DEFAULT_DTYPE) -> Model:
    """Lenet-300-100: 784 -> 300 -> 100 -> 10 with ReLU on the hidden layers.

    ``masks`` maps ``fc1``/``fc2``/``fc3`` to patterns shaped (in, out).
    """
    n_in = int(np.prod(input_shape))
    model = build_mlp([n_in, *hidden, 10], masks, seed, input_shape=input_shape, init=init, output_gain=output_gain, dtype=dtype, name="lenet300")
    model.config["hidden"] = [int(h) for h in hidden]
    return model


def build_lenet5(masks=None, seed: int = 0, *, input_shape=MNIST_SHAPE, widths=(20, 50, 500), init="glorot-uniform", output_gain=OUTPUT_GAIN, dtype=DEFAULT_DTYPE) -> Model:
    """conv(20@5x5) -> pool2 -> conv(50@5x5) -> pool2 -> fc(500) -> relu -> fc(10).

    There is no nonlinearity between the conv stages, so the default init is
    glorot-uniform; he-normal blows up the logits through the pooled stack.
    """
    c1, c2, hidden = (int(w) for w in widths)
    masks = _check_masks(masks, ("conv1", "conv2", "fc1", "fc2"))
    rng = make_rng(seed, "init")
    c_in, h, w = input_shape
    h2, w2 = ((h - 4) // 2 - 4) // 2, ((w - 4) // 2 - 4) // 2
    layers = [
        _conv("conv1", c1, c_in, 5, rng, masks, init, dtype),
        MaxPool2D("pool1", 2),
        _conv("conv2", c2, c1, 5, rng, masks, init, dtype),
        MaxPool2D("pool2", 2),
        Flatten(),
        _dense("fc1", c2 * h2 * w2, hidden, rng, masks, init, dtype),
        ReLU("relu1"),
        _dense("fc2", hidden, 10, rng, masks, init, dtype, output_gain),
    ]
    return Model(layers, input_shape, "lenet5", seed, {"widths": [c1, c2, hidden], "init": init, "output_gain": output_gain})


ARCHITECTURES = {"lenet300": build_lenet300, "lenet5": build_lenet5, "mlp": build_mlp}


def rebuild(name: str, config: dict, input_shape, seed: int, masks=None, dtype=DEFAULT_DTYPE) -> Model:
    """Recreate an architecture from the ``config`` echoed by a builder."""
    kw = {k: config[k] for k in ("init", "output_gain") if k in config}
    if name == "lenet300":
        return build_lenet300(masks, seed, hidden=config.get("hidden", (300, 100)), input_shape=input_shape, dtype=dtype, **kw)
    if name == "lenet5":
        return build_lenet5(masks, seed, input_shape=input_shape, widths=config.get("widths", (20, 50, 500)), dtype=dtype, **kw)
    if name == "mlp":
        return build_mlp(config["sizes"], masks, seed, input_shape=input_shape, dtype=dtype, **kw)
    raise ValueError(f"unknown architecture {name!r}")
