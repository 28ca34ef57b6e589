"""Minibatch SGD training with masked updates and periodic evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from ..data import Dataset, batches
from ..errors import NumericError
from ..linalg import make_rng
from .model import Model, backward, forward

log = logging.getLogger(__name__)

HIGH_LR = 0.05
EVAL_BATCH = 1000


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 100
    epochs: int | None = None
    steps: int | None = None
    seed: int = 0
    eval_every: int = 200

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.epochs is not None and self.steps is not None:
            raise ValueError("give either epochs or steps, not both")
        for name in ("epochs", "steps"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")

    def total_steps(self, n_examples: int) -> int:
        if self.steps is not None:
            return self.steps
        per_epoch = math.ceil(n_examples / self.batch_size)
        return per_epoch * (self.epochs if self.epochs is not None else 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsRecord:
    step: int
    train_loss: float
    test_accuracy: float
    overall_sparsity: float
    layer_sparsities: list[float]
    wall_time: float  # milliseconds since the start of the run

    def deterministic(self) -> tuple:
        """Every field except wall time."""
        return (self.step, self.train_loss, self.test_accuracy, self.overall_sparsity, tuple(self.layer_sparsities))


class SGD:
    """SGD with heavy-ball momentum: ``v = mu * v + g; w -= lr * v``."""

    def __init__(self, model: Model, learning_rate: float, momentum: float = 0.0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = [{k: np.zeros_like(p) for k, p in l.params().items()} for l in model.layers]

    def step(self, model: Model, grads) -> None:
        for idx, (layer, g) in enumerate(zip(model.layers, grads)):
            if not g:
                continue
            for key, grad in g.items():
                if not np.all(np.isfinite(grad)):
                    raise NumericError(f"non-finite gradient in layer {idx} ({layer.name}.{key})", layer=idx)
                param = getattr(layer, key)
                if self.momentum:
                    v = self.velocity[idx][key]
                    v *= self.momentum
                    v += grad
                    param -= self.learning_rate * v
                else:
                    param -= self.learning_rate * grad
            mask = getattr(layer, "mask", None)
            if mask is not None:
                layer.weight[~mask.bits] = 0
                self.velocity[idx]["weight"][~mask.bits] = 0


def sgd_step(model: Model, grads, cfg: TrainConfig, optimizer: SGD | None = None) -> Model:
    """Apply one update in place and return the model."""
    (optimizer or SGD(model, cfg.learning_rate, cfg.momentum)).step(model, grads)
    return model


def evaluate(model: Model, dataset: Dataset, batch_size: int = EVAL_BATCH) -> tuple[float, float]:
    """Accuracy and mean cross-entropy over ``dataset``."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        x = dataset.images[start : start + batch_size]
        y = dataset.labels[start : start + batch_size]
        logits, _ = forward(model, x)
        correct += int(np.count_nonzero(logits.argmax(axis=1) == y))
        shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        loss_sum += float(np.sum(lse - shifted[np.arange(len(y)), y]))
    return correct / n, loss_sum / n


Hook = Callable[[int, Model, SGD], None]


@dataclass
class TrainResult:
    model: Model
    metrics: list[MetricsRecord] = field(default_factory=list)
    steps: int = 0


def train(
    model: Model,
    dataset: Dataset,
    cfg: TrainConfig,
    hooks: Iterable[Hook] = (),
    *,
    test: Dataset | None = None,
    on_record: Callable[[MetricsRecord], None] | None = None,
) -> TrainResult:
    """Train ``model`` in place.

    Hooks run after every optimizer step with the completed step count; a
    metrics record is taken after the hooks every ``eval_every`` steps and
    once more at the final step.
    """
    hooks = list(hooks)
    test = dataset if test is None else test
    total = cfg.total_steps(len(dataset))
    result = TrainResult(model)
    if total == 0:
        return result
    opt = SGD(model, cfg.learning_rate, cfg.momentum)
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    t0 = time.monotonic()
    step = 0
    window: list[float] = []
    while step < total:
        for x, y in batches(dataset, cfg.batch_size, shuffle_rng):
            logits, caches = forward(model, x)
            loss, grads = backward(model, caches, logits, y)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at step {step + 1}", step=step + 1)
            try:
                opt.step(model, grads)
            except NumericError as exc:
                exc.step = step + 1
                raise
            step += 1
            window.append(loss)
            for hook in hooks:
                hook(step, model, opt)
            if step % cfg.eval_every == 0 or step == total:
                acc, _ = evaluate(model, test)
                rec = MetricsRecord(
                    step,
                    float(np.mean(window)),
                    acc,
                    model.overall_sparsity(),
                    model.layer_sparsities(),
                    (time.monotonic() - t0) * 1000.0,
                )
                window = []
                result.metrics.append(rec)
                log.info("step %d loss %.4f acc %.4f sparsity %.4f", step, rec.train_loss, acc, rec.overall_sparsity)
                if on_record is not None:
                    on_record(rec)
            if step == total:
                break
    result.steps = step
    return result
