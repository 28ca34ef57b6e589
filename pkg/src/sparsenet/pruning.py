"""Magnitude pruning: gradual schedules, one-shot pruning and mask retraining."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .linalg import SparsityPattern, init_weights, make_rng
from .nn.model import Model
from .nn.train import SGD, TrainConfig, TrainResult, train

DEFAULT_INTERVAL = 200
DEFAULT_EXPONENT = 3.0


@dataclass(frozen=True)
class PruneSchedule:
    target_sparsity: float
    start_step: int
    end_step: int
    prune_interval: int = DEFAULT_INTERVAL
    exponent: float = DEFAULT_EXPONENT

    def __post_init__(self):
        if not 0.0 <= self.target_sparsity <= 1.0:
            raise ValueError(f"target sparsity must lie in [0, 1], got {self.target_sparsity}")
        if self.end_step <= self.start_step:
            raise ValueError("end_step must be greater than start_step")
        if self.start_step < 0:
            raise ValueError("start_step must be >= 0")
        if self.prune_interval < 1:
            raise ValueError("prune_interval must be >= 1")
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")

    def is_prune_step(self, t: int) -> bool:
        if t < self.start_step or t > self.end_step:
            return False
        return (t - self.start_step) % self.prune_interval == 0 or t == self.end_step


def schedule_sparsity(sched: PruneSchedule, t: int) -> float:
    """``s_f * (1 - (1 - progress) ** exponent)`` with progress clamped to [0, 1]."""
    if t < 0:
        raise ValueError("step must be >= 0")
    progress = min(max((t - sched.start_step) / (sched.end_step - sched.start_step), 0.0), 1.0)
    return sched.target_sparsity * (1.0 - (1.0 - progress) ** sched.exponent)


def zeros_for(target_s: float, total: int) -> int:
    """Number of pruned entries that realises ``target_s`` on ``total`` weights.

    Rounds up, after absorbing float noise so that e.g. 0.95 * 500 counts
    as exactly 475.
    """
    return min(total, math.ceil(round(target_s * total, 6)))


def magnitude_prune(weights: np.ndarray, current_mask: SparsityPattern | None, target_s: float) -> SparsityPattern:
    """Prune the smallest-magnitude surviving weights up to ``target_s``.

    Ties go to the lower flat index first. Already-pruned entries stay pruned.
    """
    weights = np.asarray(weights)
    keep = np.ones(weights.shape, dtype=np.bool_) if current_mask is None else current_mask.bits.copy()
    if keep.shape != weights.shape:
        raise ValueError(f"mask shape {keep.shape} does not match weights {weights.shape}")
    if not 0.0 <= target_s <= 1.0:
        raise ValueError(f"target sparsity must lie in [0, 1], got {target_s}")
    total = weights.size
    current_zeros = total - int(np.count_nonzero(keep))
    want = zeros_for(target_s, total)
    if want < current_zeros:
        raise ValueError(
            f"target sparsity {target_s} is below the current sparsity {current_zeros / total:.6f}; masks never grow"
        )
    extra = want - current_zeros
    if extra:
        flat_keep = keep.reshape(-1)
        alive = np.flatnonzero(flat_keep)
        mags = np.abs(weights.reshape(-1)[alive])
        # lexsort: primary key magnitude, secondary the flat index
        order = np.lexsort((alive, mags))
        flat_keep[alive[order[:extra]]] = False
    return SparsityPattern(keep)


def prunable_layers(model: Model, keep_dense=()) -> list:
    keep_dense = set(keep_dense)
    names = {l.name for l in model.weight_layers()}
    unknown = keep_dense - names
    if unknown:
        raise ValueError(f"keep_dense names unknown layers {sorted(unknown)}")
    return [l for l in model.weight_layers() if l.name not in keep_dense]


@dataclass
class PruneEvent:
    step: int
    target: float
    layer_sparsities: dict[str, float]
    overall_sparsity: float


@dataclass
class IterativePruner:
    """Train hook that moves every prunable layer onto the schedule."""

    schedule: PruneSchedule
    keep_dense: tuple = ()
    events: list[PruneEvent] = field(default_factory=list)

    def __call__(self, step: int, model: Model, optimizer: SGD | None = None) -> None:
        if not self.schedule.is_prune_step(step):
            return
        target = schedule_sparsity(self.schedule, step)
        for layer in prunable_layers(model, self.keep_dense):
            if zeros_for(target, layer.weight.size) > layer.weight.size - layer.kept:
                layer.set_mask(magnitude_prune(layer.weight, layer.mask, target))
            elif layer.mask is None:
                layer.set_mask(SparsityPattern.ones(layer.weight.shape))
        if optimizer is not None:
            for idx, layer in enumerate(model.layers):
                if getattr(layer, "mask", None) is not None:
                    optimizer.velocity[idx]["weight"][~layer.mask.bits] = 0
        self.events.append(
            PruneEvent(step, target, {l.name: l.sparsity for l in model.weight_layers()}, model.overall_sparsity())
        )


@dataclass
class PruneResult(TrainResult):
    events: list[PruneEvent] = field(default_factory=list)


def iterative_prune(
    model: Model,
    dataset: Dataset,
    train_cfg: TrainConfig,
    sched: PruneSchedule,
    *,
    test: Dataset | None = None,
    keep_dense=(),
    on_record=None,
) -> PruneResult:
    """Train with gradual magnitude pruning; masks are frozen after ``end_step``.

    Training runs for ``train_cfg``'s full length, so whatever follows
    ``sched.end_step`` is the fine-tuning period with fixed masks.
    """
    total = train_cfg.total_steps(len(dataset))
    if total < sched.end_step:
        raise ValueError(f"training stops at step {total}, before the schedule ends at {sched.end_step}")
    pruner = IterativePruner(sched, tuple(keep_dense))
    result = train(model, dataset, train_cfg, [pruner], test=test, on_record=on_record)
    return PruneResult(result.model, result.metrics, result.steps, pruner.events)


def one_time_prune(model: Model, s: float, keep_dense=()) -> Model:
    """Prune a copy of ``model`` to sparsity ``s`` in a single pass."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"sparsity must lie in [0, 1], got {s}")
    out = model.copy()
    for layer in prunable_layers(out, keep_dense):
        if zeros_for(s, layer.weight.size) > layer.weight.size - layer.kept:
            layer.set_mask(magnitude_prune(layer.weight, layer.mask, s))
    return out


def reinitialize_with_masks(model: Model, seed: int) -> Model:
    """Fresh weights on the same masks; biases reset to zero.

    Weights are drawn exactly as the builders would for ``seed``, so an
    all-ones mask reproduces a dense model built with that seed. Reusing the
    model's own seed is rejected, since that would restore the old init.
    """
    if model.seed is not None and seed == model.seed:
        raise ValueError(f"reinitialisation needs a seed different from the model's own ({seed})")
    out = model.copy()
    rng = make_rng(seed, "init")
    init = out.config.get("init", "he-normal")
    gain = out.config.get("output_gain", 1.0)
    wl = out.weight_layers()
    for i, layer in enumerate(wl):
        w = init_weights(layer.weight.shape, rng, init, layer.weight.dtype)
        if i == len(wl) - 1 and gain != 1.0:
            w *= w.dtype.type(gain)
        layer.weight = w
        layer.bias = np.zeros_like(layer.bias)
        layer.enforce_mask()
    out.seed = seed
    return out
