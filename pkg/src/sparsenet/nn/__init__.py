from .layers import Conv2D, Dense, Flatten, Layer, MaxPool2D, ReLU, WeightLayer, softmax_cross_entropy
from .model import Model, backward, build_lenet5, build_lenet300, build_mlp, forward, rebuild
from .train import HIGH_LR, SGD, MetricsRecord, TrainConfig, TrainResult, evaluate, sgd_step, train
from .checkpoint import load_checkpoint, read_tensor, save_checkpoint, write_tensor

__all__ = [
    "Conv2D", "Dense", "Flatten", "Layer", "MaxPool2D", "ReLU", "WeightLayer", "softmax_cross_entropy",
    "Model", "backward", "build_lenet5", "build_lenet300", "build_mlp", "forward", "rebuild",
    "HIGH_LR", "SGD", "MetricsRecord", "TrainConfig", "TrainResult", "evaluate", "sgd_step", "train",
    "load_checkpoint", "read_tensor", "save_checkpoint", "write_tensor",
]
