"""Training engine for neural networks whose connectivity is an explicit binary mask."""

__version__ = "0.1.0"
