"""Unpaired image translation with neighborhood encoding and
frequency-distribution losses, built on a minimal numpy autodiff core."""

from . import checkpoint, convops, data, divergence, freqrep, lne, metrics, models, optim, tensor, training
from .tensor import Tensor, no_grad

__all__ = [
    "Tensor",
    "no_grad",
    "tensor",
    "convops",
    "optim",
    "checkpoint",
    "lne",
    "freqrep",
    "divergence",
    "models",
    "data",
    "metrics",
    "training",
]

__version__ = "0.1.0"
