"""Trainable stochastic data sanitization with statistical privacy measures."""

from .dependence import KernelSpec, hsic_estimate, kernel_maxcorr, mmd2_estimate
from .numerics import RandomSource
from .sanitizer import SanitizerParams, sanitize_forward
from .trainer import TradeoffConfig, TrainData, train

__version__ = "0.1.0"

__all__ = [
    "KernelSpec",
    "RandomSource",
    "SanitizerParams",
    "TradeoffConfig",
    "TrainData",
    "hsic_estimate",
    "kernel_maxcorr",
    "mmd2_estimate",
    "sanitize_forward",
    "train",
    "__version__",
]
