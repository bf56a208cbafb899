"""Minimal tensor library: tape-based autodiff, layers, Adam, gradient checks."""

from . import layers, tensor
from .gradcheck import GradCheckReport, finite_diff_check
from .layers import LayerKind, LayerSpec, Network, forward
from .optim import AdamState, adam_step
from .tensor import GradMode, Tape, Tensor, backward

__all__ = [
    "AdamState", "GradCheckReport", "GradMode", "LayerKind", "LayerSpec",
    "Network", "Tape", "Tensor", "adam_step", "backward", "finite_diff_check",
    "forward", "layers", "tensor",
]
