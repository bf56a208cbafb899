"""Persistence: RLVZ checkpoints, RLVD frame datasets, P5 image grids, config."""

from .checkpoint import (KIND_AGENT, KIND_GENERATOR, load_agent, load_generator,
                         read_checkpoint, save_model, write_checkpoint)
from .dataset import FrameDataset, dequantize, quantize
from .images import read_pgm, write_image_grid, write_pgm
from .runconfig import DESK, PAPER_OVERRIDES, RunConfig, write_report

__all__ = [
    "DESK", "FrameDataset", "KIND_AGENT", "KIND_GENERATOR", "PAPER_OVERRIDES",
    "RunConfig", "dequantize", "load_agent", "load_generator", "quantize",
    "read_checkpoint", "read_pgm", "save_model", "write_checkpoint",
    "write_image_grid", "write_pgm", "write_report",
]
