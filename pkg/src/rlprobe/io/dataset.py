"""Frame dataset container and its RLVD binary format.

Pixels are stored 8-bit quantized (round(v*255)); actions, rewards, q-vectors
and terminal flags ride along per frame. All multi-byte fields little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, InputError

MAGIC = b"RLVD"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


def quantize(frames):
    return np.rint(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize(pixels):
    return (pixels.astype(np.float32) / 255.0)


@dataclass
class FrameDataset:
    pixels: np.ndarray     # (N, k, H, W) uint8
    actions: np.ndarray    # (N,) uint32
    rewards: np.ndarray    # (N,) float32
    qvalues: np.ndarray    # (N, m) float32
    terminals: np.ndarray  # (N,) uint8

    def __post_init__(self):
        n = self.pixels.shape[0]
        if not (self.actions.shape == (n,) and self.rewards.shape == (n,)
                and self.terminals.shape == (n,) and self.qvalues.shape[0] == n):
            raise InputError("dataset field lengths disagree")

    def __len__(self):
        return self.pixels.shape[0]

    @property
    def obs_shape(self):
        return self.pixels.shape[1:]

    @property
    def n_actions(self):
        return self.qvalues.shape[1]

    def frames(self):
        """Dequantized float32 frames in [0, 1]."""
        return dequantize(self.pixels)

    def _record_dtype(self):
        k, h, w = self.obs_shape
        return np.dtype([("pixels", np.uint8, (k, h, w)),
                         ("action", "<u4"),
                         ("reward", "<f4"),
                         ("q", "<f4", (self.n_actions,)),
                         ("terminal", np.uint8)])

    def save(self, path):
        n = len(self)
        k, h, w = self.obs_shape
        rec = np.zeros(n, dtype=self._record_dtype())
        rec["pixels"] = self.pixels
        rec["action"] = self.actions
        rec["reward"] = self.rewards
        rec["q"] = self.qvalues
        rec["terminal"] = self.terminals
        with open(path, "wb") as f:
            f.write(_HEADER.pack(MAGIC, VERSION, n, h, w, k, self.n_actions))
            f.write(rec.tobytes())

    @staticmethod
    def load(path):
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) < _HEADER.size:
            raise FormatError(f"dataset truncated in header at byte {len(raw)}")
        magic, version, n, h, w, k, m = _HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r} at byte 0, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported dataset version {version} at byte 4")
        dtype = np.dtype([("pixels", np.uint8, (k, h, w)), ("action", "<u4"),
                          ("reward", "<f4"), ("q", "<f4", (m,)), ("terminal", np.uint8)])
        need = _HEADER.size + n * dtype.itemsize
        if len(raw) < need:
            raise FormatError(f"dataset truncated at byte {len(raw)}, expected {need}")
        rec = np.frombuffer(raw, dtype=dtype, count=n, offset=_HEADER.size)
        return FrameDataset(pixels=rec["pixels"].copy(),
                            actions=rec["action"].astype(np.uint32),
                            rewards=rec["reward"].astype(np.float32),
                            qvalues=rec["q"].astype(np.float32),
                            terminals=rec["terminal"].copy())
