"""RLVZ model checkpoints: magic, version, kind tag, a canonical JSON
architecture descriptor, and a named little-endian float32 tensor table.
Round trips are byte-identical."""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"RLVZ"
VERSION = 1
KIND_AGENT = 0
KIND_GENERATOR = 1
_KIND_NAMES = {KIND_AGENT: "AGENT", KIND_GENERATOR: "GENERATOR"}


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_checkpoint(path, kind, architecture, arrays):
    """Write a checkpoint; ``arrays`` is a {name: float32 ndarray} mapping."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<IB", VERSION, kind)
    arch = _canonical_json(architecture)
    blob += struct.pack("<I", len(arch))
    blob += arch
    names = sorted(arrays)
    blob += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb))
        blob += nb
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    with open(path, "wb") as f:
        f.write(blob)


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.raw):
            raise FormatError(f"checkpoint truncated reading {what} at byte {self.off}")
        chunk = self.raw[self.off:self.off + n]
        self.off += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def read_checkpoint(path, expect_kind=None):
    """Read a checkpoint, returning (kind, architecture, {name: ndarray})."""
    with open(path, "rb") as f:
        raw = f.read()
    r = _Reader(raw)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at byte 4")
    kind = r.take(1, "kind tag")[0]
    if kind not in _KIND_NAMES:
        raise FormatError(f"unknown model kind tag {kind} at byte 8")
    if expect_kind is not None and kind != expect_kind:
        raise FormatError(
            f"model kind is {_KIND_NAMES[kind]}, expected {_KIND_NAMES[expect_kind]}")
    arch_len = r.u32("architecture length")
    try:
        arch = json.loads(r.take(arch_len, "architecture").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"malformed architecture descriptor: {e}") from None
    count = r.u32("tensor count")
    arrays = {}
    for _ in range(count):
        name_len = r.u32("tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, f"extents of {name}"))
        size = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(r.take(4 * size, f"values of {name}"), dtype="<f4")
        arrays[name] = data.reshape(shape).copy()
    if r.off != len(raw):
        raise FormatError(f"{len(raw) - r.off} trailing bytes at byte {r.off}")
    return kind, arch, arrays


def save_model(model, path):
    """Save a QNetwork or Generator, dispatching on the model's kind."""
    from ..agent import QNetwork
    from ..generator import Generator

    if isinstance(model, QNetwork):
        write_checkpoint(path, KIND_AGENT, model.architecture(), model.net.named_arrays())
    elif isinstance(model, Generator):
        write_checkpoint(path, KIND_GENERATOR, model.architecture(), model.named_arrays())
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")


def load_agent(path):
    from ..agent import QNetwork

    _, arch, arrays = read_checkpoint(path, expect_kind=KIND_AGENT)
    return QNetwork.from_architecture(arch, arrays)


def load_generator(path):
    from ..generator import Generator

    _, arch, arrays = read_checkpoint(path, expect_kind=KIND_GENERATOR)
    return Generator.from_architecture(arch, arrays)
