"""Binary P5 graymap output for observation grids."""

from __future__ import annotations

import numpy as np

from ..errors import FormatError, InputError

SEPARATOR = 2
SEPARATOR_VALUE = 128


def write_image_grid(states, columns, path, frame_index=0):
    """Tile the first frame of each state into a P5 graymap.

    Values in [0, 1] are rounded to 8 bits; tiles are separated by 2-pixel
    gutters (no outer border).
    """
    if not len(states):
        raise InputError("image grid requires at least one state")
    frames = [np.asarray(s)[frame_index] for s in states]
    h, w = frames[0].shape
    if any(f.shape != (h, w) for f in frames):
        raise InputError("all states must share one shape")
    if columns < 1:
        raise InputError("columns must be >= 1")
    rows = (len(frames) + columns - 1) // columns
    ch = rows * h + (rows - 1) * SEPARATOR
    cw = columns * w + (columns - 1) * SEPARATOR
    canvas = np.full((ch, cw), SEPARATOR_VALUE, dtype=np.uint8)
    for i, f in enumerate(frames):
        r, c = divmod(i, columns)
        top, left = r * (h + SEPARATOR), c * (w + SEPARATOR)
        canvas[top:top + h, left:left + w] = np.rint(np.clip(f, 0, 1) * 255).astype(np.uint8)
    write_pgm(canvas, path)


def write_pgm(pixels, path):
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def read_pgm(path):
    """Read back a binary P5 file (used by round-trip checks)."""
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"not a binary P5 file: {path}")
    w, h = (int(v) for v in parts[1].split())
    if parts[2] != b"255":
        raise FormatError(f"unsupported maxval {parts[2]!r}")
    data = np.frombuffer(parts[3], dtype=np.uint8, count=h * w)
    return data.reshape(h, w).copy()
