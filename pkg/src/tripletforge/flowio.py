"""Reader/writer for the little-endian ``.flo`` optical-flow format.

A file is: float32 magic ``202021.25``, int32 width, int32 height, then
``width*height`` interleaved ``(u, v)`` float32 pairs in row-major order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FLO_MAGIC = 202021.25
_HEADER = struct.Struct("<fii")


class FlowFormatError(Exception):
    pass


@dataclass
class FlowField:
    """Dense per-pixel displacement as an ``(h, w, 2)`` float32 array."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.vectors, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise FlowFormatError(f"expected (h, w, 2) vectors, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise FlowFormatError("flow vectors must be finite")
        self.vectors = arr

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def u(self) -> np.ndarray:
        return self.vectors[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[:, :, 1]


def write_flow(flow: FlowField, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FLO_MAGIC, flow.width, flow.height))
        fh.write(np.ascontiguousarray(flow.vectors, dtype="<f4").tobytes())


def read_flow(path: str) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FlowFormatError(f"file too short for header: {path}")
    magic, width, height = _HEADER.unpack_from(raw)
    if magic != FLO_MAGIC:
        raise FlowFormatError(f"bad magic {magic!r} in {path}")
    if width <= 0 or height <= 0:
        raise FlowFormatError(f"bad dimensions {width}x{height} in {path}")
    expected = _HEADER.size + width * height * 2 * 4
    if len(raw) != expected:
        raise FlowFormatError(
            f"size mismatch in {path}: got {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return FlowField(data.reshape(height, width, 2).copy())
