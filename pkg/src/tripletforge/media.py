"""Frame-sequence storage: numbered PNGs plus a small JSON sidecar."""
from __future__ import annotations

import io
import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image

SIDECAR_NAME = "clip.json"
FRAME_PATTERN = "frame_%05d.png"

# Low compression: these are working artifacts, not an archive format, and
# frame writes dominate mock-pipeline wall time.
_PNG_COMPRESS_LEVEL = 1

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class MediaError(Exception):
    pass


@dataclass
class Frame:
    """A single RGB image as an ``(h, w, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise MediaError(f"expected (h, w, 3) uint8 pixels, got {arr.shape} {arr.dtype}")
        self.pixels = arr

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class ClipFrames:
    """An in-memory clip: a non-empty list of same-sized frames."""

    frames: list[Frame]
    fps: float = 8.0

    def __post_init__(self) -> None:
        if not self.frames:
            raise MediaError("clip must have at least one frame")
        first = self.frames[0]
        for frame in self.frames[1:]:
            if (frame.width, frame.height) != (first.width, first.height):
                raise MediaError("all frames in a clip must share one size")

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def __len__(self) -> int:
        return len(self.frames)


def encode_frame_png(pixels: np.ndarray) -> bytes:
    """Serialize an RGB uint8 array as a PNG with unfiltered scanlines.

    The byte output depends only on the pixels (no encoder heuristics),
    and zlib compresses outside the GIL, so threaded waves overlap their
    encodes instead of serializing behind an image library.
    """
    arr = np.ascontiguousarray(pixels)
    height, width = arr.shape[:2]
    scanlines = np.empty((height, 1 + width * 3), dtype=np.uint8)
    scanlines[:, 0] = 0  # filter type None on every row
    scanlines[:, 1:] = arr.reshape(height, width * 3)
    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    payload = zlib.compress(scanlines.tobytes(), _PNG_COMPRESS_LEVEL)
    return b"".join((
        _PNG_SIGNATURE,
        _png_chunk(b"IHDR", header),
        _png_chunk(b"IDAT", payload),
        _png_chunk(b"IEND", b""),
    ))


def _png_chunk(tag: bytes, body: bytes) -> bytes:
    crc = zlib.crc32(body, zlib.crc32(tag))
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", crc)


def decode_frame_png(data: bytes) -> np.ndarray:
    """Deserialize image bytes into an RGB uint8 array.

    Files produced by encode_frame_png decode on a direct path; anything
    else (filtered rows, palette, grayscale, other formats) round-trips
    through Pillow.
    """
    pixels = _decode_plain_png(data)
    if pixels is None:
        try:
            with Image.open(io.BytesIO(data)) as img:
                pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise MediaError(f"unreadable image data: {exc}") from exc
    return pixels


def _decode_plain_png(data: bytes) -> np.ndarray | None:
    if not data.startswith(_PNG_SIGNATURE):
        return None
    pos = len(_PNG_SIGNATURE)
    header = None
    idat = []
    while pos + 8 <= len(data):
        (length,) = struct.unpack_from(">I", data, pos)
        tag = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        if len(body) != length:
            return None
        if tag == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif tag == b"IDAT":
            idat.append(body)
        elif tag == b"IEND":
            break
        pos += length + 12
    if header is None or not idat:
        return None
    width, height, depth, color, _, _, interlace = header
    if (depth, color, interlace) != (8, 2, 0):
        return None
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error:
        return None
    stride = 1 + width * 3
    if len(raw) != height * stride:
        return None
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(height, stride)
    if rows[:, 0].any():  # filtered rows: let Pillow reconstruct them
        return None
    return np.ascontiguousarray(rows[:, 1:].reshape(height, width, 3))


def write_clip(clip: ClipFrames, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    # Frames that share a pixel buffer (static repeats) or equal their
    # predecessor encode once; PNG encoding dominates write cost.
    prev_frame = None
    prev_bytes = None
    for index, frame in enumerate(clip.frames):
        same = prev_frame is not None and (
            frame.pixels is prev_frame.pixels
            or np.array_equal(frame.pixels, prev_frame.pixels)
        )
        if not same:
            prev_bytes = encode_frame_png(frame.pixels)
            prev_frame = frame
        with open(os.path.join(directory, FRAME_PATTERN % index), "wb") as fh:
            fh.write(prev_bytes)
    sidecar = {
        "width": clip.width,
        "height": clip.height,
        "n_frames": len(clip),
        "fps": clip.fps,
    }
    with open(os.path.join(directory, SIDECAR_NAME), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True)
        fh.write("\n")


def read_sidecar(directory: str) -> dict:
    path = os.path.join(directory, SIDECAR_NAME)
    if not os.path.exists(path):
        raise MediaError(f"missing clip sidecar: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def read_clip(directory: str) -> ClipFrames:
    meta = read_sidecar(directory)
    n_frames = int(meta["n_frames"])
    frames = []
    prev_bytes = None
    prev_pixels = None
    for index in range(n_frames):
        path = os.path.join(directory, FRAME_PATTERN % index)
        if not os.path.exists(path):
            raise MediaError(f"missing frame file: {path}")
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw != prev_bytes:
            # Repeated frame files (static clips) decode once and share
            # the resulting array; frames are treated as immutable.
            prev_pixels = decode_frame_png(raw)
            prev_bytes = raw
        frames.append(Frame(prev_pixels))
    clip = ClipFrames(frames, fps=float(meta.get("fps", 8.0)))
    if (clip.width, clip.height) != (int(meta["width"]), int(meta["height"])):
        raise MediaError(
            f"sidecar size {meta['width']}x{meta['height']} does not match "
            f"frames {clip.width}x{clip.height}"
        )
    return clip


def read_frame(directory: str, index: int) -> Frame:
    path = os.path.join(directory, FRAME_PATTERN % index)
    if not os.path.exists(path):
        raise MediaError(f"missing frame file: {path}")
    with open(path, "rb") as fh:
        return Frame(decode_frame_png(fh.read()))


def frame_path(directory: str, index: int) -> str:
    return os.path.join(directory, FRAME_PATTERN % index)


def keyframe_indices(n_frames: int) -> list[int]:
    """First, middle and last frame; fewer when the clip is that short."""
    if n_frames <= 0:
        raise MediaError("clip must have at least one frame")
    picks = {0, n_frames // 2, n_frames - 1}
    return sorted(picks)
