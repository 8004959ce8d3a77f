"""Simulated camera motion over still images.

A motion is realised as a per-frame crop-rectangle schedule over the
source image; each rectangle is then resampled to the output size, which
plays back as a smooth zoom or pan. Applying the same schedule to a
source/edited image pair yields a video pair with matching motion.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .media import ClipFrames, Frame

DEFAULT_MIN_SCALE = 0.9


class CameraError(Exception):
    pass


class CameraMotion(str, Enum):
    ZOOM_IN = "zoom_in"
    ZOOM_OUT = "zoom_out"
    MOVE_LEFT = "move_left"
    MOVE_RIGHT = "move_right"
    MOVE_UP = "move_up"
    MOVE_DOWN = "move_down"


@dataclass(frozen=True)
class CropRect:
    """Axis-aligned crop window in source-pixel coordinates."""

    x: float
    y: float
    w: float
    h: float


def _lerp(a: float, b: float, t: float) -> float:
    # (1-t)*a + t*b lands exactly on a and b at the endpoints, which the
    # schedule contract requires; a + t*(b-a) does not always.
    return (1.0 - t) * a + t * b


def _centered(width: float, height: float, scale: float) -> CropRect:
    w = width * scale
    h = height * scale
    return CropRect((width - w) / 2.0, (height - h) / 2.0, w, h)


def crop_schedule(
    motion: CameraMotion,
    width: int,
    height: int,
    n_frames: int,
    min_scale: float = DEFAULT_MIN_SCALE,
) -> list[CropRect]:
    """Per-frame crop windows for one motion over a ``width x height`` image.

    Zooms interpolate the window scale between the full image and
    ``min_scale``; pans keep the window at ``min_scale`` and sweep its
    offset across the freed margin. A single-frame schedule is the
    motion's own first window.
    """
    if n_frames < 1:
        raise CameraError("schedule needs at least one frame")
    if not 0.0 < min_scale <= 1.0:
        raise CameraError(f"min_scale must be in (0, 1], got {min_scale}")

    small_w = width * min_scale
    small_h = height * min_scale
    max_x = width - small_w
    max_y = height - small_h
    mid_x = max_x / 2.0
    mid_y = max_y / 2.0

    rects = []
    for index in range(n_frames):
        t = index / (n_frames - 1) if n_frames > 1 else 0.0
        if motion is CameraMotion.ZOOM_IN:
            rect = _centered(width, height, _lerp(1.0, min_scale, t))
        elif motion is CameraMotion.ZOOM_OUT:
            rect = _centered(width, height, _lerp(min_scale, 1.0, t))
        elif motion is CameraMotion.MOVE_RIGHT:
            rect = CropRect(_lerp(0.0, max_x, t), mid_y, small_w, small_h)
        elif motion is CameraMotion.MOVE_LEFT:
            rect = CropRect(_lerp(max_x, 0.0, t), mid_y, small_w, small_h)
        elif motion is CameraMotion.MOVE_DOWN:
            rect = CropRect(mid_x, _lerp(0.0, max_y, t), small_w, small_h)
        elif motion is CameraMotion.MOVE_UP:
            rect = CropRect(mid_x, _lerp(max_y, 0.0, t), small_w, small_h)
        else:  # pragma: no cover - exhaustive over the enum
            raise CameraError(f"unhandled motion {motion}")
        rect = CropRect(
            min(max(rect.x, 0.0), width - rect.w),
            min(max(rect.y, 0.0), height - rect.h),
            rect.w,
            rect.h,
        )
        rects.append(rect)
    return rects


def crop_rect_to_aspect(rect: CropRect, aspect_w: int, aspect_h: int) -> CropRect:
    """Largest centered sub-window of ``rect`` with the given aspect ratio."""
    if aspect_w <= 0 or aspect_h <= 0:
        raise CameraError("aspect components must be positive")
    target = Fraction(aspect_w, aspect_h)
    current = rect.w / rect.h
    if current > float(target):
        w = rect.h * float(target)
        return CropRect(rect.x + (rect.w - w) / 2.0, rect.y, w, rect.h)
    h = rect.w / float(target)
    return CropRect(rect.x, rect.y + (rect.h - h) / 2.0, rect.w, h)


def bilinear_resample(pixels: np.ndarray, rect: CropRect, out_w: int, out_h: int) -> np.ndarray:
    """Sample ``rect`` from an ``(h, w, 3)`` uint8 image onto an output grid.

    Output corners map onto the rectangle's corner pixels: sample j of a
    row sits at ``rect.x + j * (rect.w - 1) / (out_w - 1)``. Values round
    half-up back to uint8.
    """
    src = np.asarray(pixels)
    if src.ndim != 3 or src.shape[2] != 3:
        raise CameraError(f"expected (h, w, 3) pixels, got {src.shape}")
    src_h, src_w = src.shape[:2]
    if out_w < 1 or out_h < 1:
        raise CameraError("output size must be positive")
    if rect.w < 1 or rect.h < 1:
        raise CameraError("crop window must be at least one pixel")
    if rect.x < 0 or rect.y < 0 or rect.x + rect.w > src_w or rect.y + rect.h > src_h:
        raise CameraError(
            f"crop window {rect} exceeds source bounds {src_w}x{src_h}"
        )

    xs = rect.x + (np.arange(out_w) * ((rect.w - 1) / (out_w - 1)) if out_w > 1
                   else np.zeros(1))
    ys = rect.y + (np.arange(out_h) * ((rect.h - 1) / (out_h - 1)) if out_h > 1
                   else np.zeros(1))
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, src_w - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    # Sample positions are computed in double precision; the blend then
    # accumulates in single precision, which is exact whenever the weights
    # are dyadic and inputs are 8-bit (the pinned cases: constants, whole
    # and half steps) and well below quantization error everywhere else.
    fx = (xs - x0).astype(np.float32)
    fy = (ys - y0).astype(np.float32)
    return _blend(np.ascontiguousarray(src), x0, x1, y0, y1, fx, fy)


def _blend_arrays(src, x0, x1, y0, y1, fx, fy):
    """Vectorized reference blend; compiled kernel below must match bit-exactly."""
    rows0 = src[y0]
    rows1 = src[y1]
    wx = fx[None, :, None]
    wy = fy[:, None, None]
    top = rows0[:, x0] * (1.0 - wx)
    top += rows0[:, x1] * wx
    bottom = rows1[:, x0] * (1.0 - wx)
    bottom += rows1[:, x1] * wx
    top *= 1.0 - wy
    bottom *= wy
    top += bottom
    out = top
    out += 0.5
    np.floor(out, out=out)
    np.clip(out, 0.0, 255.0, out=out)
    return out.astype(np.uint8)


def _blend_loops(src, x0, x1, y0, y1, fx, fy):
    """Scalar blend ordered exactly like _blend_arrays, for JIT compilation.

    Runs without the GIL once compiled, so pipeline worker threads resample
    concurrently instead of queueing on the interpreter lock.
    """
    out_h = fy.shape[0]
    out_w = fx.shape[0]
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    one = np.float32(1.0)
    half = np.float32(0.5)
    lo = np.float32(0.0)
    hi = np.float32(255.0)
    for i in range(out_h):
        wy = fy[i]
        gy = one - wy
        r0 = src[y0[i]]
        r1 = src[y1[i]]
        for j in range(out_w):
            wx = fx[j]
            gx = one - wx
            a = x0[j]
            b = x1[j]
            for c in range(3):
                top = np.float32(r0[a, c]) * gx + np.float32(r0[b, c]) * wx
                bottom = np.float32(r1[a, c]) * gx + np.float32(r1[b, c]) * wx
                value = np.float32(np.floor(top * gy + bottom * wy + half))
                if value < lo:
                    value = lo
                elif value > hi:
                    value = hi
                out[i, j, c] = np.uint8(value)
    return out


try:
    from numba import njit

    _blend = njit(nogil=True, cache=True)(_blend_loops)
except ImportError:  # pragma: no cover - exercised only without numba
    _blend = _blend_arrays


def render_motion(
    image: Frame,
    motion: CameraMotion,
    out_w: int,
    out_h: int,
    n_frames: int,
    min_scale: float = DEFAULT_MIN_SCALE,
    fps: float = 8.0,
) -> ClipFrames:
    """Render one still image into a clip following a camera motion."""
    rects = crop_schedule(motion, image.width, image.height, n_frames, min_scale)
    frames = []
    for rect in rects:
        fitted = crop_rect_to_aspect(rect, out_w, out_h)
        frames.append(Frame(bilinear_resample(image.pixels, fitted, out_w, out_h)))
    return ClipFrames(frames, fps=fps)


def synth_static_pair(
    source_image: Frame,
    edited_image: Frame,
    motion: CameraMotion,
    out_w: int,
    out_h: int,
    n_frames: int,
    min_scale: float = DEFAULT_MIN_SCALE,
    fps: float = 8.0,
) -> tuple[ClipFrames, ClipFrames]:
    """Apply one shared motion to a source/edited still-image pair.

    Both images must be the same size so the schedule (in source pixels)
    lines up; the result is a source clip and an edited clip whose camera
    paths match frame for frame.
    """
    if (source_image.width, source_image.height) != (edited_image.width, edited_image.height):
        raise CameraError(
            "source and edited stills must share one size, got "
            f"{source_image.width}x{source_image.height} vs "
            f"{edited_image.width}x{edited_image.height}"
        )
    source_clip = render_motion(source_image, motion, out_w, out_h, n_frames, min_scale, fps)
    edited_clip = render_motion(edited_image, motion, out_w, out_h, n_frames, min_scale, fps)
    return source_clip, edited_clip
