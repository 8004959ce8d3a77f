"""Clients for the neural services the pipeline delegates to, plus mocks.

Four service roles: image editor (first-frame edits), image-to-video
propagator, optical-flow estimator, and scalar metric scorers — together
with the chat judge (see ``vlm``). Real deployments speak HTTP (see
``httpwire``); the mocks here are deterministic functions of their input
content so full pipeline runs are reproducible byte-for-byte.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .flowio import FlowField
from .media import ClipFrames, Frame
from .vlm.gateway import TransportError


class BackendError(Exception):
    pass


# -- service protocols ----------------------------------------------------


class ImageEditBackend(Protocol):
    def edit_image(self, frame: Frame, instruction: str, guidance_scale: float) -> Frame:
        ...


class PropagateBackend(Protocol):
    def propagate(self, src_clip: ClipFrames, edited_first: Frame) -> ClipFrames:
        ...


class ImageToVideoBackend(Protocol):
    def image_to_video(self, image: Frame, n_frames: int) -> ClipFrames:
        ...


class FlowBackend(Protocol):
    def estimate_flow(self, frame_a: Frame, frame_b: Frame) -> FlowField:
        ...


class MetricBackend(Protocol):
    def score_metric(self, kind: str, payload: dict) -> float:
        ...


# -- call instrumentation -------------------------------------------------


class CallMeter:
    """Thread-safe call counter that also tracks peak concurrent calls."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0
        self._in_flight = 0
        self.max_in_flight = 0

    def __enter__(self) -> "CallMeter":
        with self._lock:
            self.calls += 1
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        return self

    def __exit__(self, *exc_info) -> None:
        with self._lock:
            self._in_flight -= 1


def _digest(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
        h.update(b"\x1f")
    return h.digest()


def _sample_bytes(pixels: np.ndarray, stride: int = 16) -> bytes:
    """Shape tag plus a strided pixel subsample; a cheap content key.

    Full-image hashing dominated mock-flow calls on dataset-sized frames;
    a fixed-stride sample still separates distinct clips in practice.
    """
    sample = pixels[::stride, ::stride]
    shape = "%dx%dx%d" % pixels.shape
    return shape.encode("ascii") + b"|" + sample.tobytes()


# -- deterministic mocks --------------------------------------------------


@dataclass
class MockImageEditor:
    """Shifts pixel channels by amounts keyed to (instruction, scale).

    Different guidance scales therefore yield visibly different, yet
    fully reproducible, candidates. ``strength=0`` turns it into the
    identity editor.
    """

    strength: int = 24
    meter: CallMeter = field(default_factory=CallMeter)

    def edit_image(self, frame: Frame, instruction: str, guidance_scale: float) -> Frame:
        with self.meter:
            if self.strength == 0:
                return Frame(frame.pixels.copy())
            key = _digest(instruction.encode("utf-8"), repr(float(guidance_scale)).encode())
            shifts = np.array([key[0], key[1], key[2]], dtype=np.uint8) % (self.strength + 1)
            # uint8 addition wraps mod 256, which is exactly the intended
            # channel-shift semantics without int16 temporaries.
            return Frame(frame.pixels + shifts[None, None, :])


@dataclass
class MockPropagator:
    """Broadcasts the first-frame edit delta onto every source frame.

    Keeps the contract that frame 0 of the output equals the supplied
    edited first frame exactly, and makes downstream numbers analytic.
    """

    meter: CallMeter = field(default_factory=CallMeter)

    def propagate(self, src_clip: ClipFrames, edited_first: Frame) -> ClipFrames:
        with self.meter:
            first = src_clip.frames[0]
            if (edited_first.width, edited_first.height) != (first.width, first.height):
                raise BackendError(
                    f"edited first frame {edited_first.width}x{edited_first.height} "
                    f"does not match clip {first.width}x{first.height}"
                )
            # uint8 subtraction/addition wrap mod 256, matching the
            # intended per-pixel delta broadcast without wider temporaries.
            delta = edited_first.pixels - first.pixels
            edited_start = edited_first.pixels.copy()
            frames = [Frame(edited_start)]
            for frame in src_clip.frames[1:]:
                if frame.pixels is first.pixels or np.array_equal(frame.pixels, first.pixels):
                    # Static source: reuse the first edited frame outright so
                    # downstream writers can deduplicate identical frames.
                    frames.append(Frame(edited_start))
                else:
                    frames.append(Frame(frame.pixels + delta))
            return ClipFrames(frames, fps=src_clip.fps)


@dataclass
class MockImageToVideo:
    """Static repeat: n copies of the input image."""

    meter: CallMeter = field(default_factory=CallMeter)

    def image_to_video(self, image: Frame, n_frames: int) -> ClipFrames:
        with self.meter:
            if n_frames < 1:
                raise BackendError("clip needs at least one frame")
            pixels = image.pixels.copy()
            # All frames share one buffer; writers deduplicate on identity.
            return ClipFrames([Frame(pixels) for _ in range(n_frames)])


@dataclass
class MockFlowEstimator:
    """Constant-translation flow fields.

    With ``translation`` set, every call returns that fixed (u, v) —
    handy for analytic tests. Without it, the translation is derived
    from the content of the two frames, so different clips get different
    (but reproducible) motion errors.
    """

    translation: Optional[tuple[float, float]] = None
    content_range: float = 2.0
    meter: CallMeter = field(default_factory=CallMeter)

    def estimate_flow(self, frame_a: Frame, frame_b: Frame) -> FlowField:
        with self.meter:
            if (frame_a.width, frame_a.height) != (frame_b.width, frame_b.height):
                raise BackendError("flow estimation needs equal frame sizes")
            if self.translation is not None:
                u, v = self.translation
            else:
                key = _digest(_sample_bytes(frame_a.pixels), _sample_bytes(frame_b.pixels))
                u = key[0] / 255.0 * self.content_range
                v = key[1] / 255.0 * self.content_range
            vectors = np.empty((frame_a.height, frame_a.width, 2), dtype=np.float32)
            vectors[:, :, 0] = u
            vectors[:, :, 1] = v
            return FlowField(vectors)


@dataclass
class MockMetricScorer:
    """Returns preconfigured values per metric kind."""

    values: dict[str, float] = field(default_factory=dict)
    meter: CallMeter = field(default_factory=CallMeter)

    def score_metric(self, kind: str, payload: dict) -> float:
        with self.meter:
            if kind not in self.values:
                raise BackendError(f"no scripted value for metric {kind!r}")
            return float(self.values[kind])


class DeterministicChat:
    """Judge mock whose answers are a pure function of request content.

    Image references are resolved and their file bytes hashed, so two
    runs over identical pixels agree even when the files live in
    different directories. Score distributions lean positive, mirroring
    how a capable editor fares under a lenient judge.
    """

    _SCORES = (3, 4, 4, 5, 3, 5, 2, 4)
    _INSTRUCTIONS = (
        "Change the main object to red.",
        "Replace the background with a beach.",
        "Add falling snow to the scene.",
        "Convert the scene to watercolor style.",
        "Make it nighttime.",
        "Change the shirt to a jacket.",
    )

    def __init__(self) -> None:
        self.meter = CallMeter()

    def complete(self, system_prompt: str, user_prompt: str, images: tuple[str, ...]) -> str:
        with self.meter:
            parts = [system_prompt.encode("utf-8"), user_prompt.encode("utf-8")]
            for ref in images:
                try:
                    with open(ref, "rb") as fh:
                        parts.append(fh.read())
                except OSError as exc:
                    raise TransportError(f"unreadable image reference {ref}: {exc}") from exc
            key = _digest(*parts)
            if "'best_image'" in user_prompt:
                return "{'best_image': %d}" % (key[3] % 6)
            if "'score'" in user_prompt:
                return "{'score': %d}" % self._SCORES[key[3] % len(self._SCORES)]
            if "{'frame_url'}" in user_prompt or "Key frame descriptions:" in user_prompt:
                return f"A scene with stable framing and detail code {key.hex()[:8]}."
            return self._INSTRUCTIONS[key[3] % len(self._INSTRUCTIONS)]


class ScriptedChat:
    """Judge mock replaying a fixed response list, one entry per call.

    Entries are either literal response strings or ``{"fail": reason}``
    markers that raise a transport error — which is how retry behavior
    gets exercised in tests. Runs out of script → error.
    """

    def __init__(self, entries: list) -> None:
        self.entries = list(entries)
        self._next = 0
        self.meter = CallMeter()
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str) -> "ScriptedChat":
        import json

        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, system_prompt: str, user_prompt: str, images: tuple[str, ...]) -> str:
        with self.meter:
            with self._lock:
                if self._next >= len(self.entries):
                    raise BackendError("scripted chat ran out of responses")
                entry = self.entries[self._next]
                self._next += 1
            if isinstance(entry, dict) and "fail" in entry:
                raise TransportError(str(entry["fail"]))
            return str(entry)


# -- bounded concurrency --------------------------------------------------


class Bounded:
    """Proxy that caps concurrent calls into a backend via a semaphore."""

    def __init__(self, inner, max_concurrency: int):
        if max_concurrency < 1:
            raise BackendError("max_concurrency must be >= 1")
        self._inner = inner
        self._gate = threading.Semaphore(max_concurrency)
        self.max_concurrency = max_concurrency

    def __getattr__(self, name):
        target = getattr(self._inner, name)
        if not callable(target):
            return target

        def guarded(*args, **kwargs):
            with self._gate:
                return target(*args, **kwargs)

        return guarded


# -- output validation ----------------------------------------------------
#
# Backend outputs re-enter the manifest, so they are re-checked here no
# matter which implementation produced them.


def checked_edit_image(backend: ImageEditBackend, frame: Frame, instruction: str,
                       guidance_scale: float) -> Frame:
    edited = backend.edit_image(frame, instruction, guidance_scale)
    if (edited.width, edited.height) != (frame.width, frame.height):
        raise BackendError(
            f"editor changed dimensions: {frame.width}x{frame.height} -> "
            f"{edited.width}x{edited.height}"
        )
    return edited


def checked_propagate(backend: PropagateBackend, src_clip: ClipFrames,
                      edited_first: Frame) -> ClipFrames:
    if (edited_first.width, edited_first.height) != (src_clip.width, src_clip.height):
        raise BackendError("edited first frame does not match clip resolution")
    clip = backend.propagate(src_clip, edited_first)
    if len(clip) != len(src_clip):
        raise BackendError(
            f"propagator changed frame count: {len(src_clip)} -> {len(clip)}"
        )
    if (clip.width, clip.height) != (src_clip.width, src_clip.height):
        raise BackendError("propagator changed resolution")
    if not np.array_equal(clip.frames[0].pixels, edited_first.pixels):
        raise BackendError("propagated clip must start at the edited first frame")
    return clip


def checked_image_to_video(backend: ImageToVideoBackend, image: Frame,
                           n_frames: int) -> ClipFrames:
    clip = backend.image_to_video(image, n_frames)
    if len(clip) != n_frames:
        raise BackendError(f"i2v returned {len(clip)} frames, wanted {n_frames}")
    if (clip.width, clip.height) != (image.width, image.height):
        raise BackendError("i2v changed resolution")
    return clip


def checked_estimate_flow(backend: FlowBackend, frame_a: Frame, frame_b: Frame) -> FlowField:
    if (frame_a.width, frame_a.height) != (frame_b.width, frame_b.height):
        raise BackendError("flow estimation needs equal frame sizes")
    flow = backend.estimate_flow(frame_a, frame_b)
    if (flow.width, flow.height) != (frame_a.width, frame_a.height):
        raise BackendError("flow field resolution does not match frames")
    return flow
