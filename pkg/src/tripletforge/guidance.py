"""Dual-condition classifier-free guidance arithmetic and sweep planning.

The propagation model is conditioned on both the source video and the
edited first frame plus instruction. Guidance combines three denoiser
outputs: fully unconditional, video-only, and fully conditioned.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_SWEEP = (3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
DEFAULT_VIDEO_SCALE = 1.5
DEFAULT_DROPOUT_P = 0.05


class GuidanceError(Exception):
    pass


@dataclass
class NoiseTriple:
    """The three denoiser predictions entering the guidance combine."""

    uncond: np.ndarray
    video_only: np.ndarray
    full: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.uncond, dtype=np.float64)
        b = np.asarray(self.video_only, dtype=np.float64)
        c = np.asarray(self.full, dtype=np.float64)
        if not (a.shape == b.shape == c.shape):
            raise GuidanceError(
                f"prediction shapes differ: {a.shape}, {b.shape}, {c.shape}"
            )
        self.uncond, self.video_only, self.full = a, b, c


@dataclass(frozen=True)
class GuidanceScales:
    video: float
    text: float


def combine(noise: NoiseTriple, scales: GuidanceScales) -> np.ndarray:
    """Blend the three predictions under two guidance scales.

    Both guidance terms push away from the unconditional prediction: the
    video term by ``scales.video``, the full-condition term by
    ``scales.text``.
    """
    return (
        noise.uncond
        + scales.video * (noise.video_only - noise.uncond)
        + scales.text * (noise.full - noise.uncond)
    )


@dataclass
class SweepConfig:
    """Text-guidance values tried per source, at a fixed video scale."""

    text_scales: tuple[float, ...] = DEFAULT_SWEEP
    video_scale: float = DEFAULT_VIDEO_SCALE

    def __post_init__(self) -> None:
        if not self.text_scales:
            raise GuidanceError("sweep needs at least one text scale")
        if len(set(self.text_scales)) != len(self.text_scales):
            raise GuidanceError("sweep scales must be distinct")

    def __len__(self) -> int:
        return len(self.text_scales)


@dataclass(frozen=True)
class EditRequest:
    """One first-frame edit call: which frame, instruction, and scales."""

    record_id: str
    frame_path: str
    instruction: str
    scales: GuidanceScales
    choice_index: int


def sweep_requests(
    record_id: str,
    frame_path: str,
    instruction: str,
    sweep: SweepConfig,
) -> list[EditRequest]:
    """One edit request per sweep value, in sweep order."""
    return [
        EditRequest(
            record_id=record_id,
            frame_path=frame_path,
            instruction=instruction,
            scales=GuidanceScales(video=sweep.video_scale, text=text_scale),
            choice_index=index,
        )
        for index, text_scale in enumerate(sweep.text_scales)
    ]


def scale_for_choice(sweep: SweepConfig, choice_index: int) -> float:
    """Map a screening pick (candidate index) back to its text scale."""
    if not 0 <= choice_index < len(sweep.text_scales):
        raise GuidanceError(
            f"choice {choice_index} outside sweep of {len(sweep.text_scales)}"
        )
    return sweep.text_scales[choice_index]


# -- condition dropout for training ---------------------------------------


class ConditionDrop(Enum):
    KEEP_BOTH = "keep_both"
    DROP_BOTH = "drop_both"
    DROP_VIDEO = "drop_video"
    DROP_TEXT = "drop_text"


@dataclass
class DropoutConfig:
    """Training-time condition dropout.

    Default drops the video and text conditions jointly with probability
    ``p`` (giving the model its unconditional branch); ``independent``
    instead flips each condition on its own coin.
    """

    p: float = DEFAULT_DROPOUT_P
    independent: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise GuidanceError(f"dropout probability must be in [0, 1], got {self.p}")


def dropout_mask(config: DropoutConfig, rng: random.Random) -> ConditionDrop:
    if config.independent:
        drop_video = rng.random() < config.p
        drop_text = rng.random() < config.p
        if drop_video and drop_text:
            return ConditionDrop.DROP_BOTH
        if drop_video:
            return ConditionDrop.DROP_VIDEO
        if drop_text:
            return ConditionDrop.DROP_TEXT
        return ConditionDrop.KEEP_BOTH
    if rng.random() < config.p:
        return ConditionDrop.DROP_BOTH
    return ConditionDrop.KEEP_BOTH


def dropout_plan(config: DropoutConfig, n: int, seed: int) -> list[ConditionDrop]:
    """Deterministic dropout decisions for ``n`` training samples."""
    rng = random.Random(seed)
    return [dropout_mask(config, rng) for _ in range(n)]
