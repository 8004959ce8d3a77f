"""Synthetic fixtures: scored manifests and on-disk demo corpora.

Two producers live here. ``synthetic_records`` fabricates fully scored,
accepted triplet records whose per-source score statistics match the
frozen dataset profiles, for exercising statistics and curriculum code
without running the pipeline. ``make_demo_corpus`` writes a small corpus
directory (real videos, image pairs, static images) of procedurally
generated frames that the full pipeline can ingest with mock backends.

Score synthesis is deliberately low-variance: integer judge scores are
assigned by exact quota over the profile weights, and motion-error
values are taken at evenly spaced quantiles of the profile distribution
rather than drawn independently. Sample means therefore sit within
O(1/n) of the profile means for any seed, which keeps statistical
fixtures stable.
"""
from __future__ import annotations

import os
import random
from dataclasses import dataclass

import numpy as np

from .camera import CameraMotion
from .guidance import DEFAULT_SWEEP
from .manifest import Manifest
from .media import ClipFrames, Frame, encode_frame_png, write_clip
from .records import (
    DATASET_FRAME_COUNT,
    DATASET_HEIGHT,
    DATASET_WIDTH,
    ClipRef,
    ScoreCard,
    SourceKind,
    Stage,
    TripletRecord,
    Verdict,
    record_id,
)

# -- score profiles --------------------------------------------------------


@dataclass(frozen=True)
class SourceProfile:
    """Frozen score distribution for one source kind.

    ``gpt_weights`` gives the probability of each integer judge score.
    Motion error follows a power distribution on [0, epe_scale]:
    X = epe_scale * U^epe_exponent with U uniform, whose mean is
    epe_scale / (1 + epe_exponent). The exponent is derived from the
    target mean so the profile is specified entirely by two means.
    """

    kind: SourceKind
    share: int
    gpt_weights: tuple[tuple[int, float], ...]
    mean_epe: float
    epe_scale: float = 2.0

    @property
    def epe_exponent(self) -> float:
        return self.epe_scale / self.mean_epe - 1.0

    @property
    def mean_gpt(self) -> float:
        return sum(score * weight for score, weight in self.gpt_weights)


PROFILES: tuple[SourceProfile, ...] = (
    SourceProfile(SourceKind.REAL_VIDEO, share=450_790,
                  gpt_weights=((3, 0.53), (4, 0.47)), mean_epe=0.79),
    SourceProfile(SourceKind.IMAGE_PAIR, share=110_374,
                  gpt_weights=((3, 0.57), (4, 0.43)), mean_epe=1.22),
    SourceProfile(SourceKind.STATIC_IMAGE, share=458_429,
                  gpt_weights=((4, 0.93), (5, 0.07)), mean_epe=0.16),
)


def _largest_remainder(weights: list[float], total: int) -> list[int]:
    """Integer allocation of ``total`` proportional to ``weights``."""
    scale = sum(weights)
    quotas = [weight / scale * total for weight in weights]
    counts = [int(quota) for quota in quotas]
    remainders = sorted(range(len(quotas)),
                        key=lambda i: quotas[i] - counts[i], reverse=True)
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


def sample_scores(profile: SourceProfile, n: int,
                  rng: random.Random) -> list[tuple[int, float]]:
    """n (gpt_score, epe) pairs matching the profile means closely.

    Judge scores fill exact quotas; motion errors sit at midpoint
    quantiles of the power distribution. Both lists are shuffled
    independently before pairing, so the joint distribution is the
    product of the marginals.
    """
    if n <= 0:
        return []
    values = [score for score, _ in profile.gpt_weights]
    counts = _largest_remainder([weight for _, weight in profile.gpt_weights], n)
    gpt = [value for value, count in zip(values, counts) for _ in range(count)]
    exponent = profile.epe_exponent
    epe = [profile.epe_scale * ((i + 0.5) / n) ** exponent for i in range(n)]
    rng.shuffle(gpt)
    rng.shuffle(epe)
    return list(zip(gpt, epe))


_INSTRUCTIONS = (
    "Turn the sky a deep sunset orange.",
    "Replace the car with a bicycle.",
    "Make it snow heavily.",
    "Give the building a glass facade.",
    "Change the season to autumn.",
    "Add a small sailboat on the water.",
)

_MOTIONS = tuple(CameraMotion)


def synthetic_records(n: int = 10_000, seed: int = 0) -> list[TripletRecord]:
    """Fully scored, accepted records with dataset-profile statistics.

    Every record sits at the accepted terminal stage with both clips at
    the dataset geometry, so the batch passes record validation and is a
    legal input to curriculum selection.
    """
    rng = random.Random(seed)
    counts = _largest_remainder([float(p.share) for p in PROFILES], n)
    records: list[TripletRecord] = []
    for profile, count in zip(PROFILES, counts):
        scores = sample_scores(profile, count, rng)
        for index, (gpt, epe) in enumerate(scores):
            origin = f"synthetic/{profile.kind.value}/{index:05d}"
            instruction = _INSTRUCTIONS[index % len(_INSTRUCTIONS)]
            rec_id = record_id(profile.kind, origin, instruction)
            best_cfg = None
            motion = None
            if profile.kind is not SourceKind.IMAGE_PAIR:
                best_cfg = DEFAULT_SWEEP[index % len(DEFAULT_SWEEP)]
            if profile.kind is SourceKind.STATIC_IMAGE:
                motion = _MOTIONS[index % len(_MOTIONS)].value
            geometry = dict(width=DATASET_WIDTH, height=DATASET_HEIGHT,
                            n_frames=DATASET_FRAME_COUNT)
            records.append(TripletRecord(
                id=rec_id,
                source_kind=profile.kind,
                source_clip=ClipRef(path=f"clips/{rec_id}/source", **geometry),
                edited_clip=ClipRef(path=f"clips/{rec_id}/edited", **geometry),
                origin=origin,
                caption=f"procedural scene {index:05d}",
                instruction=instruction,
                scores=ScoreCard(gpt_score=gpt, epe=epe, best_cfg=best_cfg,
                                 verdict=Verdict.ACCEPT),
                stage=Stage.FILTERED_ACCEPT,
                motion=motion,
            ))
    return records


def write_synthetic_manifest(path: str, n: int = 10_000, seed: int = 0) -> Manifest:
    manifest = Manifest.create(path, metadata={
        "name": "synthetic-scores", "records": n, "seed": seed,
        "created_at": "1970-01-01T00:00:00Z",
    })
    manifest.append_many(synthetic_records(n, seed))
    return manifest


# -- demo corpus -----------------------------------------------------------


def _banded_image(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """A horizontally banded test image that compresses well as PNG.

    Rows are built from a per-row base level plus a slow horizontal ramp,
    so vertical neighbours differ by small constants; PNG's row filters
    collapse that to near-nothing, keeping fixture I/O cheap.
    """
    levels = rng.integers(0, 200, size=3)
    row = np.arange(height, dtype=np.float64)[:, None] * (55.0 / max(height - 1, 1))
    col = np.arange(width, dtype=np.float64)[None, :] * (55.0 / max(width - 1, 1))
    plane = row + col
    image = np.stack([(plane + float(level)) % 256.0 for level in levels], axis=-1)
    return image.astype(np.uint8)


def _shifted(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    return np.roll(np.roll(image, dy, axis=0), dx, axis=1)


def _video_frames(base: np.ndarray, n_frames: int, step: int) -> ClipFrames:
    frames = [Frame(_shifted(base, step * t, 0)) for t in range(n_frames)]
    return ClipFrames(frames)


def make_demo_corpus(
    root: str,
    n_real: int = 4,
    n_pairs: int = 3,
    n_static: int = 3,
    seed: int = 0,
    frame_size: tuple[int, int] = (DATASET_WIDTH, DATASET_HEIGHT),
    n_frames: int = DATASET_FRAME_COUNT,
    oversize_first: bool = False,
) -> str:
    """Write a pipeline-ingestible corpus of procedural sources under root.

    Layout matches the ingest contract: ``real_videos/<name>/`` frame
    directories with captions, ``image_pairs/<name>/`` with source.png,
    edited.png and instruction.txt, ``static_images/<name>/image.png``.
    With ``oversize_first`` the first entry of each bucket is generated
    larger than ``frame_size`` (and, for video, longer), to exercise the
    geometry-normalization path.
    """
    rng = np.random.default_rng(seed)
    width, height = frame_size

    for index in range(n_real):
        name = f"vid_{index:03d}"
        big = oversize_first and index == 0
        w, h = (width + 256, height + 144) if big else (width, height)
        count = n_frames + 2 if big else n_frames
        base = _banded_image(w, h, rng)
        clip_dir = os.path.join(root, "real_videos", name)
        write_clip(_video_frames(base, count, step=3), clip_dir)
        with open(os.path.join(clip_dir, "caption.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"A procedural banded scene, take {index}.\n")

    for index in range(n_pairs):
        name = f"pair_{index:03d}"
        big = oversize_first and index == 0
        w, h = (width + 256, height + 144) if big else (width, height)
        base = _banded_image(w, h, rng)
        edited = (base.astype(np.int16) + 40) % 256
        pair_dir = os.path.join(root, "image_pairs", name)
        os.makedirs(pair_dir, exist_ok=True)
        _save_png(os.path.join(pair_dir, "source.png"), base)
        _save_png(os.path.join(pair_dir, "edited.png"), edited.astype(np.uint8))
        with open(os.path.join(pair_dir, "instruction.txt"), "w", encoding="utf-8") as fh:
            fh.write(_INSTRUCTIONS[index % len(_INSTRUCTIONS)] + "\n")

    for index in range(n_static):
        name = f"still_{index:03d}"
        big = oversize_first and index == 0
        w, h = (width + 256, height + 144) if big else (width, height)
        base = _banded_image(w, h, rng)
        still_dir = os.path.join(root, "static_images", name)
        os.makedirs(still_dir, exist_ok=True)
        _save_png(os.path.join(still_dir, "image.png"), base)

    return root


def _save_png(path: str, pixels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_frame_png(pixels))
