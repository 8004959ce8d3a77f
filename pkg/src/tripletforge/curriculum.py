"""Training-subset construction (the S1/S2/S3 curriculum) and stage configs.

The curriculum takes an accepted-triplet manifest and derives three
progressively stricter training sets: S1 is everything, S2 keeps only
high-score/low-motion-error triplets at a balanced static:real mix, and
S3 widens S2 with extra static clips to a 5:1 mix. Records built from
camera-motion synthesis count as "static"; everything else (real videos
and image-pair clips — both depict motion) counts as "real".
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .records import SourceKind, Stage, TripletRecord

STATIC_KINDS = frozenset({SourceKind.STATIC_IMAGE})
REAL_KINDS = frozenset({SourceKind.REAL_VIDEO, SourceKind.IMAGE_PAIR})


class CurriculumError(Exception):
    pass


@dataclass(frozen=True)
class CurriculumSpec:
    """Selection rule for one training stage.

    ``static_real_ratio`` of None means "keep whatever mix survives the
    thresholds" (reported, not enforced). A ratio of 0 is legal and
    means no static records at all.
    """

    name: str
    min_gpt: int = 1
    max_epe: float = math.inf
    static_real_ratio: Optional[Fraction] = None
    target_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.min_gpt not in (1, 2, 3, 4, 5):
            raise CurriculumError(f"min_gpt must be 1..5, got {self.min_gpt}")
        if not self.max_epe > 0:
            raise CurriculumError(f"max_epe must be positive, got {self.max_epe}")
        if self.static_real_ratio is not None:
            ratio = self.static_real_ratio
            if ratio < 0 or ratio.denominator <= 0:
                raise CurriculumError(f"bad static:real ratio {ratio}")
        if self.target_size is not None and self.target_size < 0:
            raise CurriculumError("target_size must be non-negative")


# The published dataset characteristics each stage aims at; stored in the
# subset header next to what a concrete run actually achieved.
STAGE_TARGETS: dict[str, dict] = {
    "S1": {"amount": 1_019_593, "ratio": "1:1", "mean_gpt": 3.74, "mean_epe": 0.55},
    "S2": {"amount": 226_772, "ratio": "1:1", "mean_gpt": 4.34, "mean_epe": 0.42},
    "S3": {"amount": 680_316, "ratio": "5:1", "mean_gpt": 4.41, "mean_epe": 0.29},
}


def default_spec(name: str) -> CurriculumSpec:
    if name == "S1":
        return CurriculumSpec("S1")
    if name == "S2":
        return CurriculumSpec("S2", min_gpt=4, max_epe=1.0,
                              static_real_ratio=Fraction(1, 1))
    if name == "S3":
        return CurriculumSpec("S3", min_gpt=4, max_epe=1.0,
                              static_real_ratio=Fraction(5, 1))
    raise CurriculumError(f"unknown curriculum stage {name!r}")


def _is_static(record: TripletRecord) -> bool:
    return record.source_kind in STATIC_KINDS


def _mean(values: Sequence[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def _ratio_text(static: int, real: int) -> str:
    if real == 0:
        return f"{static}:0"
    ratio = Fraction(static, real)
    return f"{ratio.numerator}:{ratio.denominator}"


def build_set(
    records: Sequence[TripletRecord],
    spec: CurriculumSpec,
    seed: int = 0,
) -> tuple[list[TripletRecord], dict]:
    """Select one training subset; returns (records, header metadata).

    Selection: threshold filter, then exact ratio enforcement by seeded
    subsampling of the over-represented side, then optional truncation
    to ``target_size``. Sorting by id first makes the result independent
    of input order.
    """
    for record in records:
        if record.stage is not Stage.FILTERED_ACCEPT:
            raise CurriculumError(
                f"curriculum input must be accepted records; {record.id} is at "
                f"{record.stage.value}"
            )
        if record.scores is None or record.scores.gpt_score is None or record.scores.epe is None:
            raise CurriculumError(f"record {record.id} lacks scores")

    surviving = [
        rec for rec in sorted(records, key=lambda r: r.id)
        if rec.scores.gpt_score >= spec.min_gpt and rec.scores.epe <= spec.max_epe
    ]
    statics = [rec for rec in surviving if _is_static(rec)]
    reals = [rec for rec in surviving if not _is_static(rec)]
    rng = random.Random(seed)

    if spec.static_real_ratio is not None:
        p = spec.static_real_ratio.numerator
        q = spec.static_real_ratio.denominator
        if p > 0 and not statics and reals:
            raise CurriculumError(
                f"ratio {p}:{q} infeasible: no static records survive the "
                f"thresholds (achievable ratio 0:1)"
            )
        if q > 0 and not reals and statics and p > 0:
            raise CurriculumError(
                f"ratio {p}:{q} infeasible: no real records survive the "
                f"thresholds (achievable ratio 1:0)"
            )
        if p == 0:
            statics = []
        else:
            groups = min(len(statics) // p, len(reals) // q)
            statics = rng.sample(statics, groups * p)
            reals = rng.sample(reals, groups * q)

    if spec.target_size is not None:
        total = len(statics) + len(reals)
        if spec.target_size < total:
            if spec.static_real_ratio is not None and spec.static_real_ratio > 0:
                p = spec.static_real_ratio.numerator
                q = spec.static_real_ratio.denominator
                groups = spec.target_size // (p + q)
                statics = rng.sample(statics, min(len(statics), groups * p))
                reals = rng.sample(reals, min(len(reals), spec.target_size - len(statics)))
            else:
                merged = sorted(statics + reals, key=lambda r: r.id)
                merged = rng.sample(merged, spec.target_size)
                statics = [rec for rec in merged if _is_static(rec)]
                reals = [rec for rec in merged if not _is_static(rec)]

    subset = sorted(statics + reals, key=lambda r: r.id)
    gpt_values = [float(rec.scores.gpt_score) for rec in subset]
    epe_values = [float(rec.scores.epe) for rec in subset]
    header = {
        "curriculum": spec.name,
        "thresholds": {
            "min_gpt": spec.min_gpt,
            "max_epe": None if math.isinf(spec.max_epe) else spec.max_epe,
            "ratio": (f"{spec.static_real_ratio.numerator}:"
                      f"{spec.static_real_ratio.denominator}"
                      if spec.static_real_ratio is not None else None),
            "target_size": spec.target_size,
            "seed": seed,
        },
        "target": STAGE_TARGETS.get(spec.name),
        "achieved": {
            "count": len(subset),
            "static": len([rec for rec in subset if _is_static(rec)]),
            "real": len([rec for rec in subset if not _is_static(rec)]),
            "ratio": _ratio_text(
                len([rec for rec in subset if _is_static(rec)]),
                len([rec for rec in subset if not _is_static(rec)]),
            ),
            "mean_gpt": _mean(gpt_values),
            "mean_epe": _mean(epe_values),
        },
    }
    return subset, header


def write_subset(path: str, records: Sequence[TripletRecord], header: dict):
    """Persist a built subset as a manifest with the curriculum header."""
    from .manifest import Manifest

    manifest = Manifest.create(path, metadata=header)
    manifest.append_many(records)
    return manifest


def ratio_sweep_report(
    records: Sequence[TripletRecord],
    ratios: Sequence[Fraction],
    min_gpt: int = 4,
    max_epe: float = 1.0,
    seed: int = 0,
) -> list[dict]:
    """Subset statistics for each candidate static:real mix.

    Mirrors an ablation over the final-stage data mix: every ratio uses
    the same thresholds, so the reports isolate the effect of the mix.
    """
    reports = []
    for ratio in ratios:
        spec = CurriculumSpec(
            name=f"ratio-{ratio.numerator}:{ratio.denominator}",
            min_gpt=min_gpt,
            max_epe=max_epe,
            static_real_ratio=ratio,
        )
        _, header = build_set(records, spec, seed)
        reports.append(header)
    return reports


# -- training-stage configuration -----------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters one training stage hands to an external trainer."""

    stage: str
    iterations: int
    batch_size: int = 128
    adapter_rank: int = 128
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.95)
    weight_decay: float = 1e-5
    ema_decay: float = 0.9999
    loss_reconstruction: float = 1.0
    loss_perceptual: float = 0.0
    crop_width: int = 720
    crop_height: int = 480
    source_width: int = 1024
    source_height: int = 576
    condition_dropout_p: float = 0.05

    def to_text(self) -> str:
        lines = [
            f"stage = {self.stage}",
            f"iterations = {self.iterations}",
            f"batch_size = {self.batch_size}",
            f"adapter_rank = {self.adapter_rank}",
            f"learning_rate = {self.learning_rate}",
            f"beta1 = {self.betas[0]}",
            f"beta2 = {self.betas[1]}",
            f"weight_decay = {self.weight_decay}",
            f"ema_decay = {self.ema_decay}",
            f"loss_reconstruction = {self.loss_reconstruction}",
            f"loss_perceptual = {self.loss_perceptual}",
            f"crop_width = {self.crop_width}",
            f"crop_height = {self.crop_height}",
            f"source_width = {self.source_width}",
            f"source_height = {self.source_height}",
            f"condition_dropout_p = {self.condition_dropout_p}",
        ]
        return "\n".join(lines) + "\n"


_STAGE_ITERATIONS = {"S1": 20_000, "S2": 10_000, "S3": 10_000}


def emit_training_config(stage: str) -> TrainingConfig:
    """Stage hyperparameters; the perceptual loss turns on only for S3."""
    if stage not in _STAGE_ITERATIONS:
        raise CurriculumError(f"unknown training stage {stage!r}")
    perceptual = stage == "S3"
    return TrainingConfig(
        stage=stage,
        iterations=_STAGE_ITERATIONS[stage],
        loss_reconstruction=0.5 if perceptual else 1.0,
        loss_perceptual=0.5 if perceptual else 0.0,
    )
