"""Domain types for editing triplets and their validation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

DATASET_FRAME_COUNT = 25
DATASET_WIDTH = 1024
DATASET_HEIGHT = 576


class SourceKind(str, Enum):
    REAL_VIDEO = "real_video"
    IMAGE_PAIR = "image_pair"
    STATIC_IMAGE = "static_image"


class Stage(str, Enum):
    INGESTED = "ingested"
    CAPTIONED = "captioned"
    FIRST_FRAME_EDITED = "first_frame_edited"
    SCREENED = "screened"
    PROPAGATED = "propagated"
    FILTERED_ACCEPT = "filtered_accept"
    FILTERED_REJECT = "filtered_reject"


_STAGE_ORDER = {stage: index for index, stage in enumerate(Stage)}

TERMINAL_STAGES = frozenset({Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT})


def stage_index(stage: Stage) -> int:
    return _STAGE_ORDER[stage]


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass
class ClipRef:
    """Reference to a frame-sequence directory on shared storage."""

    path: str
    width: int
    height: int
    n_frames: int

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "width": self.width, "height": self.height,
                "n_frames": self.n_frames}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ClipRef":
        return cls(path=data["path"], width=int(data["width"]),
                   height=int(data["height"]), n_frames=int(data["n_frames"]))


@dataclass
class ScoreCard:
    """Judge score, motion error and filter verdict for one triplet.

    Fields are filled in as the pipeline advances: ``best_cfg`` after
    screening, ``gpt_score``/``epe``/``verdict`` after filtering. Records
    built from image-editing pairs never run a guidance sweep, so their
    ``best_cfg`` stays unset.
    """

    gpt_score: Optional[int] = None
    epe: Optional[float] = None
    best_cfg: Optional[float] = None
    verdict: Optional[Verdict] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "gpt_score": self.gpt_score,
            "epe": self.epe,
            "best_cfg": self.best_cfg,
            "verdict": self.verdict.value if self.verdict is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScoreCard":
        verdict = data.get("verdict")
        return cls(
            gpt_score=data.get("gpt_score"),
            epe=data.get("epe"),
            best_cfg=data.get("best_cfg"),
            verdict=Verdict(verdict) if verdict is not None else None,
        )


@dataclass
class TripletRecord:
    """One (source clip, edited clip, instruction) example with provenance."""

    id: str
    source_kind: SourceKind
    source_clip: ClipRef
    origin: str = ""
    edited_clip: Optional[ClipRef] = None
    caption: str = ""
    instruction: str = ""
    scores: Optional[ScoreCard] = None
    stage: Stage = Stage.INGESTED
    motion: Optional[str] = None
    error: Optional[str] = None

    def to_json(self) -> str:
        data = {
            "id": self.id,
            "kind": self.source_kind.value,
            "origin": self.origin,
            "source_clip": self.source_clip.to_dict(),
            "edited_clip": self.edited_clip.to_dict() if self.edited_clip else None,
            "caption": self.caption,
            "instruction": self.instruction,
            "scores": self.scores.to_dict() if self.scores else None,
            "stage": self.stage.value,
            "motion": self.motion,
            "error": self.error,
        }
        return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "TripletRecord":
        data = json.loads(line)
        return cls(
            id=data["id"],
            source_kind=SourceKind(data["kind"]),
            source_clip=ClipRef.from_dict(data["source_clip"]),
            origin=data.get("origin", ""),
            edited_clip=ClipRef.from_dict(data["edited_clip"]) if data.get("edited_clip") else None,
            caption=data.get("caption", ""),
            instruction=data.get("instruction", ""),
            scores=ScoreCard.from_dict(data["scores"]) if data.get("scores") else None,
            stage=Stage(data["stage"]),
            motion=data.get("motion"),
            error=data.get("error"),
        )


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def record_id(kind: SourceKind, origin: str, instruction: str = "") -> str:
    """Content-derived record id, stable across re-runs over the same source."""
    digest = hashlib.sha1(f"{kind.value}|{origin}|{instruction}".encode("utf-8"))
    return digest.hexdigest()[:16]


def validate_triplet(
    record: TripletRecord,
    out_width: int = DATASET_WIDTH,
    out_height: int = DATASET_HEIGHT,
    out_frames: int = DATASET_FRAME_COUNT,
) -> ValidationReport:
    """Check every record invariant; returns all violations, never raises."""
    violations: list[str] = []
    if not record.id:
        violations.append("id empty")

    past_propagation = stage_index(record.stage) >= stage_index(Stage.PROPAGATED)
    if past_propagation and record.edited_clip is None:
        violations.append("edited_clip required at stage >= propagated")
    if not past_propagation and record.edited_clip is not None:
        violations.append("edited_clip not allowed before propagation")

    if stage_index(record.stage) >= stage_index(Stage.CAPTIONED) and not record.instruction:
        violations.append("instruction empty at stage >= captioned")

    for name, clip in (("source_clip", record.source_clip), ("edited_clip", record.edited_clip)):
        if clip is None:
            continue
        if clip.width <= 0 or clip.height <= 0 or clip.n_frames <= 0:
            violations.append(f"{name} has non-positive geometry")
        if past_propagation and (clip.width, clip.height, clip.n_frames) != (out_width, out_height, out_frames):
            violations.append(
                f"{name} must be {out_frames} frames at {out_width}x{out_height} once propagated"
            )

    scores = record.scores
    if scores is not None:
        if scores.gpt_score is not None and scores.gpt_score not in (1, 2, 3, 4, 5):
            violations.append("gpt_score out of range")
        if scores.epe is not None and not scores.epe >= 0:
            violations.append("epe negative")

    swept = record.source_kind in (SourceKind.REAL_VIDEO, SourceKind.STATIC_IMAGE)
    if swept and stage_index(record.stage) >= stage_index(Stage.SCREENED):
        if scores is None or scores.best_cfg is None:
            violations.append("record past screening must carry best_cfg")
    if record.source_kind is SourceKind.IMAGE_PAIR and scores is not None:
        if scores.best_cfg is not None:
            violations.append("image-pair record must not carry best_cfg")

    if record.stage in TERMINAL_STAGES:
        if scores is None or scores.gpt_score is None or scores.epe is None or scores.verdict is None:
            violations.append("filtered record missing scores")
        else:
            expected = Verdict.ACCEPT if record.stage is Stage.FILTERED_ACCEPT else Verdict.REJECT
            if scores.verdict is not expected:
                violations.append("verdict inconsistent with stage")

    return ValidationReport(violations)
