"""Benchmark harness: per-clip metric collection and report aggregation.

Eight metrics per edited clip, grouped into three aspects:

  temporal consistency: clip_temporal, of_epe, gpt_temporal
  textual alignment:    clip_text, pick, gpt_text
  video quality:        dover, gpt_quality

The ``gpt_*`` scores come from the judge over ALL frames of both clips
(construction-time filtering samples only three); ``of_epe`` is computed
natively from backend flow fields; the remaining metrics are opaque
backend scores that are only aggregated here.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .backends import BackendError, checked_estimate_flow
from .camera import CropRect, bilinear_resample
from .config import BackendSet
from .flowmetrics import ClipFlow, clip_epe
from .media import ClipFrames, Frame, frame_path, read_clip
from .vlm import BenchmarkKind, DispatchFailed, RetryPolicy, build_benchmark_request, dispatch

METRICS = ("clip_temporal", "of_epe", "gpt_temporal",
           "clip_text", "pick", "gpt_text",
           "dover", "gpt_quality")

ASPECTS = (
    ("temporal consistency", ("clip_temporal", "of_epe", "gpt_temporal")),
    ("textual alignment", ("clip_text", "pick", "gpt_text")),
    ("video quality", ("dover", "gpt_quality")),
)

# Rendering precision per metric, chosen to match how these scores are
# conventionally reported.
DECIMALS = {
    "clip_temporal": 3, "of_epe": 2, "gpt_temporal": 2,
    "clip_text": 2, "pick": 2, "gpt_text": 2,
    "dover": 3, "gpt_quality": 2,
}

# Every metric rewards larger values except the flow endpoint error.
LOWER_IS_BETTER = frozenset({"of_epe"})


class EvalError(Exception):
    pass


@dataclass
class EvalRecord:
    clip_id: str
    method: str
    clip_temporal: Optional[float] = None
    of_epe: Optional[float] = None
    gpt_temporal: Optional[float] = None
    clip_text: Optional[float] = None
    pick: Optional[float] = None
    gpt_text: Optional[float] = None
    dover: Optional[float] = None
    gpt_quality: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("gpt_temporal", "gpt_text", "gpt_quality"):
            value = getattr(self, name)
            if value is not None and not 1.0 <= value <= 5.0:
                raise EvalError(f"{name} must be in 1..5, got {value}")
        if self.of_epe is not None and self.of_epe < 0:
            raise EvalError(f"of_epe must be non-negative, got {self.of_epe}")

    def metric(self, name: str) -> Optional[float]:
        if name not in METRICS:
            raise EvalError(f"unknown metric {name!r}")
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {"clip_id": self.clip_id, "method": self.method,
                **{name: getattr(self, name) for name in METRICS}}


def evaluate_clip(
    src_dir: str,
    edit_dir: str,
    instruction: str,
    backends: BackendSet,
    method: str = "ours",
    clip_id: Optional[str] = None,
    retry: RetryPolicy = RetryPolicy(),
) -> EvalRecord:
    """Collect all available metrics for one source/edited clip pair.

    A missing or failing backend leaves its cells empty rather than
    aborting the evaluation.
    """
    src_clip = read_clip(src_dir)
    edit_clip = read_clip(edit_dir)
    if len(src_clip) != len(edit_clip):
        raise EvalError(
            f"clip pair misaligned: {len(src_clip)} vs {len(edit_clip)} frames"
        )

    record = EvalRecord(clip_id=clip_id or os.path.basename(edit_dir.rstrip("/")),
                        method=method)

    if backends.flow is not None:
        src_fields = [checked_estimate_flow(backends.flow, a, b)
                      for a, b in zip(src_clip.frames, src_clip.frames[1:])]
        edit_fields = [checked_estimate_flow(backends.flow, a, b)
                       for a, b in zip(edit_clip.frames, edit_clip.frames[1:])]
        record.of_epe = clip_epe(ClipFlow(src_fields), ClipFlow(edit_fields))

    if backends.chat is not None:
        src_frames = [frame_path(src_dir, i) for i in range(len(src_clip))]
        edit_frames = [frame_path(edit_dir, i) for i in range(len(edit_clip))]
        judged = {}
        for kind, slot in ((BenchmarkKind.TEMPORAL, "gpt_temporal"),
                           (BenchmarkKind.TEXTUAL, "gpt_text"),
                           (BenchmarkKind.QUALITY, "gpt_quality")):
            request = build_benchmark_request(kind, src_frames, edit_frames, instruction)
            try:
                judged[slot] = float(dispatch(request, backends.chat, retry).score)
            except DispatchFailed:
                judged[slot] = None
        record.gpt_temporal = judged["gpt_temporal"]
        record.gpt_text = judged["gpt_text"]
        record.gpt_quality = judged["gpt_quality"]

    if backends.metrics is not None:
        payload = {"source_clip": src_dir, "edited_clip": edit_dir,
                   "instruction": instruction}
        for kind in ("clip_temporal", "clip_text", "pick", "dover"):
            try:
                setattr(record, kind, backends.metrics.score_metric(kind, payload))
            except BackendError:
                pass

    return record


# -- aggregation ----------------------------------------------------------


@dataclass
class Report:
    """Per-method masked means over all metrics, plus best-cell marks."""

    methods: list[str]
    means: dict[str, dict[str, Optional[float]]]

    def best_method(self, metric: str) -> Optional[str]:
        candidates = [(name, self.means[name][metric]) for name in self.methods
                      if self.means[name][metric] is not None]
        if not candidates:
            return None
        if metric in LOWER_IS_BETTER:
            return min(candidates, key=lambda pair: pair[1])[0]
        return max(candidates, key=lambda pair: pair[1])[0]

    def to_json(self) -> str:
        rows = [{"method": name, **self.means[name]} for name in self.methods]
        return json.dumps({"rows": rows}, sort_keys=True, indent=2)


def aggregate_report(records: Sequence[EvalRecord]) -> Report:
    """Mean per method per metric; absent cells are ignored, not zeroed."""
    if not records:
        raise EvalError("no records to aggregate")
    methods: list[str] = []
    grouped: dict[str, list[EvalRecord]] = {}
    for record in records:
        if record.method not in grouped:
            methods.append(record.method)
            grouped[record.method] = []
        grouped[record.method].append(record)

    means: dict[str, dict[str, Optional[float]]] = {}
    for method in methods:
        row: dict[str, Optional[float]] = {}
        for metric in METRICS:
            values = [rec.metric(metric) for rec in grouped[method]
                      if rec.metric(metric) is not None]
            row[metric] = sum(values) / len(values) if values else None
        means[method] = row
    return Report(methods=methods, means=means)


def _cell(value: Optional[float], metric: str, best: bool) -> str:
    if value is None:
        return "-"
    text = f"{value:.{DECIMALS[metric]}f}"
    return f"*{text}" if best else text


def render_table(report: Report) -> str:
    """Human-readable table in the three-aspect layout; best cells starred."""
    header_top = ["method"]
    header_sub = [""]
    for aspect, metric_names in ASPECTS:
        for index, metric in enumerate(metric_names):
            header_top.append(aspect if index == 0 else "")
            header_sub.append(metric)

    rows = [header_top, header_sub]
    for method in report.methods:
        row = [method]
        for _, metric_names in ASPECTS:
            for metric in metric_names:
                value = report.means[method][metric]
                best = report.best_method(metric) == method and len(report.methods) > 1
                row.append(_cell(value, metric, best))
        rows.append(row)

    widths = [max(len(row[col]) for row in rows) for col in range(len(rows[0]))]
    lines = []
    for index, row in enumerate(rows):
        line = "  ".join(cell.ljust(widths[col]) for col, cell in enumerate(row)).rstrip()
        lines.append(line)
        if index == 1:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


# -- evaluation protocol (method-native resolutions) ----------------------


@dataclass(frozen=True)
class EvalProtocol:
    """Resize rule for methods that edit at a different native resolution."""

    native_width: int
    native_height: int

    def __post_init__(self) -> None:
        if self.native_width < 1 or self.native_height < 1:
            raise EvalError("native resolution must be positive")


def _resize_clip(clip: ClipFrames, out_w: int, out_h: int) -> ClipFrames:
    if (clip.width, clip.height) == (out_w, out_h):
        return clip
    frames = []
    for frame in clip.frames:
        rect = CropRect(0.0, 0.0, float(frame.width), float(frame.height))
        frames.append(Frame(bilinear_resample(frame.pixels, rect, out_w, out_h)))
    return ClipFrames(frames, fps=clip.fps)


def apply_protocol(
    clip: ClipFrames, protocol: EvalProtocol
) -> tuple[ClipFrames, Callable[[ClipFrames], ClipFrames]]:
    """Downsize a clip to a method's native resolution plus the way back.

    The restore transform returns any clip to the original resolution so
    scoring always happens at the source geometry.
    """
    original_w, original_h = clip.width, clip.height
    downsized = _resize_clip(clip, protocol.native_width, protocol.native_height)

    def restore(edited: ClipFrames) -> ClipFrames:
        return _resize_clip(edited, original_w, original_h)

    return downsized, restore
