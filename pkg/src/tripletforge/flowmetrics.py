"""Endpoint-error metrics over optical-flow fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flowio import FlowField


class FlowMetricError(Exception):
    pass


def epe(a: FlowField, b: FlowField) -> float:
    """Mean endpoint error between two fields of the same size.

    Per pixel: the Euclidean length of the difference vector; the metric
    is the mean over all pixels.
    """
    if a.vectors.shape != b.vectors.shape:
        raise FlowMetricError(
            f"flow shapes differ: {a.vectors.shape} vs {b.vectors.shape}"
        )
    # Componentwise double-precision difference without stacking a full
    # (h, w, 2) temporary; dataset-sized fields make this a hot path.
    du = np.subtract(a.vectors[..., 0], b.vectors[..., 0], dtype=np.float64)
    dv = np.subtract(a.vectors[..., 1], b.vectors[..., 1], dtype=np.float64)
    du *= du
    dv *= dv
    du += dv
    np.sqrt(du, out=du)
    return float(du.mean())


@dataclass
class ClipFlow:
    """Consecutive-frame flows for one clip: n-1 fields for n frames."""

    fields: list[FlowField]

    def __post_init__(self) -> None:
        if not self.fields:
            raise FlowMetricError("clip flow needs at least one field")
        shape = self.fields[0].vectors.shape
        for field in self.fields[1:]:
            if field.vectors.shape != shape:
                raise FlowMetricError("all flow fields in a clip must share one size")


def clip_epe(source: ClipFlow, edited: ClipFlow) -> float:
    """Mean over frame pairs of the per-pair endpoint error.

    Compares motion between a source clip and its edited counterpart;
    low values mean the edit preserved the original camera/object motion.
    """
    if len(source.fields) != len(edited.fields):
        raise FlowMetricError(
            f"clips have different flow counts: "
            f"{len(source.fields)} vs {len(edited.fields)}"
        )
    pair_errors = [epe(s, e) for s, e in zip(source.fields, edited.fields)]
    return float(np.mean(pair_errors))


def within_epe(value: float, max_epe: float) -> bool:
    """True when the motion error is within tolerance (kept)."""
    return value <= max_epe


def epe_filter(records, max_epe: float):
    """Stable partition of scored records into (accepted, rejected).

    Each record must carry ``scores.epe``; order within each side follows
    the input order.
    """
    accepted, rejected = [], []
    for record in records:
        if record.scores is None or record.scores.epe is None:
            raise FlowMetricError(f"record {record.id} has no epe to filter on")
        if within_epe(record.scores.epe, max_epe):
            accepted.append(record)
        else:
            rejected.append(record)
    return accepted, rejected
