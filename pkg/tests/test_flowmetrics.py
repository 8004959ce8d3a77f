import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tripletforge.flowio import FlowField
from tripletforge.records import (
    ClipRef,
    ScoreCard,
    SourceKind,
    Stage,
    TripletRecord,
    record_id,
)
from tripletforge.flowmetrics import (
    ClipFlow,
    FlowMetricError,
    clip_epe,
    epe,
    epe_filter,
    within_epe,
)


def field(vectors):
    return FlowField(np.asarray(vectors, dtype=np.float32))


@st.composite
def field_triples(draw):
    """Three flow arrays sharing one shape, so the metric is defined pairwise."""
    shape = draw(st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(2)))
    elements = st.floats(-50, 50, width=32)
    return tuple(
        draw(hnp.arrays(np.float32, shape, elements=elements)) for _ in range(3)
    )


def brute_force_epe(a, b):
    total = 0.0
    height, width = a.shape[:2]
    for i in range(height):
        for j in range(width):
            du = float(a[i, j, 0]) - float(b[i, j, 0])
            dv = float(a[i, j, 1]) - float(b[i, j, 1])
            total += math.hypot(du, dv)
    return total / (height * width)


def test_identical_fields_score_zero():
    a = field(np.random.default_rng(0).standard_normal((4, 5, 2)))
    assert epe(a, a) == 0.0


def test_constant_offset_oracle():
    a = field(np.zeros((7, 9, 2)))
    b = field(np.stack([np.full((7, 9), 3.0), np.full((7, 9), 4.0)], axis=-1))
    assert epe(a, b) == 5.0


def test_brute_force_agreement_on_random_fields():
    rng = np.random.default_rng(42)
    for _ in range(25):
        a = rng.standard_normal((16, 16, 2)).astype(np.float32) * 5
        b = rng.standard_normal((16, 16, 2)).astype(np.float32) * 5
        assert epe(field(a), field(b)) == pytest.approx(brute_force_epe(a, b), abs=1e-6)


@given(field_triples())
def test_metric_axioms(triple):
    fa, fb, fc = (field(arr) for arr in triple)
    assert epe(fa, fb) >= 0.0
    assert epe(fa, fb) == epe(fb, fa)
    assert epe(fa, fc) <= epe(fa, fb) + epe(fb, fc) + 1e-6


def test_shape_mismatch_rejected():
    with pytest.raises(FlowMetricError):
        epe(field(np.zeros((2, 2, 2))), field(np.zeros((2, 3, 2))))


def test_clip_epe_is_mean_over_frame_pairs():
    zero = field(np.zeros((3, 3, 2)))
    three_four = field(np.stack(
        [np.full((3, 3), 3.0), np.full((3, 3), 4.0)], axis=-1))
    source = ClipFlow([zero, zero])
    edited = ClipFlow([zero, three_four])
    assert clip_epe(source, edited) == 2.5  # (0 + 5) / 2

    with pytest.raises(FlowMetricError):
        clip_epe(ClipFlow([zero]), edited)
    with pytest.raises(FlowMetricError):
        ClipFlow([])


def test_within_epe_boundary_is_inclusive():
    assert within_epe(1.0, 1.0)
    assert within_epe(0.0, 1.0)
    assert not within_epe(1.0000001, 1.0)


def scored_record(name, epe_value):
    return TripletRecord(
        id=record_id(SourceKind.REAL_VIDEO, name),
        source_kind=SourceKind.REAL_VIDEO,
        source_clip=ClipRef("clips/x/source", 128, 72, 5),
        origin=name,
        stage=Stage.PROPAGATED,
        scores=ScoreCard(epe=epe_value),
    )


def test_epe_filter_partitions():
    records = [scored_record(name, value)
               for name, value in [("a", 0.5), ("b", 1.0), ("c", 1.5)]]
    kept, dropped = epe_filter(records, max_epe=1.0)
    assert kept == records[:2]
    assert dropped == records[2:]

    unscored = scored_record("d", None)
    with pytest.raises(FlowMetricError):
        epe_filter([unscored], max_epe=1.0)
