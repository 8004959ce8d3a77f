import math
from fractions import Fraction

import pytest

from tripletforge.curriculum import (
    CurriculumError,
    CurriculumSpec,
    STAGE_TARGETS,
    TrainingConfig,
    build_set,
    default_spec,
    emit_training_config,
    ratio_sweep_report,
    write_subset,
)
from tripletforge.manifest import Manifest
from tripletforge.records import (
    ClipRef,
    ScoreCard,
    SourceKind,
    Stage,
    TripletRecord,
    Verdict,
    record_id,
)


def accepted(kind, origin, gpt, epe):
    return TripletRecord(
        id=record_id(kind, origin),
        source_kind=kind,
        source_clip=ClipRef(f"clips/{origin}/source", 1024, 576, 25),
        origin=origin,
        stage=Stage.FILTERED_ACCEPT,
        scores=ScoreCard(gpt_score=gpt, epe=epe, verdict=Verdict.ACCEPT,
                         best_cfg=None if kind is SourceKind.IMAGE_PAIR else 5.0),
    )


def pool(n_static=12, n_real=12, gpt=5, epe=0.2):
    records = []
    for i in range(n_static):
        records.append(accepted(SourceKind.STATIC_IMAGE, f"s{i}", gpt, epe))
    for i in range(n_real):
        kind = SourceKind.REAL_VIDEO if i % 2 == 0 else SourceKind.IMAGE_PAIR
        records.append(accepted(kind, f"r{i}", gpt, epe))
    return records


def test_default_specs_mirror_stage_targets():
    s1, s2, s3 = (default_spec(n) for n in ("S1", "S2", "S3"))
    assert s1.min_gpt == 1 and math.isinf(s1.max_epe)
    assert s1.static_real_ratio is None
    assert (s2.min_gpt, s2.max_epe, s2.static_real_ratio) == (4, 1.0, Fraction(1, 1))
    assert (s3.min_gpt, s3.max_epe, s3.static_real_ratio) == (4, 1.0, Fraction(5, 1))
    with pytest.raises(CurriculumError):
        default_spec("S4")

    assert STAGE_TARGETS["S1"]["amount"] == 1_019_593
    assert STAGE_TARGETS["S2"]["amount"] == 226_772
    assert STAGE_TARGETS["S3"]["amount"] == 680_316
    assert STAGE_TARGETS["S1"]["ratio"] == "1:1"
    assert STAGE_TARGETS["S2"]["ratio"] == "1:1"
    assert STAGE_TARGETS["S3"]["ratio"] == "5:1"


def test_spec_validation():
    with pytest.raises(CurriculumError):
        CurriculumSpec("X", min_gpt=0)
    with pytest.raises(CurriculumError):
        CurriculumSpec("X", max_epe=0.0)
    with pytest.raises(CurriculumError):
        CurriculumSpec("X", static_real_ratio=Fraction(-1, 2))
    with pytest.raises(CurriculumError):
        CurriculumSpec("X", target_size=-5)


def test_build_set_requires_accepted_scored_records():
    bad_stage = accepted(SourceKind.REAL_VIDEO, "x", 5, 0.1)
    bad_stage.stage = Stage.PROPAGATED
    with pytest.raises(CurriculumError):
        build_set([bad_stage], default_spec("S1"))

    unscored = accepted(SourceKind.REAL_VIDEO, "y", 5, 0.1)
    unscored.scores = ScoreCard(verdict=Verdict.ACCEPT)
    with pytest.raises(CurriculumError):
        build_set([unscored], default_spec("S1"))


def test_s1_keeps_everything_and_reports_mix():
    records = pool(n_static=3, n_real=5)
    subset, header = build_set(records, default_spec("S1"))
    assert len(subset) == 8
    assert header["curriculum"] == "S1"
    assert header["thresholds"]["min_gpt"] == 1
    assert header["thresholds"]["max_epe"] is None
    assert header["target"] == STAGE_TARGETS["S1"]
    assert header["achieved"]["count"] == 8
    assert header["achieved"]["static"] == 3
    assert header["achieved"]["real"] == 5
    assert header["achieved"]["ratio"] == "3:5"
    assert header["achieved"]["mean_gpt"] == 5.0
    assert header["achieved"]["mean_epe"] == pytest.approx(0.2)


def test_thresholds_drop_low_quality_records():
    keep = accepted(SourceKind.REAL_VIDEO, "good", 5, 0.2)
    low_gpt = accepted(SourceKind.REAL_VIDEO, "lowgpt", 3, 0.2)
    high_epe = accepted(SourceKind.REAL_VIDEO, "highepe", 5, 2.0)
    boundary = accepted(SourceKind.REAL_VIDEO, "boundary", 4, 1.0)
    spec = CurriculumSpec("X", min_gpt=4, max_epe=1.0)
    subset, _ = build_set([keep, low_gpt, high_epe, boundary], spec)
    assert {rec.origin for rec in subset} == {"good", "boundary"}  # inclusive bounds


def test_ratio_enforced_exactly_by_subsampling():
    records = pool(n_static=10, n_real=4)
    subset, header = build_set(records, default_spec("S2"), seed=1)
    assert header["achieved"]["static"] == header["achieved"]["real"] == 4
    assert header["achieved"]["ratio"] == "1:1"

    subset, header = build_set(pool(n_static=25, n_real=3), default_spec("S3"), seed=1)
    assert header["achieved"]["static"] == 15
    assert header["achieved"]["real"] == 3
    assert header["achieved"]["ratio"] == "5:1"


def test_zero_ratio_means_no_statics():
    spec = CurriculumSpec("real-only", static_real_ratio=Fraction(0, 1))
    subset, header = build_set(pool(n_static=5, n_real=5), spec)
    assert header["achieved"]["static"] == 0
    assert header["achieved"]["real"] == 5
    assert header["achieved"]["ratio"] == "0:1"


def test_infeasible_ratio_raises():
    only_real = pool(n_static=0, n_real=4)
    with pytest.raises(CurriculumError):
        build_set(only_real, default_spec("S2"))
    only_static = pool(n_static=4, n_real=0)
    with pytest.raises(CurriculumError):
        build_set(only_static, default_spec("S2"))


def test_target_size_truncates_preserving_ratio():
    records = pool(n_static=30, n_real=30)
    spec = CurriculumSpec("cap", static_real_ratio=Fraction(1, 1), target_size=10)
    subset, header = build_set(records, spec, seed=3)
    assert header["achieved"]["count"] == 10
    assert header["achieved"]["static"] == 5
    assert header["achieved"]["real"] == 5

    free = CurriculumSpec("cap-free", target_size=7)
    subset, header = build_set(records, free, seed=3)
    assert header["achieved"]["count"] == 7


def test_selection_is_seeded_and_order_independent():
    records = pool(n_static=20, n_real=10)
    a, _ = build_set(records, default_spec("S2"), seed=9)
    b, _ = build_set(list(reversed(records)), default_spec("S2"), seed=9)
    c, _ = build_set(records, default_spec("S2"), seed=10)
    assert [r.id for r in a] == [r.id for r in b]
    assert [r.id for r in a] != [r.id for r in c]
    assert [r.id for r in a] == sorted(r.id for r in a)


def test_write_subset_roundtrips_through_manifest(tmp_path):
    records = pool(n_static=4, n_real=4)
    subset, header = build_set(records, default_spec("S2"), seed=0)
    path = str(tmp_path / "s2.jsonl")
    write_subset(path, subset, header)
    manifest = Manifest.open(path)
    assert manifest.metadata()["curriculum"] == "S2"
    assert manifest.metadata()["target"]["amount"] == 226_772
    assert [r.id for r in manifest.scan()] == [r.id for r in subset]


def test_ratio_sweep_report_isolates_the_mix():
    records = pool(n_static=40, n_real=10)
    ratios = [Fraction(1, 1), Fraction(3, 1), Fraction(5, 1)]
    reports = ratio_sweep_report(records, ratios, seed=2)
    assert [r["curriculum"] for r in reports] == ["ratio-1:1", "ratio-3:1", "ratio-5:1"]
    for report, ratio in zip(reports, ratios):
        achieved = report["achieved"]
        assert achieved["static"] == achieved["real"] * ratio
        assert report["thresholds"]["min_gpt"] == 4
        assert report["thresholds"]["max_epe"] == 1.0


def test_training_configs_per_stage():
    s1 = emit_training_config("S1")
    s2 = emit_training_config("S2")
    s3 = emit_training_config("S3")
    assert (s1.iterations, s2.iterations, s3.iterations) == (20_000, 10_000, 10_000)
    assert s1.iterations + s2.iterations + s3.iterations == 40_000
    # the perceptual term turns on only in the last stage, evenly weighted
    assert (s1.loss_perceptual, s2.loss_perceptual, s3.loss_perceptual) == (0.0, 0.0, 0.5)
    assert s3.loss_reconstruction == 0.5
    assert s1.loss_reconstruction == 1.0
    for config in (s1, s2, s3):
        assert config.batch_size == 128
        assert config.adapter_rank == 128
        assert config.learning_rate == 1e-3
        assert config.betas == (0.9, 0.95)
        assert config.weight_decay == 1e-5
        assert config.ema_decay == 0.9999
        assert (config.crop_width, config.crop_height) == (720, 480)
        assert (config.source_width, config.source_height) == (1024, 576)
        assert config.condition_dropout_p == 0.05
    with pytest.raises(CurriculumError):
        emit_training_config("S9")


def test_training_config_text_is_line_per_field():
    text = emit_training_config("S3").to_text()
    assert "stage = S3" in text
    assert "iterations = 10000" in text
    assert "loss_perceptual = 0.5" in text
    assert text.endswith("\n")
    assert len(text.strip().splitlines()) == 16
