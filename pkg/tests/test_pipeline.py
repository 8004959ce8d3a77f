import hashlib
import os
from dataclasses import replace

import numpy as np
import pytest

from tripletforge.config import build_backends
from tripletforge.manifest import Manifest
from tripletforge.media import ClipFrames, Frame, MediaError, read_clip
from tripletforge.pipeline import (
    MANIFEST_NAME,
    PipelineError,
    Runner,
    normalize_clip,
    normalize_frame,
    run_image_pair_branch,
    run_real_video_branch,
    run_static_branch,
)
from tripletforge.records import SourceKind, Stage, Verdict, validate_triplet
from tripletforge.synthetic import make_demo_corpus
from tripletforge.vlm.gateway import RetryPolicy

from conftest import make_clip, make_frame

SMALL = {"output": {"width": 64, "height": 36, "frames": 3}}


def small_corpus(tmp_path, n_real=0, n_pairs=0, n_static=0, seed=0):
    return make_demo_corpus(
        str(tmp_path / "corpus"), n_real=n_real, n_pairs=n_pairs,
        n_static=n_static, seed=seed, frame_size=(64, 36), n_frames=3,
    )


def stages_seen(runner, rec_id):
    log = [rec for rec in Manifest.open(runner.manifest_path()).scan_log()
           if rec.id == rec_id]
    return [rec.stage for rec in log]


def test_normalize_frame_passes_through_at_target_size():
    frame = make_frame(64, 36)
    assert normalize_frame(frame, 64, 36) is frame
    resized = normalize_frame(make_frame(100, 80), 64, 36)
    assert (resized.width, resized.height) == (64, 36)


def test_normalize_clip_trims_and_resizes():
    clip = make_clip(100, 80, 5)
    out = normalize_clip(clip, 64, 36, 3)
    assert len(out) == 3
    assert (out.width, out.height) == (64, 36)
    with pytest.raises(MediaError):
        normalize_clip(clip, 64, 36, 9)


def test_real_video_branch_stage_flow_and_call_counts(small_runner, tmp_path, mock_backends):
    corpus = small_corpus(tmp_path, n_real=1)
    runner = small_runner(**SMALL)
    runner.backends = mock_backends

    counts = runner.ingest_corpus(corpus)
    assert counts == {"real_video": 1, "image_pair": 0, "static_image": 0, "skipped": 0}
    rec = runner.manifest().scan()[0]
    assert rec.source_kind is SourceKind.REAL_VIDEO
    assert rec.stage is Stage.INGESTED
    assert rec.caption  # seeded from corpus caption.txt

    runner.run_waves()
    final = runner.manifest().get(rec.id)
    assert final.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)
    assert stages_seen(runner, rec.id) == [
        Stage.INGESTED, Stage.CAPTIONED, Stage.FIRST_FRAME_EDITED,
        Stage.SCREENED, Stage.PROPAGATED, final.stage,
    ]
    assert final.instruction
    assert final.scores.best_cfg in runner.config.sweep.text_scales
    assert final.scores.gpt_score in (1, 2, 3, 4, 5)
    assert final.scores.epe >= 0.0
    assert final.scores.verdict is (
        Verdict.ACCEPT if final.stage is Stage.FILTERED_ACCEPT else Verdict.REJECT)
    assert validate_triplet(final, 64, 36, 3).ok

    # caption takes 5 chat calls; screening 1; filtering 1
    assert mock_backends.chat.meter.calls == 7
    assert mock_backends.editor.meter.calls == len(runner.config.sweep)
    assert mock_backends.propagator.meter.calls == 1
    assert mock_backends.i2v.meter.calls == 0
    # two clips, adjacent-frame pairs each
    assert mock_backends.flow.meter.calls == 2 * (3 - 1)

    edited = read_clip(runner._abs(final.edited_clip.path))
    assert (edited.width, edited.height, len(edited)) == (64, 36, 3)


def test_image_pair_branch_uses_i2v_and_skips_screening(small_runner, tmp_path, mock_backends):
    corpus = small_corpus(tmp_path, n_pairs=1)
    runner = small_runner(**SMALL)
    runner.backends = mock_backends

    runner.ingest_corpus(corpus)
    rec = runner.manifest().scan()[0]
    assert rec.source_kind is SourceKind.IMAGE_PAIR
    assert rec.stage is Stage.CAPTIONED  # instruction ships with the pair
    assert rec.instruction

    runner.run_waves()
    final = runner.manifest().get(rec.id)
    assert final.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)
    assert stages_seen(runner, rec.id) == [
        Stage.CAPTIONED, Stage.PROPAGATED, final.stage]
    assert final.scores.best_cfg is None  # no sweep on this branch
    assert mock_backends.chat.meter.calls == 1      # filtering judge only
    assert mock_backends.editor.meter.calls == 0
    assert mock_backends.i2v.meter.calls == 1
    assert mock_backends.propagator.meter.calls == 1
    assert validate_triplet(final, 64, 36, 3).ok

    source = read_clip(runner._abs(final.source_clip.path))
    assert (source.width, source.height, len(source)) == (64, 36, 3)


def test_static_branch_synthesizes_without_propagator(small_runner, tmp_path, mock_backends):
    corpus = small_corpus(tmp_path, n_static=1)
    runner = small_runner(**SMALL)
    runner.backends = mock_backends

    runner.ingest_corpus(corpus)
    rec = runner.manifest().scan()[0]
    assert rec.source_kind is SourceKind.STATIC_IMAGE
    assert rec.motion  # camera motion assigned at ingest

    runner.run_waves()
    final = runner.manifest().get(rec.id)
    assert final.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)
    assert stages_seen(runner, rec.id) == [
        Stage.INGESTED, Stage.CAPTIONED, Stage.FIRST_FRAME_EDITED,
        Stage.SCREENED, Stage.PROPAGATED, final.stage,
    ]
    assert mock_backends.propagator.meter.calls == 0  # camera synthesis is native
    assert mock_backends.i2v.meter.calls == 0
    assert final.scores.best_cfg in runner.config.sweep.text_scales
    assert validate_triplet(final, 64, 36, 3).ok

    # both rendered clips share the camera path frame count
    source = read_clip(runner._abs(final.source_clip.path))
    edited = read_clip(runner._abs(final.edited_clip.path))
    assert len(source) == len(edited) == 3


def test_ingest_is_idempotent(small_runner, tmp_path):
    corpus = small_corpus(tmp_path, n_real=1, n_pairs=1, n_static=1)
    runner = small_runner(**SMALL)
    first = runner.ingest_corpus(corpus)
    assert first["skipped"] == 0
    again = runner.ingest_corpus(corpus)
    assert again == {"real_video": 0, "image_pair": 0, "static_image": 0, "skipped": 3}
    assert len(runner.manifest().scan()) == 3


def test_pair_without_instruction_rejected(small_runner, tmp_path):
    corpus = small_corpus(tmp_path, n_pairs=1)
    os.remove(os.path.join(corpus, "image_pairs",
                           os.listdir(os.path.join(corpus, "image_pairs"))[0],
                           "instruction.txt"))
    runner = small_runner(**SMALL)
    with pytest.raises(PipelineError):
        runner.ingest_corpus(corpus)


def test_backend_failure_parks_record_and_run_continues(small_runner, tmp_path):
    corpus = small_corpus(tmp_path, n_real=1, n_pairs=1)
    runner = small_runner(**SMALL)
    runner.retry = RetryPolicy(attempts=1)

    class DownChat:
        def complete(self, system_prompt, user_prompt, images):
            from tripletforge.vlm.gateway import TransportError
            raise TransportError("judge offline")

    runner.backends = replace(runner.backends, chat=DownChat())
    runner.ingest_corpus(corpus)
    runner.run_waves()

    records = {rec.source_kind: rec for rec in runner.manifest().scan()}
    real = records[SourceKind.REAL_VIDEO]
    assert real.stage is Stage.INGESTED          # stuck before captioning
    assert "caption" in real.error
    pair = records[SourceKind.IMAGE_PAIR]
    assert pair.stage is Stage.PROPAGATED        # propagation needs no judge
    assert "filter" in pair.error

    progress = runner.progress()
    assert progress["errors"] == 2
    assert progress["total"] == 2

    # the judge comes back: resume clears errors and finishes both
    runner.backends = build_backends(runner.config)
    runner.resume()
    finished = runner.manifest().scan()
    assert all(rec.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)
               for rec in finished)
    assert all(rec.error is None for rec in finished)


def test_resume_after_terminal_is_a_no_op(small_runner, tmp_path, mock_backends):
    corpus = small_corpus(tmp_path, n_static=1)
    runner = small_runner(**SMALL)
    runner.backends = mock_backends
    runner.run_all(corpus)
    before = mock_backends.chat.meter.calls
    runner.resume()
    assert mock_backends.chat.meter.calls == before


def test_fresh_runner_resumes_from_disk(small_runner, small_config, tmp_path, mock_backends):
    corpus = small_corpus(tmp_path, n_real=1)
    first = small_runner(**SMALL)
    first.backends = mock_backends
    first.ingest_corpus(corpus)
    first.wave_caption()
    first.wave_edit()
    calls_before = mock_backends.chat.meter.calls
    assert calls_before == 5  # captioning only so far

    config = small_config(**SMALL)
    second = Runner(config, build_backends(config))
    second.run_waves()
    final = second.manifest().scan()[0]
    assert final.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)
    # the first runner's mocks saw no further traffic
    assert mock_backends.chat.meter.calls == calls_before


def manifest_digest(runner):
    with open(runner.manifest_path(), "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_two_same_seed_runs_write_identical_manifests(small_config, tmp_path):
    corpus = make_demo_corpus(str(tmp_path / "corpus"), n_real=1, n_pairs=1,
                              n_static=1, seed=5, frame_size=(64, 36), n_frames=3)
    digests = []
    for attempt in ("a", "b"):
        config = small_config(workdir=str(tmp_path / attempt), **SMALL)
        runner = Runner(config, build_backends(config))
        runner.run_all(corpus)
        digests.append(manifest_digest(runner))
    assert digests[0] == digests[1]


def test_single_record_conveniences(small_runner, small_config, tmp_path):
    corpus = small_corpus(tmp_path, n_real=1, n_pairs=1, n_static=1)
    real_name = os.listdir(os.path.join(corpus, "real_videos"))[0]
    pair_name = os.listdir(os.path.join(corpus, "image_pairs"))[0]
    static_name = os.listdir(os.path.join(corpus, "static_images"))[0]

    runner = small_runner(**SMALL)
    real = run_real_video_branch(runner, corpus, real_name)
    assert real.source_kind is SourceKind.REAL_VIDEO
    assert real.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)

    pair = run_image_pair_branch(runner, corpus, pair_name)
    assert pair.source_kind is SourceKind.IMAGE_PAIR
    assert pair.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)

    static = run_static_branch(runner, corpus, static_name)
    assert static.source_kind is SourceKind.STATIC_IMAGE
    assert static.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT)

    with pytest.raises(PipelineError):
        run_real_video_branch(runner, corpus, "no_such_video")


def test_oversize_sources_are_normalized(small_runner, tmp_path):
    corpus = make_demo_corpus(str(tmp_path / "corpus"), n_real=1, n_pairs=1,
                              n_static=1, seed=2, frame_size=(64, 36), n_frames=3,
                              oversize_first=True)
    runner = small_runner(**SMALL)
    runner.run_all(corpus)
    for rec in runner.manifest().scan():
        assert rec.stage in (Stage.FILTERED_ACCEPT, Stage.FILTERED_REJECT), rec.error
        assert (rec.source_clip.width, rec.source_clip.height) == (64, 36)
        assert validate_triplet(rec, 64, 36, 3).ok


def test_manifest_carries_config_identity(small_runner):
    runner = small_runner(**SMALL)
    man = runner.manifest()
    assert man.metadata()["name"] == "triplet-run"
    assert len(man.metadata()["config"]) == 16
    assert os.path.basename(runner.manifest_path()) == MANIFEST_NAME
