"""End-to-end orchestration of the three triplet-construction branches.

The run advances the whole manifest wave by wave (caption → first-frame
edit → screen → propagate/synthesize → filter), checkpointing every
record after each stage so an interrupted run resumes from exactly where
it stopped. Records are processed in parallel inside a wave; manifest
writes happen afterwards in manifest order, which keeps output files
byte-identical run to run.

Branch shapes by source kind:
  real_video:   caption → sweep-edit → screen → propagate → filter
  image_pair:   (instruction ships with the pair) → i2v + propagate → filter
  static_image: caption → sweep-edit → screen → camera-motion synth → filter
"""
from __future__ import annotations

import json
import os
import shutil
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .backends import (
    BackendError,
    checked_edit_image,
    checked_estimate_flow,
    checked_image_to_video,
    checked_propagate,
)
from .camera import CameraError, CameraMotion, crop_rect_to_aspect, CropRect, bilinear_resample, synth_static_pair
from .config import BackendSet, PipelineConfig, config_hash
from .flowmetrics import ClipFlow, FlowMetricError, clip_epe
from .guidance import scale_for_choice, sweep_requests
from .manifest import Manifest, ManifestError
from .media import (
    SIDECAR_NAME,
    ClipFrames,
    Frame,
    MediaError,
    decode_frame_png,
    encode_frame_png,
    frame_path,
    keyframe_indices,
    read_clip,
    read_frame,
    read_sidecar,
    write_clip,
)
from .records import (
    ClipRef,
    ScoreCard,
    SourceKind,
    Stage,
    TripletRecord,
    Verdict,
    record_id,
    validate_triplet,
)
from .runlog import log_event
from .vlm import (
    DispatchFailed,
    PromptError,
    RetryPolicy,
    TransportError,
    build_filter_request,
    build_instruction_request,
    build_recaption_requests,
    build_screening_request,
    build_summary_caption_request,
    dispatch,
)

MANIFEST_NAME = "manifest.jsonl"

MOTION_ROTATION = tuple(CameraMotion)

_PARKABLE = (DispatchFailed, TransportError, BackendError, MediaError,
              FlowMetricError, PromptError, CameraError, ManifestError)


class PipelineError(Exception):
    pass


def normalize_clip(clip: ClipFrames, out_w: int, out_h: int, n_frames: int) -> ClipFrames:
    """Fit a source clip to the dataset geometry.

    Takes the first ``n_frames`` frames, center-crops each to the output
    aspect, and bilinear-resamples to the output size. Frames already at
    the target size pass through untouched.
    """
    if len(clip) < n_frames:
        raise MediaError(f"clip has {len(clip)} frames, need {n_frames}")
    frames = []
    for frame in clip.frames[:n_frames]:
        frames.append(normalize_frame(frame, out_w, out_h))
    return ClipFrames(frames, fps=clip.fps)


def normalize_frame(frame: Frame, out_w: int, out_h: int) -> Frame:
    if (frame.width, frame.height) == (out_w, out_h):
        return frame
    full = CropRect(0.0, 0.0, float(frame.width), float(frame.height))
    fitted = crop_rect_to_aspect(full, out_w, out_h)
    return Frame(bilinear_resample(frame.pixels, fitted, out_w, out_h))


@dataclass
class WaveReport:
    processed: int = 0
    parked: int = 0


class Runner:
    """Drives one workdir: ingest, the five waves, and resume."""

    def __init__(self, config: PipelineConfig, backends: BackendSet):
        self.config = config
        self.backends = backends
        self.retry = RetryPolicy()

    # -- paths ----------------------------------------------------------

    def _abs(self, rel: str) -> str:
        return os.path.join(self.config.workdir, rel)

    def _clip_rel(self, rec_id: str, leaf: str) -> str:
        return os.path.join("clips", rec_id, leaf)

    def manifest_path(self) -> str:
        return self._abs(MANIFEST_NAME)

    def manifest(self) -> Manifest:
        path = self.manifest_path()
        if os.path.exists(path):
            return Manifest.open(path)
        return Manifest.create(path, metadata={
            "name": "triplet-run",
            "created_at": self.config.created_at,
            "config": config_hash(self.config),
        })

    # -- ingest ---------------------------------------------------------

    def ingest_corpus(self, corpus_dir: str) -> dict[str, int]:
        """Register every source in a corpus directory.

        Layout: ``real_videos/<name>/`` frame dirs, ``image_pairs/<name>/``
        with source.png + edited.png + instruction.txt, and
        ``static_images/<name>/`` one-frame dirs. Optional caption.txt
        files seed the initial captions. Already-ingested ids are skipped,
        so ingest is idempotent.
        """
        man = self.manifest()
        known = {rec.id for rec in man.scan()}
        counts = {"real_video": 0, "image_pair": 0, "static_image": 0, "skipped": 0}
        static_index = 0

        for name in _sorted_subdirs(os.path.join(corpus_dir, "real_videos")):
            origin = f"real_videos/{name}"
            rec_id = record_id(SourceKind.REAL_VIDEO, origin)
            if rec_id in known:
                counts["skipped"] += 1
                continue
            rel = self._clip_rel(rec_id, "source")
            src_dir = os.path.join(corpus_dir, origin)
            if not self._copy_conforming_clip(src_dir, self._abs(rel)):
                clip = read_clip(src_dir)
                normalized = normalize_clip(clip, self.config.out_width,
                                            self.config.out_height, self.config.out_frames)
                write_clip(normalized, self._abs(rel))
            man.append(TripletRecord(
                id=rec_id,
                source_kind=SourceKind.REAL_VIDEO,
                source_clip=ClipRef(rel, self.config.out_width,
                                    self.config.out_height, self.config.out_frames),
                origin=origin,
                caption=_read_optional(os.path.join(corpus_dir, origin, "caption.txt")),
                stage=Stage.INGESTED,
            ))
            counts["real_video"] += 1

        for name in _sorted_subdirs(os.path.join(corpus_dir, "image_pairs")):
            origin = f"image_pairs/{name}"
            base = os.path.join(corpus_dir, origin)
            instruction = _read_optional(os.path.join(base, "instruction.txt"))
            if not instruction:
                raise PipelineError(f"image pair {origin} has no instruction.txt")
            rec_id = record_id(SourceKind.IMAGE_PAIR, origin, instruction)
            if rec_id in known:
                counts["skipped"] += 1
                continue
            source = _load_image(os.path.join(base, "source.png"))
            edited = _load_image(os.path.join(base, "edited.png"))
            src_rel = self._clip_rel(rec_id, "input_source")
            edit_rel = self._clip_rel(rec_id, "input_edited")
            write_clip(ClipFrames([source]), self._abs(src_rel))
            write_clip(ClipFrames([edited]), self._abs(edit_rel))
            man.append(TripletRecord(
                id=rec_id,
                source_kind=SourceKind.IMAGE_PAIR,
                source_clip=ClipRef(src_rel, source.width, source.height, 1),
                origin=origin,
                instruction=instruction,
                stage=Stage.CAPTIONED,
            ))
            counts["image_pair"] += 1

        for name in _sorted_subdirs(os.path.join(corpus_dir, "static_images")):
            origin = f"static_images/{name}"
            rec_id = record_id(SourceKind.STATIC_IMAGE, origin)
            motion = MOTION_ROTATION[static_index % len(MOTION_ROTATION)]
            static_index += 1
            if rec_id in known:
                counts["skipped"] += 1
                continue
            image = _load_image(os.path.join(corpus_dir, origin, "image.png"))
            rel = self._clip_rel(rec_id, "input")
            write_clip(ClipFrames([image]), self._abs(rel))
            man.append(TripletRecord(
                id=rec_id,
                source_kind=SourceKind.STATIC_IMAGE,
                source_clip=ClipRef(rel, image.width, image.height, 1),
                origin=origin,
                caption=_read_optional(os.path.join(corpus_dir, origin, "caption.txt")),
                motion=motion.value,
                stage=Stage.INGESTED,
            ))
            counts["static_image"] += 1

        log_event("ingest", **counts)
        return counts

    def _copy_conforming_clip(self, src_dir: str, dst_dir: str) -> bool:
        """File-copy a source clip that already has the output geometry.

        Returns False when the clip needs the decode/normalize/encode
        path instead. Skipping the image codec here is a large win for
        corpora delivered at dataset resolution.
        """
        try:
            meta = read_sidecar(src_dir)
        except (MediaError, ValueError):
            return False
        if (int(meta.get("width", -1)), int(meta.get("height", -1))) != (
                self.config.out_width, self.config.out_height):
            return False
        if int(meta.get("n_frames", -1)) < self.config.out_frames:
            return False
        os.makedirs(dst_dir, exist_ok=True)
        for index in range(self.config.out_frames):
            src_frame = frame_path(src_dir, index)
            if not os.path.exists(src_frame):
                raise MediaError(f"missing frame file: {src_frame}")
            shutil.copyfile(src_frame, frame_path(dst_dir, index))
        trimmed = {
            "width": self.config.out_width,
            "height": self.config.out_height,
            "n_frames": self.config.out_frames,
            "fps": float(meta.get("fps", 8.0)),
        }
        with open(os.path.join(dst_dir, SIDECAR_NAME), "w", encoding="utf-8") as fh:
            json.dump(trimmed, fh, sort_keys=True)
            fh.write("\n")
        return True

    # -- wave engine ----------------------------------------------------

    def _run_wave(self, label: str, input_stage: Stage, kinds: Iterable[SourceKind],
                  fn) -> WaveReport:
        man = self.manifest()
        kinds = set(kinds)
        todo = [rec for rec in man.scan()
                if rec.stage is input_stage and rec.source_kind in kinds]
        report = WaveReport()
        if not todo:
            return report

        def safe(rec: TripletRecord) -> TripletRecord:
            try:
                updated = fn(rec)
                updated.error = None
                return updated
            except _PARKABLE as exc:
                parked = replace(rec, error=f"{label}: {exc}")
                return parked

        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(safe, todo))
        else:
            results = [safe(rec) for rec in todo]

        for updated in results:
            man.checkpoint(updated)
            report.processed += 1
            if updated.error:
                report.parked += 1
        log_event("wave", name=label, processed=report.processed, parked=report.parked)
        return report

    # -- wave bodies ----------------------------------------------------

    def _chat(self, request):
        return dispatch(request, self.backends.chat, self.retry)

    def _caption_record(self, rec: TripletRecord) -> TripletRecord:
        src_dir = self._abs(rec.source_clip.path)
        picks = keyframe_indices(rec.source_clip.n_frames)
        frames = [frame_path(src_dir, index) for index in picks]
        while len(frames) < 3:
            frames.append(frames[-1])
        initial = rec.caption or ""
        stage1 = build_recaption_requests(frames, initial)
        keyframe_captions = [self._chat(req).caption for req in stage1]
        summary = self._chat(
            build_summary_caption_request(initial, keyframe_captions)).caption
        instruction = self._chat(build_instruction_request(summary)).instruction
        return replace(rec, caption=summary, instruction=instruction,
                       stage=Stage.CAPTIONED)

    def _edit_record(self, rec: TripletRecord) -> TripletRecord:
        src_dir = self._abs(rec.source_clip.path)
        base = read_frame(src_dir, 0)
        requests = sweep_requests(rec.id, frame_path(src_dir, 0), rec.instruction,
                                  self.config.sweep)
        cand_dir = self._abs(self._clip_rel(rec.id, "candidates"))
        os.makedirs(cand_dir, exist_ok=True)
        for request in requests:
            edited = checked_edit_image(self.backends.editor, base,
                                        request.instruction, request.scales.text)
            _save_image(edited, os.path.join(cand_dir, f"cand_{request.choice_index}.png"))
        return replace(rec, stage=Stage.FIRST_FRAME_EDITED)

    def _screen_record(self, rec: TripletRecord) -> TripletRecord:
        src_dir = self._abs(rec.source_clip.path)
        cand_dir = self._abs(self._clip_rel(rec.id, "candidates"))
        candidates = [os.path.join(cand_dir, f"cand_{index}.png")
                      for index in range(len(self.config.sweep))]
        request = build_screening_request(frame_path(src_dir, 0), candidates,
                                          rec.instruction)
        votes = Counter(self._chat(request).best_image
                        for _ in range(self.config.screen_repeats))
        top = max(votes.values())
        choice = min(idx for idx, n in votes.items() if n == top)
        best_cfg = scale_for_choice(self.config.sweep, choice)
        return replace(rec, scores=ScoreCard(best_cfg=best_cfg), stage=Stage.SCREENED)

    def _propagate_record(self, rec: TripletRecord) -> TripletRecord:
        if rec.source_kind is SourceKind.REAL_VIDEO:
            return self._propagate_real(rec)
        if rec.source_kind is SourceKind.IMAGE_PAIR:
            return self._propagate_pair(rec)
        return self._synth_static(rec)

    def _chosen_candidate(self, rec: TripletRecord) -> Frame:
        if rec.scores is None or rec.scores.best_cfg is None:
            raise PipelineError(f"record {rec.id} reached propagation without best_cfg")
        choice = self.config.sweep.text_scales.index(rec.scores.best_cfg)
        path = self._abs(self._clip_rel(rec.id, os.path.join("candidates",
                                                             f"cand_{choice}.png")))
        return _load_image(path)

    def _propagate_real(self, rec: TripletRecord) -> TripletRecord:
        src_clip = read_clip(self._abs(rec.source_clip.path))
        edited_first = self._chosen_candidate(rec)
        edited = checked_propagate(self.backends.propagator, src_clip, edited_first)
        edit_rel = self._clip_rel(rec.id, "edited")
        write_clip(edited, self._abs(edit_rel))
        return replace(rec, edited_clip=ClipRef(edit_rel, edited.width, edited.height,
                                                len(edited)),
                       stage=Stage.PROPAGATED)

    def _propagate_pair(self, rec: TripletRecord) -> TripletRecord:
        cfg = self.config
        source = normalize_frame(read_frame(self._abs(rec.source_clip.path), 0),
                                 cfg.out_width, cfg.out_height)
        edited_still = normalize_frame(
            read_frame(self._abs(self._clip_rel(rec.id, "input_edited")), 0),
            cfg.out_width, cfg.out_height)
        src_clip = checked_image_to_video(self.backends.i2v, source, cfg.out_frames)
        edited = checked_propagate(self.backends.propagator, src_clip, edited_still)
        src_rel = self._clip_rel(rec.id, "source")
        edit_rel = self._clip_rel(rec.id, "edited")
        write_clip(src_clip, self._abs(src_rel))
        write_clip(edited, self._abs(edit_rel))
        return replace(
            rec,
            source_clip=ClipRef(src_rel, src_clip.width, src_clip.height, len(src_clip)),
            edited_clip=ClipRef(edit_rel, edited.width, edited.height, len(edited)),
            stage=Stage.PROPAGATED,
        )

    def _synth_static(self, rec: TripletRecord) -> TripletRecord:
        cfg = self.config
        still = read_frame(self._abs(rec.source_clip.path), 0)
        edited_still = self._chosen_candidate(rec)
        motion = CameraMotion(rec.motion)
        src_clip, edited = synth_static_pair(
            still, edited_still, motion,
            cfg.out_width, cfg.out_height, cfg.out_frames, cfg.min_scale,
        )
        src_rel = self._clip_rel(rec.id, "source")
        edit_rel = self._clip_rel(rec.id, "edited")
        write_clip(src_clip, self._abs(src_rel))
        write_clip(edited, self._abs(edit_rel))
        return replace(
            rec,
            source_clip=ClipRef(src_rel, src_clip.width, src_clip.height, len(src_clip)),
            edited_clip=ClipRef(edit_rel, edited.width, edited.height, len(edited)),
            stage=Stage.PROPAGATED,
        )

    def _filter_record(self, rec: TripletRecord) -> TripletRecord:
        src_dir = self._abs(rec.source_clip.path)
        edit_dir = self._abs(rec.edited_clip.path)
        picks = keyframe_indices(rec.source_clip.n_frames)
        request = build_filter_request(
            [frame_path(src_dir, i) for i in picks],
            [frame_path(edit_dir, i) for i in picks],
            rec.instruction,
        )
        score = self._chat(request).score

        src_clip = read_clip(src_dir)
        edit_clip = read_clip(edit_dir)
        flow = self.backends.flow
        src_fields = [checked_estimate_flow(flow, a, b)
                      for a, b in zip(src_clip.frames, src_clip.frames[1:])]
        edit_fields = [checked_estimate_flow(flow, a, b)
                       for a, b in zip(edit_clip.frames, edit_clip.frames[1:])]
        epe_value = clip_epe(ClipFlow(src_fields), ClipFlow(edit_fields))

        accepted = self.config.policy.accepts(score, epe_value)
        scores = replace(rec.scores or ScoreCard(),
                         gpt_score=score, epe=epe_value,
                         verdict=Verdict.ACCEPT if accepted else Verdict.REJECT)
        stage = Stage.FILTERED_ACCEPT if accepted else Stage.FILTERED_REJECT
        updated = replace(rec, scores=scores, stage=stage)
        report = validate_triplet(updated, self.config.out_width,
                                  self.config.out_height, self.config.out_frames)
        if not report.ok:
            raise PipelineError(
                f"record {rec.id} invalid at filtering: {'; '.join(report.violations)}")
        return updated

    # -- public driving -------------------------------------------------

    def wave_caption(self) -> WaveReport:
        return self._run_wave("caption", Stage.INGESTED,
                              (SourceKind.REAL_VIDEO, SourceKind.STATIC_IMAGE),
                              self._caption_record)

    def wave_edit(self) -> WaveReport:
        return self._run_wave("edit-first-frame", Stage.CAPTIONED,
                              (SourceKind.REAL_VIDEO, SourceKind.STATIC_IMAGE),
                              self._edit_record)

    def wave_screen(self) -> WaveReport:
        return self._run_wave("screen", Stage.FIRST_FRAME_EDITED,
                              (SourceKind.REAL_VIDEO, SourceKind.STATIC_IMAGE),
                              self._screen_record)

    def wave_propagate(self) -> WaveReport:
        """Propagate real-video edits and animate image pairs."""
        report = self._run_wave("propagate", Stage.SCREENED,
                                (SourceKind.REAL_VIDEO,), self._propagate_record)
        pair = self._run_wave("propagate", Stage.CAPTIONED,
                              (SourceKind.IMAGE_PAIR,), self._propagate_record)
        return WaveReport(report.processed + pair.processed,
                          report.parked + pair.parked)

    def wave_synth_static(self) -> WaveReport:
        """Render camera-motion clip pairs for screened static images."""
        return self._run_wave("synth-static", Stage.SCREENED,
                              (SourceKind.STATIC_IMAGE,), self._propagate_record)

    def wave_filter(self) -> WaveReport:
        return self._run_wave("filter", Stage.PROPAGATED, tuple(SourceKind),
                              self._filter_record)

    def run_waves(self) -> dict[str, int]:
        self.wave_caption()
        self.wave_edit()
        self.wave_screen()
        self.wave_propagate()
        self.wave_synth_static()
        self.wave_filter()
        return self.progress()

    def run_all(self, corpus_dir: Optional[str] = None) -> dict[str, int]:
        if corpus_dir:
            self.ingest_corpus(corpus_dir)
        return self.run_waves()

    def resume(self) -> dict[str, int]:
        """Re-drive every non-terminal record from its next stage."""
        return self.run_waves()

    def progress(self) -> dict[str, int]:
        records = self.manifest().scan()
        tally: dict[str, int] = {stage.value: 0 for stage in Stage}
        errors = 0
        for rec in records:
            tally[rec.stage.value] += 1
            if rec.error:
                errors += 1
        tally["errors"] = errors
        tally["total"] = len(records)
        return tally


# -- single-record conveniences -------------------------------------------


def run_real_video_branch(runner: Runner, corpus_dir: str, name: str) -> TripletRecord:
    """Ingest the corpus and drive the named real video to a terminal stage."""
    _run_one(runner, corpus_dir, "real_videos", name)
    rec_id = record_id(SourceKind.REAL_VIDEO, f"real_videos/{name}")
    runner.run_waves()
    return runner.manifest().get(rec_id)


def run_image_pair_branch(runner: Runner, corpus_dir: str, name: str) -> TripletRecord:
    _run_one(runner, corpus_dir, "image_pairs", name)
    base = os.path.join(corpus_dir, "image_pairs", name)
    instruction = _read_optional(os.path.join(base, "instruction.txt"))
    rec_id = record_id(SourceKind.IMAGE_PAIR, f"image_pairs/{name}", instruction)
    runner.run_waves()
    return runner.manifest().get(rec_id)


def run_static_branch(runner: Runner, corpus_dir: str, name: str) -> TripletRecord:
    _run_one(runner, corpus_dir, "static_images", name)
    rec_id = record_id(SourceKind.STATIC_IMAGE, f"static_images/{name}")
    runner.run_waves()
    return runner.manifest().get(rec_id)


def _run_one(runner: Runner, corpus_dir: str, bucket: str, name: str) -> None:
    if not os.path.isdir(os.path.join(corpus_dir, bucket, name)):
        raise PipelineError(f"no {bucket} source named {name} in {corpus_dir}")
    runner.ingest_corpus(corpus_dir)


# -- small helpers --------------------------------------------------------


def _sorted_subdirs(path: str) -> list[str]:
    if not os.path.isdir(path):
        return []
    return sorted(entry for entry in os.listdir(path)
                  if os.path.isdir(os.path.join(path, entry)))


def _read_optional(path: str) -> str:
    if not os.path.exists(path):
        return ""
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().strip()


def _load_image(path: str) -> Frame:
    if not os.path.exists(path):
        raise MediaError(f"missing image: {path}")
    with open(path, "rb") as fh:
        return Frame(decode_frame_png(fh.read()))


def _save_image(frame: Frame, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_frame_png(frame.pixels))
