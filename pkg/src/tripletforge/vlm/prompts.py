"""Prompt construction for the vision-language judge.

Templates live as resource files next to this module; the judge-facing
ones are fixed texts with at most an ``{instruction}`` slot, substituted
literally (the templates contain other brace groups, like
``{'source_url'}``, that must survive untouched — so no str.format here).
Images always travel as an ordered reference list beside the text.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources


class PromptError(Exception):
    pass


class Schema(str, Enum):
    BEST_IMAGE = "best_image"
    SCORE = "score"
    CAPTION = "caption"
    INSTRUCTION = "instruction"


def load_template(name: str) -> str:
    ref = resources.files(__package__) / "templates" / f"{name}.txt"
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise PromptError(f"unknown template: {name}") from exc


def fill(template: str, **slots: str) -> str:
    """Replace ``{key}`` placeholders literally, leaving all other braces."""
    text = template
    for key, value in slots.items():
        marker = "{" + key + "}"
        if marker not in text:
            raise PromptError(f"template has no slot {marker}")
        text = text.replace(marker, value)
    return text


@dataclass(frozen=True)
class VlmRequest:
    """One chat call: fixed system text, filled user text, image refs."""

    system_prompt: str
    user_prompt: str
    images: tuple[str, ...]
    expected_schema: Schema


def _require_instruction(instruction: str) -> None:
    if not instruction or not instruction.strip():
        raise PromptError("instruction required")


SCREENING_CANDIDATES = 6
FILTER_FRAMES_PER_CLIP = 3


def build_screening_request(
    source_frame: str, candidates: list[str], instruction: str
) -> VlmRequest:
    """Pick-the-best request over one source frame and six edit candidates."""
    _require_instruction(instruction)
    if len(candidates) != SCREENING_CANDIDATES:
        raise PromptError(
            f"screening needs exactly {SCREENING_CANDIDATES} candidates, "
            f"got {len(candidates)}"
        )
    return VlmRequest(
        system_prompt=load_template("screening_system"),
        user_prompt=fill(load_template("screening_user"), instruction=instruction),
        images=(source_frame, *candidates),
        expected_schema=Schema.BEST_IMAGE,
    )


def build_filter_request(
    src_frames: list[str], edit_frames: list[str], instruction: str
) -> VlmRequest:
    """Quality-score request over three frames from each clip."""
    _require_instruction(instruction)
    if len(src_frames) != FILTER_FRAMES_PER_CLIP or len(edit_frames) != FILTER_FRAMES_PER_CLIP:
        raise PromptError(
            f"filtering needs {FILTER_FRAMES_PER_CLIP} frames per clip, got "
            f"{len(src_frames)} + {len(edit_frames)}"
        )
    return VlmRequest(
        system_prompt=load_template("filtering_system"),
        user_prompt=fill(load_template("filtering_user"), instruction=instruction),
        images=(*src_frames, *edit_frames),
        expected_schema=Schema.SCORE,
    )


class BenchmarkKind(str, Enum):
    TEMPORAL = "temporal"
    TEXTUAL = "textual"
    QUALITY = "quality"


def build_benchmark_request(
    kind: BenchmarkKind,
    src_frames: list[str],
    edit_frames: list[str],
    instruction: str,
) -> VlmRequest:
    """Benchmark-time judge request over ALL frames of both clips.

    Unlike construction-time filtering (three frames per clip), the
    benchmark sends every frame. The quality variant reuses the filtering
    prompt text unchanged, so its wording mentions three frames while the
    request carries n+n — a deliberate reuse, kept as is.
    """
    _require_instruction(instruction)
    if not src_frames:
        raise PromptError("benchmark needs at least one frame per clip")
    if len(src_frames) != len(edit_frames):
        raise PromptError(
            f"benchmark needs equal frame counts, got "
            f"{len(src_frames)} vs {len(edit_frames)}"
        )
    names = {
        BenchmarkKind.TEMPORAL: ("temporal_system", "temporal_user"),
        BenchmarkKind.TEXTUAL: ("textual_system", "textual_user"),
        BenchmarkKind.QUALITY: ("filtering_system", "filtering_user"),
    }
    system_name, user_name = names[BenchmarkKind(kind)]
    return VlmRequest(
        system_prompt=load_template(system_name),
        user_prompt=fill(load_template(user_name), instruction=instruction),
        images=(*src_frames, *edit_frames),
        expected_schema=Schema.SCORE,
    )


# -- recaptioning / instruction generation --------------------------------
#
# These run in three stages: describe each keyframe, summarize into one
# refined caption, then derive an editing instruction from the caption.
# Later stages need earlier responses, so each stage has its own builder.


def build_keyframe_caption_request(frame: str, initial_caption: str) -> VlmRequest:
    return VlmRequest(
        system_prompt=load_template("keyframe_caption_system"),
        user_prompt=fill(load_template("keyframe_caption_user"),
                         initial_caption=initial_caption),
        images=(frame,),
        expected_schema=Schema.CAPTION,
    )


def build_summary_caption_request(
    initial_caption: str, keyframe_captions: list[str]
) -> VlmRequest:
    if len(keyframe_captions) != 3:
        raise PromptError(
            f"summary stage expects 3 keyframe captions, got {len(keyframe_captions)}"
        )
    joined = " ".join(keyframe_captions)
    return VlmRequest(
        system_prompt=load_template("summary_caption_system"),
        user_prompt=fill(load_template("summary_caption_user"),
                         initial_caption=initial_caption,
                         keyframe_captions=joined),
        images=(),
        expected_schema=Schema.CAPTION,
    )


def build_instruction_request(caption: str) -> VlmRequest:
    if not caption or not caption.strip():
        raise PromptError("caption required")
    return VlmRequest(
        system_prompt=load_template("instruct_system"),
        user_prompt=fill(load_template("instruct_user"), caption=caption),
        images=(),
        expected_schema=Schema.INSTRUCTION,
    )


def build_recaption_requests(
    keyframes: list[str], initial_caption: str
) -> list[VlmRequest]:
    """Stage-1 requests of the recaption flow: one per keyframe."""
    if len(keyframes) < 3:
        raise PromptError(f"recaptioning needs 3 keyframes, got {len(keyframes)}")
    return [build_keyframe_caption_request(frame, initial_caption) for frame in keyframes]
