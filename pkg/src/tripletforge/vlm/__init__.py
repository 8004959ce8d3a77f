"""Vision-language judge: prompt building, dispatch, response parsing."""
from .gateway import (
    ChatBackend,
    DispatchFailed,
    RetryPolicy,
    TransportError,
    VlmVerdict,
    dispatch,
)
from .parsing import VlmParseError, parse_best_image, parse_score, parse_text
from .prompts import (
    BenchmarkKind,
    FILTER_FRAMES_PER_CLIP,
    PromptError,
    SCREENING_CANDIDATES,
    Schema,
    VlmRequest,
    build_benchmark_request,
    build_filter_request,
    build_instruction_request,
    build_keyframe_caption_request,
    build_recaption_requests,
    build_screening_request,
    build_summary_caption_request,
    fill,
    load_template,
)

__all__ = [
    "BenchmarkKind",
    "ChatBackend",
    "DispatchFailed",
    "FILTER_FRAMES_PER_CLIP",
    "PromptError",
    "RetryPolicy",
    "SCREENING_CANDIDATES",
    "Schema",
    "TransportError",
    "VlmParseError",
    "VlmRequest",
    "VlmVerdict",
    "build_benchmark_request",
    "build_filter_request",
    "build_instruction_request",
    "build_keyframe_caption_request",
    "build_recaption_requests",
    "build_screening_request",
    "build_summary_caption_request",
    "dispatch",
    "fill",
    "load_template",
    "parse_best_image",
    "parse_score",
    "parse_text",
]
