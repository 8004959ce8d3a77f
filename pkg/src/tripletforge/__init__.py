"""Build, filter, and evaluate instruction-based video-editing triplets.

The package turns three kinds of sources (real videos, image-editing
pairs, static images) into scored (source clip, edited clip,
instruction) training triplets: first-frame edits are generated under a
guidance sweep, screened by a vision-language judge, propagated to full
clips (or synthesized via camera motion for stills), then filtered on
judge score and optical-flow consistency. Curriculum selection and a
benchmark report round out the toolkit. All neural services sit behind
pluggable backends with deterministic local mocks.
"""
from .config import (
    ConfigError,
    FilterPolicy,
    PipelineConfig,
    build_backends,
    parse_config,
)
from .curriculum import (
    CurriculumSpec,
    TrainingConfig,
    build_set,
    default_spec,
    emit_training_config,
)
from .manifest import Manifest, ManifestError, manifest_stats, overall_row
from .pipeline import PipelineError, Runner
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

__version__ = "0.1.0"

__all__ = [
    "ClipRef",
    "ConfigError",
    "CurriculumSpec",
    "FilterPolicy",
    "Manifest",
    "ManifestError",
    "PipelineConfig",
    "PipelineError",
    "Runner",
    "ScoreCard",
    "SourceKind",
    "Stage",
    "TrainingConfig",
    "TripletRecord",
    "Verdict",
    "build_backends",
    "build_set",
    "default_spec",
    "emit_training_config",
    "manifest_stats",
    "overall_row",
    "parse_config",
    "record_id",
    "validate_triplet",
    "__version__",
]
