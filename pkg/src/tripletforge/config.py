"""Run configuration: YAML schema, validation, and backend construction.

The config file carries everything a run needs except the judge-API
credential, which comes only from the ``VLM_API_KEY`` environment
variable. Unknown keys are rejected so typos fail loudly instead of
silently falling back to defaults.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from . import backends as be
from . import httpwire
from .guidance import SweepConfig
from .records import DATASET_FRAME_COUNT, DATASET_HEIGHT, DATASET_WIDTH


class ConfigError(Exception):
    pass


@dataclass
class FilterPolicy:
    """Acceptance thresholds for stage-2 filtering."""

    min_gpt_score: int = 3
    max_epe: float = 2.0

    def __post_init__(self) -> None:
        if self.min_gpt_score not in (1, 2, 3, 4, 5):
            raise ConfigError(f"min_gpt_score must be 1..5, got {self.min_gpt_score}")
        if not self.max_epe > 0:
            raise ConfigError(f"max_epe must be positive, got {self.max_epe}")

    def accepts(self, gpt_score: int, epe: float) -> bool:
        return gpt_score >= self.min_gpt_score and epe <= self.max_epe


_ROLES = ("chat", "image_edit", "propagate", "image_to_video", "flow", "metrics")


@dataclass
class EndpointConfig:
    role: str
    mode: str = "mock"  # mock | http | scripted (chat only)
    url: Optional[str] = None
    fixture: Optional[str] = None
    timeout: float = 60.0
    max_concurrency: int = 4
    values: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in ("mock", "http", "scripted"):
            raise ConfigError(f"endpoint {self.role}: unknown mode {self.mode!r}")
        if self.mode == "http" and not self.url:
            raise ConfigError(f"endpoint {self.role}: http mode requires url")
        if self.mode == "scripted":
            if self.role != "chat":
                raise ConfigError("scripted mode is only available for the chat endpoint")
            if not self.fixture:
                raise ConfigError("scripted chat endpoint requires a fixture path")
        if self.max_concurrency < 1:
            raise ConfigError(f"endpoint {self.role}: max_concurrency must be >= 1")


@dataclass
class PipelineConfig:
    workdir: str = "run"
    seed: int = 0
    created_at: str = "1970-01-01T00:00:00Z"
    out_width: int = DATASET_WIDTH
    out_height: int = DATASET_HEIGHT
    out_frames: int = DATASET_FRAME_COUNT
    sweep: SweepConfig = field(default_factory=SweepConfig)
    min_scale: float = 0.9
    policy: FilterPolicy = field(default_factory=FilterPolicy)
    workers: int = 4
    screen_repeats: int = 1
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)

    def endpoint(self, role: str) -> EndpointConfig:
        return self.endpoints[role]


def _require_type(value: Any, kind: type, path: str) -> Any:
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _reject_unknown(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown key {sorted(unknown)[0]!r}")


def _parse_endpoint(role: str, raw: Any) -> EndpointConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"backends.{role}: expected a mapping")
    _reject_unknown(raw, {"mode", "url", "fixture", "timeout", "max_concurrency", "values"},
                    f"backends.{role}")
    kwargs: dict[str, Any] = {"role": role}
    if "mode" in raw:
        kwargs["mode"] = _require_type(raw["mode"], str, f"backends.{role}.mode")
    if "url" in raw:
        kwargs["url"] = _require_type(raw["url"], str, f"backends.{role}.url")
    if "fixture" in raw:
        kwargs["fixture"] = _require_type(raw["fixture"], str, f"backends.{role}.fixture")
    if "timeout" in raw:
        kwargs["timeout"] = _require_type(raw["timeout"], float, f"backends.{role}.timeout")
    if "max_concurrency" in raw:
        kwargs["max_concurrency"] = _require_type(
            raw["max_concurrency"], int, f"backends.{role}.max_concurrency")
    if "values" in raw:
        values = _require_type(raw["values"], dict, f"backends.{role}.values")
        kwargs["values"] = {str(k): float(v) for k, v in values.items()}
    return EndpointConfig(**kwargs)


def parse_config_data(data: Any, base_dir: str = ".") -> PipelineConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(data, {
        "workdir", "seed", "created_at", "output", "sweep", "video_guidance",
        "min_scale", "policy", "workers", "screen_repeats", "backends",
    }, "config")

    config = PipelineConfig()
    if "workdir" in data:
        config.workdir = _require_type(data["workdir"], str, "workdir")
    if "seed" in data:
        config.seed = _require_type(data["seed"], int, "seed")
    if "created_at" in data:
        config.created_at = _require_type(data["created_at"], str, "created_at")

    output = data.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output: expected a mapping")
    _reject_unknown(output, {"width", "height", "frames"}, "output")
    if "width" in output:
        config.out_width = _require_type(output["width"], int, "output.width")
    if "height" in output:
        config.out_height = _require_type(output["height"], int, "output.height")
    if "frames" in output:
        config.out_frames = _require_type(output["frames"], int, "output.frames")
    if config.out_width < 1 or config.out_height < 1 or config.out_frames < 1:
        raise ConfigError("output dimensions and frame count must be positive")

    video_guidance = 1.5
    if "video_guidance" in data:
        video_guidance = _require_type(data["video_guidance"], float, "video_guidance")
    if "sweep" in data:
        values = _require_type(data["sweep"], list, "sweep")
        scales = tuple(float(_require_type(v, float, "sweep[]")) for v in values)
        if list(scales) != sorted(scales):
            raise ConfigError("sweep: values must be ascending")
        config.sweep = SweepConfig(text_scales=scales, video_scale=video_guidance)
    else:
        config.sweep = SweepConfig(video_scale=video_guidance)

    if "min_scale" in data:
        config.min_scale = _require_type(data["min_scale"], float, "min_scale")
        if not 0.0 < config.min_scale <= 1.0:
            raise ConfigError(f"min_scale must be in (0, 1], got {config.min_scale}")

    policy = data.get("policy", {})
    if not isinstance(policy, dict):
        raise ConfigError("policy: expected a mapping")
    _reject_unknown(policy, {"min_gpt_score", "max_epe"}, "policy")
    config.policy = FilterPolicy(
        min_gpt_score=_require_type(policy.get("min_gpt_score", 3), int,
                                    "policy.min_gpt_score"),
        max_epe=_require_type(policy.get("max_epe", 2.0), float, "policy.max_epe"),
    )

    if "workers" in data:
        config.workers = _require_type(data["workers"], int, "workers")
        if config.workers < 1:
            raise ConfigError("workers must be >= 1")
    if "screen_repeats" in data:
        config.screen_repeats = _require_type(data["screen_repeats"], int, "screen_repeats")
        if config.screen_repeats < 1:
            raise ConfigError("screen_repeats must be >= 1")

    if "backends" not in data:
        raise ConfigError(
            "backends section required: declare endpoints or set mode 'mock' per role"
        )
    section = data["backends"]
    if not isinstance(section, dict):
        raise ConfigError("backends: expected a mapping")
    _reject_unknown(section, set(_ROLES) | {"mode", "url", "timeout", "max_concurrency"},
                    "backends")
    shared = {key: section[key] for key in ("mode", "url", "timeout", "max_concurrency")
              if key in section}
    for role in _ROLES:
        raw = dict(shared)
        raw.update(section.get(role, {}))
        config.endpoints[role] = _parse_endpoint(role, raw)

    fixture = config.endpoints["chat"].fixture
    if fixture:
        resolved = os.path.join(base_dir, fixture)
        if not os.path.exists(resolved):
            raise ConfigError(f"chat fixture not found: {resolved}")
        config.endpoints["chat"].fixture = resolved
    return config


def parse_config(path: str) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config unreadable: {exc}") from exc
    return parse_config_data(data, base_dir=os.path.dirname(os.path.abspath(path)))


def config_hash(config: PipelineConfig) -> str:
    """Stable digest of everything that affects pipeline output."""
    payload = {
        "seed": config.seed,
        "out": [config.out_width, config.out_height, config.out_frames],
        "sweep": list(config.sweep.text_scales),
        "video_guidance": config.sweep.video_scale,
        "min_scale": config.min_scale,
        "policy": [config.policy.min_gpt_score, config.policy.max_epe],
        "screen_repeats": config.screen_repeats,
    }
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass
class BackendSet:
    """The six live service handles a run talks to."""

    chat: Any
    editor: Any
    propagator: Any
    i2v: Any
    flow: Any
    metrics: Any


def build_backends(config: PipelineConfig) -> BackendSet:
    """Instantiate clients/mocks per endpoint config, concurrency-bounded."""
    spool = httpwire.make_spool(config.workdir)

    def bounded(endpoint: EndpointConfig, obj):
        return be.Bounded(obj, endpoint.max_concurrency)

    built: dict[str, Any] = {}
    for role in _ROLES:
        endpoint = config.endpoints[role]
        if endpoint.mode == "http":
            url = endpoint.url
            impl = {
                "chat": lambda: httpwire.HttpChatBackend(url, endpoint.timeout),
                "image_edit": lambda: httpwire.HttpImageEditor(url, spool, endpoint.timeout),
                "propagate": lambda: httpwire.HttpPropagator(url, spool, endpoint.timeout),
                "image_to_video": lambda: httpwire.HttpImageToVideo(url, spool, endpoint.timeout),
                "flow": lambda: httpwire.HttpFlowEstimator(url, spool, endpoint.timeout),
                "metrics": lambda: httpwire.HttpMetricScorer(url, endpoint.timeout),
            }[role]()
        elif endpoint.mode == "scripted":
            impl = be.ScriptedChat.from_file(endpoint.fixture)
        else:
            impl = {
                "chat": lambda: be.DeterministicChat(),
                "image_edit": lambda: be.MockImageEditor(),
                "propagate": lambda: be.MockPropagator(),
                "image_to_video": lambda: be.MockImageToVideo(),
                "flow": lambda: be.MockFlowEstimator(),
                "metrics": lambda: be.MockMetricScorer(values=dict(endpoint.values)),
            }[role]()
        built[role] = bounded(endpoint, impl)

    return BackendSet(
        chat=built["chat"],
        editor=built["image_edit"],
        propagator=built["propagate"],
        i2v=built["image_to_video"],
        flow=built["flow"],
        metrics=built["metrics"],
    )
