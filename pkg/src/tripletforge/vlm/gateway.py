"""Dispatch of judge requests with retry and typed failure."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

from .parsing import VlmParseError, parse_best_image, parse_score, parse_text
from .prompts import Schema, VlmRequest


class TransportError(Exception):
    """A backend/network-level failure, retryable by policy."""


class ChatBackend(Protocol):
    def complete(self, system_prompt: str, user_prompt: str, images: tuple[str, ...]) -> str:
        ...


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    initial_backoff: float = 1.0
    multiplier: float = 2.0

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("retry policy needs at least one attempt")

    def backoff(self, failed_attempts: int) -> float:
        return self.initial_backoff * self.multiplier ** (failed_attempts - 1)


class DispatchFailed(Exception):
    """All attempts exhausted; carries the count and the last reason."""

    def __init__(self, attempts: int, reason: str, last_raw: Optional[str] = None):
        super().__init__(f"dispatch failed after {attempts} attempts: {reason}")
        self.attempts = attempts
        self.reason = reason
        self.last_raw = last_raw


@dataclass
class VlmVerdict:
    """Parsed judge answer; exactly one payload field is set per schema."""

    raw: str
    attempt_count: int
    best_image: Optional[int] = None
    score: Optional[int] = None
    caption: Optional[str] = None
    instruction: Optional[str] = None


def _parse(schema: Schema, raw: str, attempt_count: int) -> VlmVerdict:
    if schema is Schema.BEST_IMAGE:
        return VlmVerdict(raw=raw, attempt_count=attempt_count,
                          best_image=parse_best_image(raw))
    if schema is Schema.SCORE:
        return VlmVerdict(raw=raw, attempt_count=attempt_count, score=parse_score(raw))
    if schema is Schema.CAPTION:
        return VlmVerdict(raw=raw, attempt_count=attempt_count, caption=parse_text(raw))
    return VlmVerdict(raw=raw, attempt_count=attempt_count, instruction=parse_text(raw))


def dispatch(
    request: VlmRequest,
    backend: ChatBackend,
    policy: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
) -> VlmVerdict:
    """Send one request, retrying transport and parse failures alike.

    Parse failures burn attempts too: a judge that answers off-schema is
    as unusable as one that times out. Raises ``DispatchFailed`` once the
    policy is exhausted; an out-of-range score can therefore never escape
    as a verdict.
    """
    last_reason = "no attempts made"
    last_raw: Optional[str] = None
    for attempt in range(1, policy.attempts + 1):
        try:
            raw = backend.complete(request.system_prompt, request.user_prompt, request.images)
        except TransportError as exc:
            last_reason = f"transport: {exc}"
            last_raw = None
        else:
            try:
                return _parse(request.expected_schema, raw, attempt)
            except VlmParseError as exc:
                last_reason = f"parse: {exc}"
                last_raw = raw
        if attempt < policy.attempts:
            sleep(policy.backoff(attempt))
    raise DispatchFailed(policy.attempts, last_reason, last_raw)
