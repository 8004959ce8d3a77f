"""Parsers for judge responses.

The prompts instruct the judge to answer with exactly one Python
dictionary literal (``{'score': 3}`` style) and nothing else, so parsing
is a strict ``ast.literal_eval`` with range checks; anything looser gets
rejected rather than guessed at.
"""
from __future__ import annotations

import ast


class VlmParseError(Exception):
    pass


def _parse_single_key_int(text: str, key: str, low: int, high: int) -> int:
    stripped = text.strip()
    if not stripped:
        raise VlmParseError("empty response")
    try:
        value = ast.literal_eval(stripped)
    except (ValueError, SyntaxError) as exc:
        raise VlmParseError(f"not a dictionary literal: {stripped!r}") from exc
    if not isinstance(value, dict):
        raise VlmParseError(f"expected a dictionary, got {type(value).__name__}")
    if set(value.keys()) != {key}:
        raise VlmParseError(
            f"expected single key {key!r}, got keys {sorted(map(repr, value.keys()))}"
        )
    number = value[key]
    if isinstance(number, bool) or not isinstance(number, int):
        raise VlmParseError(f"value for {key!r} must be an integer, got {number!r}")
    if not low <= number <= high:
        raise VlmParseError(f"{key} {number} outside allowed range {low}..{high}")
    return number


def parse_best_image(text: str) -> int:
    """Index of the winning edit candidate, 0 through 5."""
    return _parse_single_key_int(text, "best_image", 0, 5)


def parse_score(text: str) -> int:
    return _parse_single_key_int(text, "score", 1, 5)


def parse_text(text: str) -> str:
    """Free-text responses (captions, instructions): non-empty, stripped."""
    stripped = text.strip()
    if not stripped:
        raise VlmParseError("empty response")
    return stripped
