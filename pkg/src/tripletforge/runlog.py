"""Line-delimited key=value logging with credential redaction.

Every log line is ``key=value`` pairs, machine-splittable. A filter
scrubs the judge-API credential from any message before it can reach a
handler, so no code path can leak it into logs.
"""
from __future__ import annotations

import logging
import os
import time
from typing import Any

CREDENTIAL_ENV_VAR = "VLM_API_KEY"
REDACTED = "[redacted]"

_LOGGER_NAME = "tripletforge"


def kv_line(event: str, **fields: Any) -> str:
    parts = [f"event={event}"]
    for key, value in fields.items():
        text = str(value)
        if any(ch.isspace() for ch in text) or text == "":
            text = '"' + text.replace('"', '\\"') + '"'
        parts.append(f"{key}={text}")
    return " ".join(parts)


class RedactCredential(logging.Filter):
    """Replaces the current credential value wherever it appears."""

    def filter(self, record: logging.LogRecord) -> bool:
        secret = os.environ.get(CREDENTIAL_ENV_VAR)
        if secret:
            message = record.getMessage()
            if secret in message:
                record.msg = message.replace(secret, REDACTED)
                record.args = ()
        return True


class _KvFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(record.created))
        return f"ts={stamp} level={record.levelname.lower()} {record.getMessage()}"


def get_logger(stream=None) -> logging.Logger:
    """The package logger, configured once with redaction installed."""
    logger = logging.getLogger(_LOGGER_NAME)
    if not logger.handlers:
        handler = logging.StreamHandler(stream)
        handler.setFormatter(_KvFormatter())
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
        logger.propagate = False
    for existing in logger.handlers:
        if not any(isinstance(f, RedactCredential) for f in existing.filters):
            existing.addFilter(RedactCredential())
    return logger


def log_event(event: str, **fields: Any) -> None:
    get_logger().info(kv_line(event, **fields))
