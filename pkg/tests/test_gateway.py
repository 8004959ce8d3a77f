import pytest

from tripletforge.vlm.gateway import (
    DispatchFailed,
    RetryPolicy,
    TransportError,
    dispatch,
)
from tripletforge.vlm.prompts import Schema, VlmRequest


def request(schema=Schema.SCORE):
    return VlmRequest(system_prompt="sys", user_prompt="user",
                      images=("a.png",), expected_schema=schema)


class FlakyBackend:
    """Replays a scripted list of responses; exceptions raise."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def complete(self, system_prompt, user_prompt, images):
        self.calls.append((system_prompt, user_prompt, images))
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def no_sleep(_):
    pass


def test_retry_policy_backoff_schedule():
    policy = RetryPolicy(attempts=4, initial_backoff=1.0, multiplier=2.0)
    assert [policy.backoff(n) for n in (1, 2, 3)] == [1.0, 2.0, 4.0]
    with pytest.raises(ValueError):
        RetryPolicy(attempts=0)


def test_dispatch_parses_on_first_success():
    backend = FlakyBackend(["{'score': 4}"])
    verdict = dispatch(request(), backend, sleep=no_sleep)
    assert verdict.score == 4
    assert verdict.attempt_count == 1
    assert verdict.raw == "{'score': 4}"
    assert backend.calls == [("sys", "user", ("a.png",))]


def test_dispatch_retries_transport_failures():
    backend = FlakyBackend([TransportError("boom"), "{'score': 2}"])
    verdict = dispatch(request(), backend, RetryPolicy(attempts=3), sleep=no_sleep)
    assert verdict.score == 2
    assert verdict.attempt_count == 2


def test_dispatch_retries_parse_failures_then_raises():
    backend = FlakyBackend(["gibberish", "{'score': 9}", "{}"])
    with pytest.raises(DispatchFailed) as info:
        dispatch(request(), backend, RetryPolicy(attempts=3), sleep=no_sleep)
    assert info.value.attempts == 3
    assert info.value.reason.startswith("parse:")
    assert info.value.last_raw == "{}"
    assert len(backend.calls) == 3


def test_dispatch_never_returns_out_of_range_score():
    backend = FlakyBackend(["{'score': 0}"] * 3)
    with pytest.raises(DispatchFailed):
        dispatch(request(), backend, RetryPolicy(attempts=3), sleep=no_sleep)


def test_dispatch_transport_exhaustion_keeps_last_reason():
    backend = FlakyBackend([TransportError("a"), TransportError("b")])
    with pytest.raises(DispatchFailed) as info:
        dispatch(request(), backend, RetryPolicy(attempts=2), sleep=no_sleep)
    assert info.value.reason == "transport: b"
    assert info.value.last_raw is None


def test_dispatch_sleeps_by_policy_between_attempts():
    waits = []
    backend = FlakyBackend([TransportError("x"), TransportError("y"), "{'score': 3}"])
    policy = RetryPolicy(attempts=3, initial_backoff=0.5, multiplier=3.0)
    verdict = dispatch(request(), backend, policy, sleep=waits.append)
    assert verdict.score == 3
    assert waits == [0.5, 1.5]


def test_dispatch_schema_routing():
    best = dispatch(request(Schema.BEST_IMAGE),
                    FlakyBackend(["{'best_image': 5}"]), sleep=no_sleep)
    assert best.best_image == 5 and best.score is None
    caption = dispatch(request(Schema.CAPTION),
                       FlakyBackend([" a cat sits "]), sleep=no_sleep)
    assert caption.caption == "a cat sits"
    instruction = dispatch(request(Schema.INSTRUCTION),
                           FlakyBackend(["turn day to night"]), sleep=no_sleep)
    assert instruction.instruction == "turn day to night"
