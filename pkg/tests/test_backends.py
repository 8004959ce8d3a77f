import threading

import numpy as np
import pytest

from tripletforge.backends import (
    BackendError,
    Bounded,
    CallMeter,
    DeterministicChat,
    MockFlowEstimator,
    MockImageEditor,
    MockImageToVideo,
    MockMetricScorer,
    MockPropagator,
    ScriptedChat,
    checked_edit_image,
    checked_estimate_flow,
    checked_image_to_video,
    checked_propagate,
)
from tripletforge.media import ClipFrames, Frame
from tripletforge.vlm.gateway import TransportError


def frame(seed, w=32, h=18):
    rng = np.random.default_rng(seed)
    return Frame(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def clip(seed, n=4, w=32, h=18):
    return ClipFrames([frame(seed + i, w, h) for i in range(n)])


def test_editor_varies_by_scale_but_is_reproducible():
    editor = MockImageEditor()
    base = frame(0)
    a1 = editor.edit_image(base, "make it red", 3.0)
    a2 = editor.edit_image(base, "make it red", 3.0)
    b = editor.edit_image(base, "make it red", 8.0)
    np.testing.assert_array_equal(a1.pixels, a2.pixels)
    assert not np.array_equal(a1.pixels, b.pixels)
    assert editor.meter.calls == 3

    identity = MockImageEditor(strength=0)
    np.testing.assert_array_equal(
        identity.edit_image(base, "anything", 5.0).pixels, base.pixels)


def test_propagator_starts_at_edited_first_frame():
    source = clip(10)
    edited_first = MockImageEditor().edit_image(source.frames[0], "x", 4.0)
    out = MockPropagator().propagate(source, edited_first)
    assert len(out) == len(source)
    np.testing.assert_array_equal(out.frames[0].pixels, edited_first.pixels)
    # the edit delta rides along on later frames
    delta = edited_first.pixels - source.frames[0].pixels
    np.testing.assert_array_equal(
        out.frames[2].pixels, source.frames[2].pixels + delta)


def test_propagator_rejects_size_mismatch():
    with pytest.raises(BackendError):
        MockPropagator().propagate(clip(0, w=32), frame(1, w=16))


def test_propagator_reuses_buffer_for_static_sources():
    still = frame(3)
    source = ClipFrames([Frame(still.pixels) for _ in range(5)])
    out = MockPropagator().propagate(source, frame(4))
    assert all(f.pixels is out.frames[0].pixels for f in out.frames)


def test_image_to_video_repeats_still():
    still = frame(7)
    out = MockImageToVideo().image_to_video(still, 6)
    assert len(out) == 6
    for f in out.frames:
        np.testing.assert_array_equal(f.pixels, still.pixels)
    with pytest.raises(BackendError):
        MockImageToVideo().image_to_video(still, 0)


def test_flow_estimator_fixed_translation():
    flow = MockFlowEstimator(translation=(3.0, 4.0)).estimate_flow(frame(0), frame(1))
    assert flow.vectors.shape == (18, 32, 2)
    assert (flow.vectors[:, :, 0] == 3.0).all()
    assert (flow.vectors[:, :, 1] == 4.0).all()


def test_flow_estimator_content_keyed_and_bounded():
    estimator = MockFlowEstimator(content_range=2.0)
    a = estimator.estimate_flow(frame(0), frame(1))
    b = estimator.estimate_flow(frame(0), frame(1))
    c = estimator.estimate_flow(frame(2), frame(3))
    np.testing.assert_array_equal(a.vectors, b.vectors)
    assert not np.array_equal(a.vectors, c.vectors)
    assert float(np.abs(a.vectors).max()) <= 2.0
    with pytest.raises(BackendError):
        estimator.estimate_flow(frame(0, w=32), frame(1, w=30))


def test_metric_scorer_returns_scripted_values_only():
    scorer = MockMetricScorer(values={"dover": 0.567})
    assert scorer.score_metric("dover", {}) == 0.567
    with pytest.raises(BackendError):
        scorer.score_metric("pick", {})


def test_deterministic_chat_is_content_keyed(tmp_path):
    img = tmp_path / "ref.png"
    img.write_bytes(b"pixels")
    chat = DeterministicChat()
    pick = chat.complete("sys", "reply with 'best_image'", (str(img),))
    assert pick == chat.complete("sys", "reply with 'best_image'", (str(img),))
    assert pick.startswith("{'best_image':")

    score = chat.complete("sys", "reply with 'score'", (str(img),))
    assert score.startswith("{'score':")

    moved = tmp_path / "elsewhere.png"
    moved.write_bytes(b"pixels")
    assert pick == chat.complete("sys", "reply with 'best_image'", (str(moved),))

    with pytest.raises(TransportError):
        chat.complete("sys", "reply with 'score'", (str(tmp_path / "gone.png"),))


def test_scripted_chat_replays_and_fails_on_marker():
    chat = ScriptedChat(["{'score': 5}", {"fail": "timeout"}, "{'score': 1}"])
    assert chat.complete("s", "u", ()) == "{'score': 5}"
    with pytest.raises(TransportError):
        chat.complete("s", "u", ())
    assert chat.complete("s", "u", ()) == "{'score': 1}"
    with pytest.raises(BackendError):
        chat.complete("s", "u", ())
    assert chat.meter.calls == 4


def test_scripted_chat_from_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text('["{\'score\': 2}"]', encoding="utf-8")
    chat = ScriptedChat.from_file(str(path))
    assert chat.complete("s", "u", ()) == "{'score': 2}"


def test_call_meter_tracks_concurrency():
    meter = CallMeter()
    start = threading.Barrier(3)

    def work():
        with meter:
            start.wait(timeout=5)

    threads = [threading.Thread(target=work) for _ in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert meter.calls == 3
    assert meter.max_in_flight == 3


def test_bounded_caps_concurrent_calls():
    class Slow:
        def __init__(self):
            self.meter = CallMeter()
            self.release = threading.Event()

        def work(self):
            with self.meter:
                self.release.wait(timeout=2)
                return "ok"

    inner = Slow()
    proxy = Bounded(inner, max_concurrency=2)
    threads = [threading.Thread(target=proxy.work) for _ in range(5)]
    for t in threads:
        t.start()
    inner.release.set()
    for t in threads:
        t.join()
    assert inner.meter.calls == 5
    assert inner.meter.max_in_flight <= 2

    with pytest.raises(BackendError):
        Bounded(inner, max_concurrency=0)


def test_bounded_passes_through_attributes():
    inner = MockMetricScorer(values={"x": 1.0})
    proxy = Bounded(inner, max_concurrency=1)
    assert proxy.values == {"x": 1.0}
    assert proxy.score_metric("x", {}) == 1.0


class ShrinkingEditor:
    def edit_image(self, frame_in, instruction, guidance_scale):
        return Frame(frame_in.pixels[:-2, :, :].copy())


class FrameDroppingPropagator:
    def propagate(self, src_clip, edited_first):
        return ClipFrames([Frame(edited_first.pixels.copy())])


class WrongSizeFlow:
    def estimate_flow(self, frame_a, frame_b):
        return MockFlowEstimator(translation=(0.0, 0.0)).estimate_flow(
            frame(0, w=8, h=8), frame(1, w=8, h=8))


def test_checked_wrappers_validate_outputs():
    base = frame(0)
    edited = checked_edit_image(MockImageEditor(), base, "x", 3.0)
    assert (edited.width, edited.height) == (base.width, base.height)
    with pytest.raises(BackendError):
        checked_edit_image(ShrinkingEditor(), base, "x", 3.0)

    source = clip(5)
    good_first = MockImageEditor().edit_image(source.frames[0], "x", 3.0)
    out = checked_propagate(MockPropagator(), source, good_first)
    assert len(out) == len(source)
    with pytest.raises(BackendError):
        checked_propagate(FrameDroppingPropagator(), source, good_first)
    with pytest.raises(BackendError):
        checked_propagate(MockPropagator(), source, frame(1, w=8, h=8))

    still = frame(2)
    assert len(checked_image_to_video(MockImageToVideo(), still, 3)) == 3

    flow = checked_estimate_flow(
        MockFlowEstimator(translation=(1.0, 0.0)), frame(0), frame(1))
    assert (flow.width, flow.height) == (32, 18)
    with pytest.raises(BackendError):
        checked_estimate_flow(WrongSizeFlow(), frame(0), frame(1))
