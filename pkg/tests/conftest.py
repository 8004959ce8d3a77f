import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tripletforge.backends import (
    DeterministicChat,
    MockFlowEstimator,
    MockImageEditor,
    MockImageToVideo,
    MockMetricScorer,
    MockPropagator,
)
from tripletforge.config import BackendSet, build_backends, parse_config_data
from tripletforge.media import ClipFrames, Frame

settings.register_profile(
    "suite",
    max_examples=30,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_frame(width: int, height: int, seed: int = 0) -> Frame:
    rng = np.random.default_rng(seed)
    return Frame(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))


def make_clip(width: int, height: int, n_frames: int, seed: int = 0) -> ClipFrames:
    rng = np.random.default_rng(seed)
    frames = [Frame(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
              for _ in range(n_frames)]
    return ClipFrames(frames)


@pytest.fixture
def mock_backends() -> BackendSet:
    """Unbounded mock stack for unit tests that bypass config parsing."""
    return BackendSet(
        chat=DeterministicChat(),
        editor=MockImageEditor(),
        propagator=MockPropagator(),
        i2v=MockImageToVideo(),
        flow=MockFlowEstimator(),
        metrics=MockMetricScorer(),
    )


@pytest.fixture
def small_config(tmp_path):
    """Config factory at demo geometry; keyword overrides merge in."""

    def build(**overrides):
        data = {
            "workdir": str(tmp_path / "run"),
            "seed": 3,
            "output": {"width": 128, "height": 72, "frames": 5},
            "workers": 2,
            "backends": {"mode": "mock"},
        }
        data.update(overrides)
        return parse_config_data(data, str(tmp_path))

    return build


@pytest.fixture
def small_runner(small_config):
    from tripletforge.pipeline import Runner

    def build(**overrides):
        config = small_config(**overrides)
        return Runner(config, build_backends(config))

    return build
