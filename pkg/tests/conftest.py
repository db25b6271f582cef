import numpy as np
import pytest

from tsom.core import Sequence
from tsom.synth import BACKGROUND_GRAY, SynthConfig, generate


def disk_sequence(n_frames=5, size=48, start=(16.0, 24.0), step=(2.0, 0.0), radius=3.0, fg=1.0, bg=0.0):
    """Hard-edged disk moving a fixed number of pixels per frame on a flat background."""
    yy, xx = np.mgrid[0:size, 0:size]
    frames = np.full((n_frames, size, size), bg, dtype=np.float64)
    for k in range(n_frames):
        cx, cy = start[0] + k * step[0], start[1] + k * step[1]
        frames[k][(xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2] = fg
    return Sequence(frames, 50.0)


@pytest.fixture
def uniform_scene():
    """Dark radius-3 disk moving along +x at 3 px/frame over flat gray, 96x96."""

    def make(n_frames=8, theta_obj=0.0, start=(30.0, 48.0), v_a=150.0, radius=3.0):
        bg = np.full((200, 200), BACKGROUND_GRAY)
        cfg = SynthConfig(bg, frame_size=96, n_frames=n_frames, v_b=0.0, v_a=v_a,
                          theta_obj=theta_obj, start=start, radius=radius)
        return generate(cfg)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
