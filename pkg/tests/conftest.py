import numpy as np
import pytest

from ciprecode import harness
from ciprecode.constellation import index_to_symbol


def instance(seed, K, Nt, M=4):
    """Seeded (H, s) pair drawn with the harness seeding rule."""
    draw = harness.draw_trial(seed, 0, K, Nt, M)
    return draw.H, index_to_symbol(draw.index[0], M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_instance():
    return instance
