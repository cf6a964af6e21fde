import numpy as np
import pytest

from evsup import EventStream


def random_stream(rng, n=1000, width=32, height=24, t_max=1000):
    return EventStream(
        width, height,
        rng.integers(0, width, n), rng.integers(0, height, n),
        rng.integers(0, t_max, n), rng.choice([-1, 1], n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
