import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def five_point(f, x, h, l):
    """Five-point central difference of order ``l`` (1..3)."""
    v = [f(x + k * h) for k in (-2, -1, 0, 1, 2)]
    if l == 1:
        return (v[0] - 8 * v[1] + 8 * v[3] - v[4]) / (12 * h)
    if l == 2:
        return (-v[0] + 16 * v[1] - 30 * v[2] + 16 * v[3] - v[4]) / (12 * h * h)
    return (-v[0] + 2 * v[1] - 2 * v[3] + v[4]) / (2 * h**3)
