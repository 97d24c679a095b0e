import numpy as np
import pytest
from hypothesis import settings

from tdiht.frames import random_tight_frame
from tdiht.linops import DenseMap
from tdiht.seeding import make_rng

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def tiny_instance(seed, d=8, p=10, m=None):
    """Tight frame plus Gaussian measurements for exhaustive checks."""
    rng = make_rng(seed)
    m = m if m is not None else d
    pair = random_tight_frame(p, d, int(rng.integers(2**31)))
    mat = rng.standard_normal((m, d)) / np.sqrt(m)
    return pair, DenseMap(mat)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
