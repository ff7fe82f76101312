import numpy as np
import pytest

from cylrad import parallel


@pytest.fixture(autouse=True)
def _single_thread():
    parallel.set_threads(1)
    yield
    parallel.set_threads(1)


def random_psd(rng, d, rank=None):
    rank = d if rank is None else rank
    A = rng.standard_normal((d, rank))
    return A @ A.T
