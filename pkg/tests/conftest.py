import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cmseq.models import MarkovModel  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def rw3():
    return MarkovModel(3, 1, {k: 1.0 for k in (1, 2, 3)}, {k: 1.0 for k in range(4)})


def random_walk(N, d=1):
    return MarkovModel(N, d, {k: np.eye(d) for k in range(1, N + 1)},
                       {k: np.eye(d) for k in range(N + 1)})
