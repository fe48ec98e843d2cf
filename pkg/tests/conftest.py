import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make tests/oracles.py importable

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def noise_plane():
    """64x64 seeded uniform-noise plane, valid for full feature extraction."""
    return np.random.default_rng(99).random((64, 64))
