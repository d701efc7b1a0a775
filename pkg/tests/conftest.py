import sys
from pathlib import Path

import numpy as np
import pytest

from mibracket.config import RunConfig
from mibracket.data import SyntheticSpec, synth_generate
from mibracket.fusion import train_member

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def trained_rho9():
    """One MINE/CLUB member trained on a rho = 0.9 Gaussian pair (N = 2000)."""
    x, y, _ = synth_generate(SyntheticSpec(rho=0.9, n=2000, seed=11))
    return train_member(x.values, y.values, RunConfig(), member_seed=11)


@pytest.fixture(scope="session")
def trained_independent():
    """One MINE/CLUB member trained on independent Gaussians (N = 2000)."""
    x, y, _ = synth_generate(SyntheticSpec(rho=0.0, n=2000, seed=12))
    return train_member(x.values, y.values, RunConfig(), member_seed=12)
