import numpy as np
import pytest

from abas import dsp
from abas.train import synthesize_clip


@pytest.fixture(scope="session")
def clip16k():
    """One deterministic speech-like clip of 16000 samples."""
    return synthesize_clip(np.random.default_rng(1234), 16000)


@pytest.fixture(scope="session")
def clip_bank():
    """Ten deterministic speech-like clips."""
    rng = np.random.default_rng(777)
    return [synthesize_clip(rng, 16000) for _ in range(10)]


def stable_lpc_coeffs(rng, order):
    """Random stable predictor via reflection coefficients in (-0.95, 0.95)."""
    a = np.zeros(0)
    for k in rng.uniform(-0.95, 0.95, size=order):
        a = np.concatenate([a - k * a[::-1], [k]])
    return a


@pytest.fixture
def rng():
    return np.random.default_rng(0)
