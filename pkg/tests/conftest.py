import numpy as np
import pytest

from elasticbmc.align import decompose_ensemble
from elasticbmc.workflow import ALIGN_DEFAULTS, example_data


@pytest.fixture(scope="session")
def example1_ensemble():
    """(observation, design, curves) for the first synthetic study, seed 7."""
    obs, design, curves, _, _ = example_data(1, seed=7)
    return obs, design, curves


@pytest.fixture(scope="session")
def example1_decomposition(example1_ensemble):
    obs, design, curves = example1_ensemble
    return decompose_ensemble(obs, curves, design, n_jobs=4, **ALIGN_DEFAULTS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_warp(t, a):
    """Boundary-pinned smooth warp with slope 1 + a cos(2 pi t); |a| < 1 keeps it increasing."""
    return t + a * np.sin(2.0 * np.pi * t) / (2.0 * np.pi)
