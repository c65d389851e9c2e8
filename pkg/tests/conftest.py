import numpy as np
import pytest

from clothfold.camera import CameraConfig, render_topdown
from clothfold.sim import SimParams, crumple, default_cloth, settle


@pytest.fixture(scope="session")
def params():
    return SimParams()


@pytest.fixture(scope="session")
def cam():
    return CameraConfig()


@pytest.fixture(scope="session")
def flat_cloth(params):
    state, report = settle(default_cloth(), params)
    assert report.converged
    return state


@pytest.fixture(scope="session")
def flat_mask(flat_cloth, cam):
    return render_topdown(flat_cloth, cam).mask


@pytest.fixture(scope="session")
def crumpled_states(flat_cloth, params):
    """A handful of shared crumpled states (kept small: crumpling is slow)."""
    return [crumple(flat_cloth, params, seed, 3) for seed in range(4)]


def assert_positions_close(a, b, tol):
    assert np.abs(a.positions - b.positions).max() < tol
