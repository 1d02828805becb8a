"""
Pytest configuration and fixtures
"""
import numpy as np
import pytest
from fastapi.testclient import TestClient

from entangleometer.main import app
from entangleometer.models.schemas import DetectionModel, FitConfig, FitModel
from tests.helpers import HWP_DELTA, quantum_plan, simulate


@pytest.fixture
def noiseless_model():
    """Expected counts only, no background"""
    return DetectionModel.noiseless()


@pytest.fixture
def realistic_model():
    """Default count budget with shot noise, darks and accidentals"""
    return DetectionModel()


@pytest.fixture
def compensator_fit():
    return FitConfig(model=FitModel.COMPENSATOR, signal_hwp=0.0, theta=np.pi / 4)


@pytest.fixture
def no_compensator_fit():
    return FitConfig(model=FitModel.NO_COMPENSATOR, signal_hwp=0.0, theta=np.pi / 4)


@pytest.fixture
def hwp_dataset(noiseless_model):
    """Noise-free compensator sweep of a half-wave sample at 45 degrees"""
    return simulate(quantum_plan(compensator=True), HWP_DELTA, noiseless_model)


@pytest.fixture
def output_dir(tmp_path):
    """Temporary output directory"""
    out = tmp_path / "out"
    out.mkdir()
    return out


@pytest.fixture(scope="function")
def client():
    """Create a test client for the HTTP surface"""
    with TestClient(app) as test_client:
        yield test_client
