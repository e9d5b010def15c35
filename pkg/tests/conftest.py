import logging

import numpy as np
import pytest

from src.catalog.black_scholes import BlackScholesParams
from src.catalog.stein_stein import SteinSteinParams
from src.core.artifact_manager import ArtifactManager
from src.core.parallel import THREADS_ENV_VAR


def pytest_configure(config):
    """Register project markers."""
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    """Keep tests on one worker unless a test asks otherwise."""
    monkeypatch.setenv(THREADS_ENV_VAR, "1")


@pytest.fixture(autouse=True)
def quiet_numerics(caplog):
    caplog.set_level(logging.WARNING)


@pytest.fixture()
def artifact_manager(tmp_path):
    return ArtifactManager(tmp_path)


@pytest.fixture()
def stein_stein_params():
    """Uncorrelated reference cell with a nonzero initial volatility."""
    return SteinSteinParams(a=0.0, b=0.0, c=1.0, sigma0=0.2, rho=0.0, T=1.0)


@pytest.fixture()
def black_scholes_params():
    return BlackScholesParams(sigma=1.0, T=1.0, y0=0.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
