"""Shared fixtures for the hybrid beamforming test suite"""

import numpy as np
import pytest

from core.hybrid_core import SystemConfig
from core.numerics import complex_gaussian


def random_unit_modulus(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return np.exp(1j * rng.uniform(0, 2 * np.pi, (rows, cols)))


def random_psd(rng: np.random.Generator, n: int, rank: int) -> np.ndarray:
    a = complex_gaussian(rng, n, rank)
    return a @ a.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20160401)


@pytest.fixture
def p2p_cfg():
    return SystemConfig(n_bs_antennas=8, n_user_antennas=8, streams_per_user=2,
                        n_rf_tx=2, n_rf_rx=2, power=1.0, n_paths=4)


@pytest.fixture
def miso_cfg():
    return SystemConfig(n_bs_antennas=16, n_users=3, n_rf_tx=4, power=10.0, n_paths=6)


@pytest.fixture
def env_isolated(tmp_path, monkeypatch):
    """Runtime settings pointed at a temporary directory"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("HYBRID_BF_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("HYBRID_BF_OUTPUT_DIR", str(tmp_path / "results"))
    return tmp_path
