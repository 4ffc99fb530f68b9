"""Provide fixtures shared across the test modules."""
import numpy as np
import pytest
from click.testing import CliRunner

from qus_tools import model

PHANTOM_ALPHA = 0.6035
PHANTOM_BETA = 2.9966e-6
PHANTOM_NU = 3.4281


@pytest.fixture
def calibration():
    """Provide the reference phantom calibration."""
    return model.ReferenceCalibration(alpha0_r=PHANTOM_ALPHA, beta_r=PHANTOM_BETA, nu_r=PHANTOM_NU)


@pytest.fixture
def small_grid():
    """Provide a small, well-conditioned grid."""
    return model.SpectralGrid.uniform(1.0, 6.0, 6, 0.2, 1.0, 5)


@pytest.fixture
def column_grid():
    """Provide a grid of the size used for single-column experiments."""
    return model.SpectralGrid.uniform(3.0, 10.0, 16, 0.5, 3.0, 24)


@pytest.fixture
def rng():
    """Provide a seeded random generator."""
    return np.random.default_rng(20240611)


@pytest.fixture
def runner():
    """Provide a click CliRunner."""
    return CliRunner()
