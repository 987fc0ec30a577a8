"""Shared small fixtures; sized for speed, not convergence."""
import numpy as np
import pytest

from xuvatom.angular import enumerate_channels, one_electron_channels
from xuvatom.bsplines import build_radial_basis


@pytest.fixture(scope="session")
def tiny_basis():
    return build_radial_basis(r_max=12.0, n_splines=14, order=4, grading="exp_then_linear")


@pytest.fixture(scope="session")
def small_basis():
    return build_radial_basis(r_max=25.0, n_splines=40, order=6, grading="exp_then_linear")


@pytest.fixture(scope="session")
def channels_1e():
    return one_electron_channels(lmax=2)


@pytest.fixture(scope="session")
def channels_2e():
    return enumerate_channels(lmax=1, Lmax=1, symmetry="singlet")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(11)
