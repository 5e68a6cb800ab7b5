import numpy as np
import pytest

from src.analysis.cgf_engine import CgfProfile
from src.analysis.levy_process import LatticeJumps, ProcessSpec
from src.distributions.dist_model import (
    CenteredBernoulli, CenteredExponential, FiniteLattice, Gaussian
)


@pytest.fixture
def bernoulli():
    return CenteredBernoulli(0.3)


@pytest.fixture
def exponential():
    return CenteredExponential(1.0)


@pytest.fixture
def gaussian():
    return Gaussian(1.0)


@pytest.fixture
def lattice():
    # centered atoms -1.75, -0.75, 1.25
    return FiniteLattice(((-1, 0.25), (0, 0.25), (2, 0.5)))


@pytest.fixture
def poisson_process():
    """Compensated Poisson process with unit jumps: Z_t = N_t - t"""
    return ProcessSpec(0.0, 1.0, LatticeJumps(((1.0, 1.0),)))


@pytest.fixture
def diffusion():
    return ProcessSpec(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


# (spec, h window inside the strip, c window inside the drift limits)
FAMILY_WINDOWS = {
    "bernoulli": (CenteredBernoulli(0.3), (-2.0, 2.0), (-0.5, 1.2)),
    "exponential": (CenteredExponential(1.0), (-2.0, 0.8), (-0.8, 4.0)),
    "gaussian": (Gaussian(1.0), (-2.0, 2.0), (-3.0, 3.0)),
    "lattice": (FiniteLattice(((-1, 0.25), (0, 0.25), (2, 0.5))),
                (-2.0, 2.0), (-1.0, 0.8)),
}


@pytest.fixture(params=sorted(FAMILY_WINDOWS))
def family(request):
    spec, h_window, c_window = FAMILY_WINDOWS[request.param]
    return CgfProfile(spec), h_window, c_window
