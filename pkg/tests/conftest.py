import numpy as np
import pytest

from polartcl.bath import BathSpec, Mode
from polartcl.system import ModelBuilder, build_model


@pytest.fixture
def sys22():
    """2 occupied + 2 virtual spin-orbitals, moderate real coupling."""
    return build_model(ModelBuilder(seed=3, n_occ=2, n_virt=2, scale=0.1))


@pytest.fixture
def sys23():
    return build_model(ModelBuilder(seed=4, n_occ=2, n_virt=3, scale=0.15))


@pytest.fixture
def one_mode_bath():
    mt = np.array([0.0687, 0.1640, 0.1214, -0.0711])
    omega = 0.35
    return BathSpec(modes=[Mode(omega=omega, coupling=mt * omega)], beta=6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
