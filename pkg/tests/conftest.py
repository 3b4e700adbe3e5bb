import numpy as np
import pytest

from weakid.grid import Axis
from weakid.simulate import integrate_ks, ks_initial_condition


@pytest.fixture(scope="session")
def ks_clean():
    """Default-size KS run (256 x 301 on [0, 32 pi] x [0, 150])."""
    length = 32 * np.pi
    u0 = ks_initial_condition(256, length, seed=0)
    return integrate_ks(u0, length, Axis(301, 0.0, 150.0))


@pytest.fixture(scope="session")
def ks_short():
    """A cheaper KS window for estimation tests."""
    length = 32 * np.pi
    u0 = ks_initial_condition(256, length, seed=0)
    return integrate_ks(u0, length, Axis(81, 0.0, 40.0))
