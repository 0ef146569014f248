from __future__ import annotations

import numpy as np
import pytest

from mbadiabatic import cd_expansion as cd
from mbadiabatic.models import tfim_family


def lf_family(length: int = 6):
    """Ising chain with a longitudinal field, driven from h = 2.5 to h = 1.5."""
    return tfim_family(length, 2.5, 1.5, longitudinal=0.3)


@pytest.fixture(scope="session")
def lf6():
    return lf_family(6)


@pytest.fixture(scope="session")
def expansion6(lf6):
    """Order-4 spectral expansion on the default grid, shared across modules."""
    return cd.build_expansion(lf6, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
