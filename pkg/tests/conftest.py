import numpy as np
import pytest

from l0flow import make_flow


@pytest.fixture
def torus2():
    return make_flow("torus", d=2, T=1.0, L=1.0)


@pytest.fixture
def torus3():
    return make_flow("torus", d=3, T=1.0, L=2.0)


@pytest.fixture
def sphere2():
    return make_flow("sphere", d=2, T=0.2)


@pytest.fixture
def sphere3():
    return make_flow("sphere", d=3, T=0.2)


def g_norm(fam, t, v):
    return float(np.sqrt(fam.inner(t, v, v)))
