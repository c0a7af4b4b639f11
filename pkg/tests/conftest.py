import numpy as np
import pytest

from fracheat.fields import TimeGrid
from fracheat.manifolds import FlatTorus, VariableCircle, build_eigensystem


@pytest.fixture(scope="session")
def unit_circle():
    """Flat unit circle, 16 modes, 128 quadrature nodes."""
    model = FlatTorus(metric=((1.0,),), periods=(2.0 * np.pi,))
    return build_eigensystem(model, 16, quadrature_n=128)


@pytest.fixture(scope="session")
def unit_circle_64():
    model = FlatTorus(metric=((1.0,),), periods=(2.0 * np.pi,))
    return build_eigensystem(model, 64)


@pytest.fixture(scope="session")
def variable_circle():
    """gamma(x) = 2 + sin x on the 2 pi circle, 16 modes."""
    model = VariableCircle(gamma=(2.0, 0.0, 1.0), period=2.0 * np.pi)
    return build_eigensystem(model, 16)


@pytest.fixture(scope="session")
def grid_small():
    return TimeGrid.for_horizon(T=3.0, pad_factor=4, n_t=256)


@pytest.fixture(scope="session")
def grid_mid():
    return TimeGrid.for_horizon(T=5.0, pad_factor=4, n_t=512)
