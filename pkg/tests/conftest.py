import numpy as np
import pytest

from intermittency_lab import (
    CorrelationEngine,
    MapParams,
    ReturnOperators,
    build_return_structure,
)
from intermittency_lab import measure as ms


@pytest.fixture(scope="session")
def p05():
    return MapParams(0.5)


@pytest.fixture(scope="session")
def frs05(p05):
    return build_return_structure(p05, n_max=2048)


@pytest.fixture(scope="session")
def mesh13():
    return ms.GradedMesh.build(2**13, ms.default_grading(0.5))


@pytest.fixture(scope="session")
def ulam05(p05, mesh13):
    return ms.build_ulam(p05, mesh13)


@pytest.fixture(scope="session")
def density05(ulam05, mesh13):
    return ms.stationary_density(ulam05, mesh13)


@pytest.fixture(scope="session")
def engine05(p05, mesh13, ulam05, density05):
    return CorrelationEngine(p05, mesh13, ulam05, density05, y_mesh_size=2048)


@pytest.fixture(scope="session")
def ops05(frs05):
    return ReturnOperators(frs05, mesh_size=1024)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20230823)
