import pytest

from viscogrid.mesh import MeshHierarchy


@pytest.fixture(scope="session")
def hier():
    return MeshHierarchy.unit_disk(7)


@pytest.fixture(scope="session")
def disk41(hier):
    return hier.levels[2]


@pytest.fixture(scope="session")
def runs(hier):
    from _runs import RunCache
    return RunCache(hier)
