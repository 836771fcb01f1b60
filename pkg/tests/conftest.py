import pytest

from cocyclic.inner import clark_inner
from cocyclic.measures import fixture


@pytest.fixture
def delta():
    return fixture("delta_minus_one")


@pytest.fixture
def pair():
    return fixture("pair_plus_minus_i")


@pytest.fixture
def three():
    return fixture("three_atom")


@pytest.fixture
def minus_z(delta):
    return clark_inner(delta)


@pytest.fixture
def minus_z2(pair):
    return clark_inner(pair)


@pytest.fixture
def three_theta(three):
    return clark_inner(three)
