import os

import pytest

from metricbm.specdoc import read_spec

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


def load(name):
    return read_spec(fixture_path(name))


@pytest.fixture
def star3():
    return load("star3_kirchhoff.yaml")


@pytest.fixture
def interval():
    return load("interval_reflecting.yaml")


@pytest.fixture
def two_vertex():
    return load("two_vertex.yaml")
