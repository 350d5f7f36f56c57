import importlib.resources

import numpy as np
import pytest

from otknas.arch import Architecture, validate
from otknas.pool import SpaceSpec


def _load(name):
    text = (
        importlib.resources.files("otknas.data").joinpath(name).read_text()
    )
    return validate(Architecture.from_json(text))


@pytest.fixture(scope="session")
def golden_x():
    return _load("golden_x.json")


@pytest.fixture(scope="session")
def golden_z():
    return _load("golden_z.json")


@pytest.fixture(scope="session")
def small_space():
    return SpaceSpec(
        vocab=("cv1", "cv3", "mp3"), max_nodes=5, max_edges=8, min_nodes=3
    )


def random_valid_arch(rng, space):
    """Shared helper: random architecture drawn through the pool module."""
    from otknas.pool import random_architecture

    return random_architecture(space, rng)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
