import numpy as np
import pytest

from marklander.config import full_profile, tiny_profile
from marklander.textures import Family, default_marker, generate_texture


@pytest.fixture
def full_cfg():
    return full_profile()


@pytest.fixture
def tiny_cfg():
    return tiny_profile()


@pytest.fixture
def full_world(full_cfg):
    return full_cfg.world_spec()


@pytest.fixture
def tiny_world(tiny_cfg):
    return tiny_cfg.world_spec()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def asphalt():
    return generate_texture(Family.ASPHALT, 0)


@pytest.fixture
def marker(full_world):
    return default_marker(full_world.marker_side)
