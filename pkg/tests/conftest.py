import numpy as np
import pytest

from isac_secbf.channel import build_channels
from isac_secbf.cli import profile_config
from isac_secbf.scenario import make_rng


@pytest.fixture(scope="session")
def desk_config():
    return profile_config("desk")


@pytest.fixture(scope="session")
def desk_channels(desk_config):
    return build_channels(desk_config, make_rng(desk_config.seed, "channels"))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_complex(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_psd(rng, n, rank=None, scale=1.0):
    rank = rank or n
    a = random_complex(rng, n, rank, scale=scale)
    return a @ a.conj().T
