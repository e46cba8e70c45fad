import numpy as np
import pytest


def raw_generator(seed: int, stream_id: int) -> np.random.Generator:
    """Reference construction of a keyed stream, built without the package."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream_id,))))


@pytest.fixture
def raw_gen():
    return raw_generator
