import numpy as np
import pytest

from implut.image import ImageBuf
from implut.transform import MlpFilter


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_model():
    """Tiny transform so per-test forward passes stay cheap."""
    return MlpFilter(hidden=8, seed=1)


@pytest.fixture
def random_image(rng):
    return ImageBuf(rng.random((12, 9, 3)))
