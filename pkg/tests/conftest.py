import numpy as np
import pytest

from covermod.simulate import symmetric_cover


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def smooth_gray(rng):
    """Small symmetric grayscale cover, every pair difference well inside the key range."""
    return symmetric_cover(48, 96, rng, scale=1.0)


@pytest.fixture
def photo_gray():
    """A 96x96 crop of a bundled photograph, as a grayscale grid."""
    pytest.importorskip("skimage")
    from skimage import data
    return np.ascontiguousarray(data.camera()[200:296, 200:296])[:, :, None]


@pytest.fixture
def photo_rgb():
    pytest.importorskip("skimage")
    from skimage import data
    return np.ascontiguousarray(data.astronaut()[100:196, 150:246])
