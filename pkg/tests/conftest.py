import io

import numpy as np
import pytest
from PIL import Image

from krigrid.raster_io import ScalarField


def png_of(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def random_field(h: int, w: int, seed: int = 0) -> ScalarField:
    return ScalarField(np.random.default_rng(seed).random((h, w)))


def diagonal_field(n: int, low: float = 0.2, high: float = 0.8) -> ScalarField:
    yy, xx = np.mgrid[0:n, 0:n]
    return ScalarField(np.where(xx > yy, high, low).astype(float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
