"""Synthetic weed rasters and smooth fields for demos and tests."""
from __future__ import annotations

import io

import numpy as np
from PIL import Image
from scipy import ndimage

from .raster_io import BLACK, GREEN, RED, SamplePoint, ScalarField, SemanticRaster


def blob_field(width: int, height: int, n_blobs: int = 12, seed: int = 0, radius=(0.03, 0.15)) -> ScalarField:
    """Sum of random Gaussian bumps, clipped to ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] + 0.5
    scale = max(width, height)
    out = np.zeros((height, width))
    for _ in range(n_blobs):
        cx, cy = rng.random() * width, rng.random() * height
        rad = rng.uniform(*radius) * scale
        amp = rng.uniform(0.2, 0.9)
        out += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * rad * rad))
    return ScalarField.clamped(out)


def smooth_noise_field(width: int, height: int, corr: float = 8.0, seed: int = 0) -> ScalarField:
    """Gaussian-filtered white noise rescaled to span ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    z = ndimage.gaussian_filter(rng.standard_normal((height, width)), corr, mode="wrap")
    z -= z.min()
    peak = z.max()
    return ScalarField(z / peak if peak > 0 else z)


def patchy_labels(width: int, height: int, n_patches: int = 8, seed: int = 0, density: float = 0.6,
                  patch_radius=(0.04, 0.18), crop_rows: bool = True) -> np.ndarray:
    """RGB label image: weed patches (red), crop rows (green), background (black)."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, 3), dtype=np.uint8)
    img[:] = BLACK
    yy, xx = np.mgrid[0:height, 0:width] + 0.5
    if crop_rows:
        spacing = max(4, width // 24)
        rows = (np.floor(xx) % spacing) < max(1, spacing // 5)
        img[rows & (rng.random((height, width)) < 0.5)] = GREEN
    scale = max(width, height)
    intensity = np.zeros((height, width))
    for _ in range(n_patches):
        cx, cy = rng.random() * width, rng.random() * height
        rx = rng.uniform(*patch_radius) * scale
        ry = rx * rng.uniform(0.4, 1.0)
        theta = rng.uniform(0, np.pi)
        dx, dy = xx - cx, yy - cy
        u = (dx * np.cos(theta) + dy * np.sin(theta)) / rx
        v = (-dx * np.sin(theta) + dy * np.cos(theta)) / ry
        intensity = np.maximum(intensity, np.exp(-(u * u + v * v)))
    weeds = rng.random((height, width)) < density * intensity
    img[weeds] = RED
    return img


def patchy_raster(width: int, height: int, n_patches: int = 8, seed: int = 0, **kwargs) -> SemanticRaster:
    img = patchy_labels(width, height, n_patches, seed, **kwargs)
    return SemanticRaster(np.all(img == np.array(RED, dtype=np.uint8), axis=-1))


def png_bytes(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def gp_samples(n: int, side: float, sill: float = 1.0, range_: float = 30.0, seed: int = 0,
               kind: str = "exponential") -> list[SamplePoint]:
    """Exact draw of a zero-mean stationary GP at ``n`` uniform points in a ``side`` square.

    The covariance is ``sill - gamma(h)`` for the named variogram (no nugget);
    the Cholesky factor carries a ``1e-10`` diagonal jitter.
    """
    from scipy.spatial.distance import cdist

    from .kriging import VariogramModel, semivariance

    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2)) * side
    model = VariogramModel(kind, sill=sill, range=range_)
    cov = sill - semivariance(model, cdist(pts, pts))
    np.fill_diagonal(cov, sill + 1e-10)
    z = np.linalg.cholesky(cov) @ rng.standard_normal(n)
    return [SamplePoint(float(x), float(y), float(v)) for (x, y), v in zip(pts, z)]
