"""Similarity metrics between a rendered representation and its reference field.

All metrics work on 8-bit intensities ``floor(v * 255 + 0.5)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import fft, ndimage

from .raster_io import ScalarField, quantise
from .representations import DiscreteRepresentation, deserialize_repr, render_repr, serialize_repr

SSIM_SIGMA = 1.5
SSIM_WIN = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 255.0

HASH_SIDE = 128
HASH_BLOCK = 64
HASH_BITS = HASH_BLOCK * HASH_BLOCK

METRIC_COLUMNS = ("map", "repr", "trial", "one_minus_ssim_e4", "hamming", "mse", "time_s", "size_bytes", "leaf_count")


class MetricError(ValueError):
    pass


def _pair(a: ScalarField, b: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise MetricError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return quantise(a.values).astype(np.float64), quantise(b.values).astype(np.float64)


def ssim(a: ScalarField, b: ScalarField) -> float:
    """Mean structural similarity of the 8-bit quantised fields.

    Local statistics use an 11x11 Gaussian window (sigma 1.5, reflected
    borders) with ``K1 = 0.01``, ``K2 = 0.03`` and dynamic range 255.  The
    mean is taken over cells at least 5 cells from the border, or over all
    cells when the field is too small for that crop.
    """
    x, y = _pair(a, b)
    blur = lambda im: ndimage.gaussian_filter(im, SSIM_SIGMA, mode="reflect", truncate=(SSIM_WIN // 2) / SSIM_SIGMA)
    mx, my = blur(x), blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cxy = blur(x * y) - mx * my
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    # symmetric products so ssim(a, b) == ssim(b, a) bit for bit
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    smap = num / den
    pad = SSIM_WIN // 2
    if min(smap.shape) > 2 * pad:
        smap = smap[pad:-pad, pad:-pad]
    return float(smap.mean())


def phash(field: ScalarField) -> np.ndarray:
    """4096-bit DCT perceptual hash as a boolean vector.

    The 8-bit field is shifted so its minimum is 0, area-averaged to
    128x128, transformed with an orthonormal 2-D DCT-II, and the 64x64
    low-frequency block minus the DC term (4095 coefficients) is thresholded
    against its median.  A final pad bit (always 0) makes 4096 bits.
    """
    q = quantise(field.values).astype(np.int64)
    q = (q - q.min()).astype(np.float32)
    img = Image.fromarray(q, mode="F").resize((HASH_SIDE, HASH_SIDE), Image.BOX)
    coeffs = fft.dctn(np.asarray(img, dtype=np.float64), type=2, norm="ortho")
    block = coeffs[:HASH_BLOCK, :HASH_BLOCK].ravel()[1:]
    bits = np.zeros(HASH_BITS, dtype=bool)
    bits[:-1] = block > np.median(block)
    return bits


def hamming(h1, h2) -> int:
    a = np.asarray(h1, dtype=bool)
    b = np.asarray(h2, dtype=bool)
    if a.shape != b.shape:
        raise MetricError(f"hash length mismatch: {a.size} vs {b.size}")
    return int(np.count_nonzero(a != b))


def mse(a: ScalarField, b: ScalarField) -> float:
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


@dataclass(frozen=True)
class MetricReport:
    one_minus_ssim: float
    hamming: int
    mse: float
    build_time: float
    size_bytes: int
    leaf_count: int

    def row(self, map_name: str, kind: str, trial: int) -> list[str]:
        """CSV cells in ``METRIC_COLUMNS`` order; floats use ``repr`` for exact round trips."""
        return [
            map_name, kind, str(trial), repr(self.one_minus_ssim * 1e4), str(self.hamming),
            repr(self.mse), repr(self.build_time), str(self.size_bytes), str(self.leaf_count),
        ]


def evaluate_encoded(data: bytes, reference: ScalarField, build_time: float = 0.0) -> MetricReport:
    """Score a serialised representation against ``reference``."""
    rep = deserialize_repr(data)
    if (rep.width, rep.height) != (reference.width, reference.height):
        raise MetricError(
            f"representation is {rep.width}x{rep.height} but reference is {reference.width}x{reference.height}")
    rendered = render_repr(rep, reference.width, reference.height)
    return MetricReport(
        one_minus_ssim=1.0 - ssim(rendered, reference),
        hamming=hamming(phash(rendered), phash(reference)),
        mse=mse(rendered, reference),
        build_time=float(build_time),
        size_bytes=len(data),
        leaf_count=rep.leaf_count,
    )


def evaluate(rep: DiscreteRepresentation, reference: ScalarField) -> MetricReport:
    """Score ``rep`` against ``reference``.

    The representation is rendered from its serialised form, so a report
    computed from a stored ``.gpdr`` file equals one computed in memory.
    ``build_time`` is taken from ``rep`` as built.
    """
    if (rep.width, rep.height) != (reference.width, reference.height):
        raise MetricError(
            f"representation is {rep.width}x{rep.height} but reference is {reference.width}x{reference.height}")
    return evaluate_encoded(serialize_repr(rep), reference, rep.build_time)


def read_metrics_csv(path) -> list[dict]:
    """Rows of a metrics CSV with numeric columns parsed."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise MetricError(f"{path}: expected columns {','.join(METRIC_COLUMNS)}")
        for r in reader:
            out.append({
                "map": r["map"], "repr": r["repr"], "trial": int(r["trial"]),
                "one_minus_ssim_e4": float(r["one_minus_ssim_e4"]), "hamming": int(r["hamming"]),
                "mse": float(r["mse"]), "time_s": float(r["time_s"]),
                "size_bytes": int(r["size_bytes"]), "leaf_count": int(r["leaf_count"]),
            })
    return out
