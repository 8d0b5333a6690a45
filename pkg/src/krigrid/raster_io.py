"""Semantic raster ingestion, windowed sampling and field image I/O.

Coordinates follow image convention: ``x`` runs along columns, ``y`` along
rows, and pixel ``(col, row)`` covers the unit square
``[col, col + 1) x [row, row + 1)``.  Arrays are stored row-major with shape
``(height, width)``.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np
from PIL import Image

RED = (255, 0, 0)
GREEN = (0, 255, 0)
BLACK = (0, 0, 0)
LABEL_COLOURS = (RED, GREEN, BLACK)

#: The sampling procedure counts red pixels as weeds, so red is the default.
DEFAULT_WEED_COLOUR = RED

PathLike = Union[str, os.PathLike]


class RasterError(ValueError):
    """Raised for undecodable or malformed raster input."""


@dataclass(frozen=True)
class SemanticRaster:
    """Boolean weed mask extracted from a labelled orthomosaic."""

    weed_mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.weed_mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] == 0 or mask.shape[1] == 0:
            raise RasterError(f"weed mask must be a non-empty 2D array, got shape {mask.shape}")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "weed_mask", mask)

    @property
    def width(self) -> int:
        return self.weed_mask.shape[1]

    @property
    def height(self) -> int:
        return self.weed_mask.shape[0]

    @cached_property
    def _integral(self) -> np.ndarray:
        # (H+1, W+1) summed-area table of weed counts
        table = np.zeros((self.height + 1, self.width + 1), dtype=np.int64)
        np.cumsum(np.cumsum(self.weed_mask, axis=0, dtype=np.int64), axis=1, out=table[1:, 1:])
        return table

    def count_weeds(self, x0: int, y0: int, x1: int, y1: int) -> int:
        """Weed pixels in the half-open box ``[x0, x1) x [y0, y1)`` (pre-clipped)."""
        t = self._integral
        return int(t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0])

    @property
    def coverage(self) -> float:
        return float(self.weed_mask.mean())


class SamplePoint(NamedTuple):
    x: float
    y: float
    value: float


@dataclass(frozen=True)
class ScalarField:
    """Dense grid of weed-coverage values in ``[0, 1]``, shape ``(height, width)``."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(f"field must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("field values must lie in [0, 1]; use ScalarField.clamped")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def clamped(cls, values) -> "ScalarField":
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        return cls(np.clip(arr, 0.0, 1.0))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def quantised(self) -> np.ndarray:
        return quantise(self.values)

    def __eq__(self, other):
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None


def quantise(values) -> np.ndarray:
    """Map ``[0, 1]`` values to 8-bit intensities, rounding half up."""
    v = np.asarray(values, dtype=np.float64)
    return np.floor(np.clip(v, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def parse_colour(text: str) -> tuple[int, int, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"colour must be R,G,B, got {text!r}")
    rgb = tuple(int(p) for p in parts)
    if any(c < 0 or c > 255 for c in rgb):
        raise ValueError(f"colour components must be in 0..255, got {text!r}")
    return rgb  # type: ignore[return-value]


def _check_weed_colour(weed_colour) -> tuple[int, int, int]:
    rgb = tuple(int(c) for c in weed_colour)
    if rgb not in LABEL_COLOURS:
        raise ValueError(f"weed colour must be one of the label colours {LABEL_COLOURS}, got {rgb}")
    return rgb  # type: ignore[return-value]


def load_orthomosaic(image: Union[bytes, PathLike], weed_colour=DEFAULT_WEED_COLOUR) -> SemanticRaster:
    """Decode a labelled PNG and mark pixels whose RGB equals ``weed_colour``.

    ``image`` may be raw PNG bytes or a path.  Alpha is ignored.
    """
    rgb = _check_weed_colour(weed_colour)
    try:
        if isinstance(image, (bytes, bytearray, memoryview)):
            img = Image.open(io.BytesIO(bytes(image)))
        else:
            img = Image.open(image)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise RasterError(f"cannot decode raster: {exc}") from exc
    if img.width == 0 or img.height == 0:
        raise RasterError("raster has zero dimension")
    pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
    mask = np.all(pixels == np.array(rgb, dtype=np.uint8), axis=-1)
    return SemanticRaster(mask)


def weed_fraction_window(raster: SemanticRaster, cx: int, cy: int, window: int) -> float:
    """Weed fraction of a ``window`` x ``window`` box centred on pixel ``(cx, cy)``.

    The box spans ``[cx - window // 2, cx - window // 2 + window)`` on each axis
    and is clipped to the raster; the fraction is taken over the clipped area.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if not (0 <= cx < raster.width and 0 <= cy < raster.height):
        raise ValueError(f"centre ({cx}, {cy}) outside raster {raster.width}x{raster.height}")
    half = window // 2
    x0 = max(cx - half, 0)
    y0 = max(cy - half, 0)
    x1 = min(cx - half + window, raster.width)
    y1 = min(cy - half + window, raster.height)
    area = (x1 - x0) * (y1 - y0)
    return raster.count_weeds(x0, y0, x1, y1) / area


def sample_generator(seed: int) -> np.random.Generator:
    """The project-wide sampling RNG: numpy's PCG64 bit generator."""
    return np.random.Generator(np.random.PCG64(seed))


def sample_uniform(raster: SemanticRaster, n: int, window: int, seed: int) -> list[SamplePoint]:
    """Draw ``n`` uniform points over the raster and average-pool weeds around each.

    Coordinates are continuous in ``[0, width) x [0, height)``, drawn as
    ``(x, y)`` pairs from ``Generator.random`` on a PCG64 stream seeded with
    ``seed``.  The pooling window is centred on the pixel containing the point.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if window < 1:
        raise ValueError("window must be >= 1")
    rng = sample_generator(seed)
    uv = rng.random((n, 2))
    xs = uv[:, 0] * raster.width
    ys = uv[:, 1] * raster.height
    points = []
    for x, y in zip(xs.tolist(), ys.tolist()):
        # guard against x == width after float rounding
        cx = min(int(x), raster.width - 1)
        cy = min(int(y), raster.height - 1)
        points.append(SamplePoint(x, y, weed_fraction_window(raster, cx, cy, window)))
    return points


def write_field_png(field: ScalarField, path: PathLike) -> None:
    """Write an 8-bit grayscale PNG with pixel = round(value * 255)."""
    Image.fromarray(quantise(field.values), mode="L").save(path, format="PNG")


def read_field_png(path: PathLike) -> ScalarField:
    img = Image.open(path)
    arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return ScalarField(arr)


def write_field_npy(field: ScalarField, path: PathLike) -> None:
    np.save(path, np.ascontiguousarray(field.values), allow_pickle=False)


def read_field(path: PathLike) -> ScalarField:
    """Load a field from ``.npy`` (lossless) or an 8-bit grayscale PNG."""
    if str(path).lower().endswith(".npy"):
        return ScalarField(np.load(path, allow_pickle=False))
    return read_field_png(path)


def write_samples_csv(points: Iterable[SamplePoint], path: PathLike) -> None:
    # repr() round-trips doubles exactly
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "value"])
        for p in points:
            writer.writerow([repr(float(p.x)), repr(float(p.y)), repr(float(p.value))])


def read_samples_csv(path: PathLike) -> list[SamplePoint]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "y", "value"]:
            raise ValueError(f"{path}: expected header x,y,value, got {reader.fieldnames}")
        return [SamplePoint(float(r["x"]), float(r["y"]), float(r["value"])) for r in reader]


def samples_to_arrays(points: Sequence[SamplePoint]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()
