"""Shared types and kernels for the discrete representations."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator, Protocol, Sequence, Union

import numpy as np

from ..raster_io import ScalarField

KINDS = ("quadtree", "wedgelet", "bsp-lse", "bsp-region", "hexmap")


class RepresentationError(ValueError):
    pass


class Payload(Protocol):
    leaf_count: int

    def render(self, width: int, height: int) -> np.ndarray: ...

    def leaf_regions(self, width: int, height: int) -> Iterator[tuple[np.ndarray, float]]: ...


@dataclass
class DiscreteRepresentation:
    kind: str
    payload: Payload
    width: int
    height: int
    build_time: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RepresentationError(f"unknown representation kind {self.kind!r}")

    @property
    def leaf_count(self) -> int:
        return self.payload.leaf_count


def render_repr(rep: DiscreteRepresentation, width: int, height: int) -> ScalarField:
    """Rasterise a representation: each cell takes the value of the leaf owning its centre."""
    if (width, height) != (rep.width, rep.height):
        raise RepresentationError(
            f"render size {width}x{height} differs from source field {rep.width}x{rep.height}"
        )
    out = rep.payload.render(width, height)
    if np.isnan(out).any():
        raise RepresentationError("some cell centres are not covered by any leaf")
    return ScalarField.clamped(out)


def timed_build(kind: str, field: ScalarField, build, *args, **kwargs) -> DiscreteRepresentation:
    t0 = time.perf_counter()
    payload = build(field, *args, **kwargs)
    elapsed = time.perf_counter() - t0
    return DiscreteRepresentation(kind, payload, field.width, field.height, elapsed)


def cell_centre_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)


def _owns_boundary(dx: float, dy: float) -> bool:
    # Edges pointing "up" (dy < 0), or horizontal edges pointing right, keep
    # points lying exactly on them.  A shared edge is traversed in opposite
    # directions by its two polygons, so exactly one of them keeps it.
    return dy < 0 or (dy == 0 and dx > 0)


def polygon_mask(polygon: Sequence[Sequence[float]], width: int, height: int) -> np.ndarray:
    """Cells of a ``height x width`` grid whose centres lie inside a convex polygon.

    Vertices may be given in either orientation.  Centres exactly on an edge
    belong to the polygon only if that edge owns its boundary (see
    ``_owns_boundary``), which assigns shared edges to exactly one side.
    """
    pts = np.asarray(polygon, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("polygon needs at least 3 (x, y) vertices")
    area2 = np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    if area2 == 0:
        raise ValueError("degenerate polygon")
    if area2 < 0:
        pts = pts[::-1]
    cx, cy = cell_centre_grid(width, height)
    inside = np.ones((height, width), dtype=bool)
    for (ax, ay), (bx, by) in zip(pts, np.roll(pts, -1, axis=0)):
        dx, dy = bx - ax, by - ay
        cross = dx * (cy - ay) - dy * (cx - ax)
        if _owns_boundary(dx, dy):
            inside &= cross >= 0
        else:
            inside &= cross > 0
    return inside


def region_stats(field: ScalarField, region: Union[np.ndarray, Sequence[Sequence[float]]]):
    """Mean, population variance and cell count of ``field`` over ``region``.

    ``region`` is either a boolean mask shaped like the field or a convex
    polygon in cell coordinates.
    """
    arr = np.asarray(region)
    if arr.dtype == bool and arr.shape == field.shape:
        mask = arr
    else:
        mask = polygon_mask(region, field.width, field.height)
    vals = field.values[mask]
    if vals.size == 0:
        raise RepresentationError("region contains no cell centres")
    mean = float(vals.mean())
    var = float(np.mean((vals - mean) ** 2))
    return mean, var, int(vals.size)
