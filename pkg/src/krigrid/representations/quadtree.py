"""Quadtree and wedgelet decompositions.

Both live on the same lattice: the root is the smallest power-of-two square
anchored at the origin that contains the field, and a node at depth ``d``
with lattice index ``(ix, iy)`` covers ``[ix*s, (ix+1)*s) x [iy*s, (iy+1)*s)``
with ``s = side >> d``, clipped to the field.  Children lying wholly outside
the field are empty and never stored.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np

from ..raster_io import ScalarField
from .base import DiscreteRepresentation, timed_build

DEFAULT_MAX_DEPTH = 9
DEFAULT_HOM_THRESH = 2e-4
DEFAULT_LINE_THRESH = 2e-4
DEFAULT_LINE_STEP = 2
DEFAULT_WEDGE_MAX_SIZE = 32


@dataclass(frozen=True)
class Wedge:
    """A dividing line between two integer points on a node's boundary.

    Cells whose centre is strictly left of ``(x1, y1) -> (x2, y2)`` (positive
    cross product in image coordinates) take ``value_a``; the rest ``value_b``.
    """

    x1: int
    y1: int
    x2: int
    y2: int
    value_a: float
    value_b: float

    def side_a(self, cx2: np.ndarray, cy2: np.ndarray) -> np.ndarray:
        """Side test on doubled integer centre coordinates (``2*col + 1``)."""
        dx = 2 * (self.x2 - self.x1)
        dy = 2 * (self.y2 - self.y1)
        return dx * (cy2 - 2 * self.y1) - dy * (cx2 - 2 * self.x1) > 0


@dataclass
class QuadLeaf:
    depth: int
    ix: int
    iy: int
    value: float
    wedge: Optional[Wedge] = None


def lattice_side(width: int, height: int) -> int:
    side = 1
    while side < max(width, height):
        side *= 2
    return side


class QuadtreePayload:
    def __init__(self, width: int, height: int, leaves: dict[tuple[int, int, int], QuadLeaf]):
        self.width = width
        self.height = height
        self.side = lattice_side(width, height)
        self.leaves = leaves

    @property
    def leaf_count(self) -> int:
        return sum(2 if leaf.wedge is not None else 1 for leaf in self.leaves.values())

    @property
    def wedge_count(self) -> int:
        return sum(leaf.wedge is not None for leaf in self.leaves.values())

    def bounds(self, depth: int, ix: int, iy: int) -> tuple[int, int, int, int]:
        size = self.side >> depth
        x0, y0 = ix * size, iy * size
        return x0, y0, min(x0 + size, self.width), min(y0 + size, self.height)

    def is_empty(self, depth: int, ix: int, iy: int) -> bool:
        x0, y0, _, _ = self.bounds(depth, ix, iy)
        return x0 >= self.width or y0 >= self.height

    def preorder(self) -> Iterator[tuple[int, int, int, Optional[QuadLeaf]]]:
        """Non-empty nodes root first; children in NW, NE, SW, SE order."""
        stack = [(0, 0, 0)]
        while stack:
            d, ix, iy = stack.pop()
            leaf = self.leaves.get((d, ix, iy))
            yield d, ix, iy, leaf
            if leaf is None:
                kids = [(d + 1, 2 * ix + cx, 2 * iy + cy) for cy in (0, 1) for cx in (0, 1)]
                for kid in reversed(kids):
                    if not self.is_empty(*kid):
                        stack.append(kid)

    def render(self, width: int, height: int) -> np.ndarray:
        out = np.full((height, width), np.nan)
        for leaf in self.leaves.values():
            x0, y0, x1, y1 = self.bounds(leaf.depth, leaf.ix, leaf.iy)
            if leaf.wedge is None:
                out[y0:y1, x0:x1] = leaf.value
            else:
                a = _wedge_side(leaf.wedge, x0, y0, x1, y1)
                out[y0:y1, x0:x1] = np.where(a, leaf.wedge.value_a, leaf.wedge.value_b)
        return out

    def leaf_regions(self, width: int, height: int):
        for leaf in self.leaves.values():
            x0, y0, x1, y1 = self.bounds(leaf.depth, leaf.ix, leaf.iy)
            box = np.zeros((height, width), dtype=bool)
            box[y0:y1, x0:x1] = True
            if leaf.wedge is None:
                yield box, leaf.value
            else:
                a = np.zeros((height, width), dtype=bool)
                a[y0:y1, x0:x1] = _wedge_side(leaf.wedge, x0, y0, x1, y1)
                yield a, leaf.wedge.value_a
                yield box & ~a, leaf.wedge.value_b


def _wedge_side(wedge: Wedge, x0, y0, x1, y1) -> np.ndarray:
    cx2 = 2 * np.arange(x0, x1)[None, :] + 1
    cy2 = 2 * np.arange(y0, y1)[:, None] + 1
    return wedge.side_a(cx2, cy2)


def _perimeter_points(w: int, h: int, step: int) -> list[tuple[int, int]]:
    """Integer points on the boundary of ``[0, w] x [0, h]``, clockwise from the origin."""
    pts = []
    for x in range(0, w, step):
        pts.append((x, 0))
    for y in range(0, h, step):
        pts.append((w, y))
    for x in range(w, 0, -step):
        pts.append((x, h))
    for y in range(h, 0, -step):
        pts.append((0, y))
    seen, out = set(), []
    for p in pts:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


@lru_cache(maxsize=64)
def _wedge_candidates(w: int, h: int, step: int):
    """Endpoints and side-A masks (float rows) of every non-degenerate line in a ``w x h`` block."""
    pts = np.array(_perimeter_points(w, h, step), dtype=np.int64)
    i, j = np.triu_indices(len(pts), k=1)
    p1, p2 = pts[i], pts[j]
    cx2 = (2 * np.arange(w) + 1)[None, :].repeat(h, 0).ravel()
    cy2 = (2 * np.arange(h) + 1)[:, None].repeat(w, 1).ravel()
    dx = 2 * (p2[:, 0] - p1[:, 0])[:, None]
    dy = 2 * (p2[:, 1] - p1[:, 1])[:, None]
    side = dx * (cy2[None, :] - 2 * p1[:, 1:2]) - dy * (cx2[None, :] - 2 * p1[:, 0:1]) > 0
    n_a = side.sum(axis=1)
    ok = (n_a > 0) & (n_a < w * h)
    return p1[ok], p2[ok], side[ok].astype(np.float64), n_a[ok]


def best_wedge(block: np.ndarray, step: int = DEFAULT_LINE_STEP):
    """Best dividing line of a block by two-sided residual variance.

    Returns ``(residual_variance, (x1, y1, x2, y2))`` in block-local
    coordinates, or ``None`` when the block admits no line.  Ties go to the
    first candidate in perimeter enumeration order.
    """
    h, w = block.shape
    p1, p2, masks, n_a = _wedge_candidates(w, h, step)
    if len(n_a) == 0:
        return None
    v = block.ravel() - block.mean()
    n = v.size
    s_a = masks @ v
    q_a = masks @ (v * v)
    s_all, q_all = v.sum(), (v * v).sum()
    n_b = n - n_a
    sse = (q_a - s_a**2 / n_a) + ((q_all - q_a) - (s_all - s_a) ** 2 / n_b)
    k = int(np.argmin(sse))
    return max(float(sse[k]) / n, 0.0), (int(p1[k, 0]), int(p1[k, 1]), int(p2[k, 0]), int(p2[k, 1]))


def _level_stats(values: np.ndarray, side: int, levels: int):
    """Per-level block sums, centred square sums and counts over the padded lattice."""
    h, w = values.shape
    centre = float(values.mean())
    pad = np.zeros((side, side))
    pad[:h, :w] = values - centre
    valid = np.zeros((side, side))
    valid[:h, :w] = 1.0
    n = 1 << levels
    bs = side // n
    s = pad.reshape(n, bs, n, bs).sum(axis=(1, 3))
    q = (pad * pad).reshape(n, bs, n, bs).sum(axis=(1, 3))
    c = valid.reshape(n, bs, n, bs).sum(axis=(1, 3))
    stats = [None] * (levels + 1)
    stats[levels] = (s, q, c)
    for d in range(levels - 1, -1, -1):
        s = s.reshape(1 << d, 2, 1 << d, 2).sum(axis=(1, 3))
        q = q.reshape(1 << d, 2, 1 << d, 2).sum(axis=(1, 3))
        c = c.reshape(1 << d, 2, 1 << d, 2).sum(axis=(1, 3))
        stats[d] = (s, q, c)
    return centre, stats


def _decompose(field: ScalarField, max_depth: int, hom_thresh: float, wedge_params=None) -> QuadtreePayload:
    values = field.values
    h, w = values.shape
    side = lattice_side(w, h)
    levels = min(max_depth, side.bit_length() - 1)
    centre, stats = _level_stats(values, side, levels)
    leaves: dict[tuple[int, int, int], QuadLeaf] = {}
    active = np.ones((1, 1), dtype=bool)
    for d in range(levels + 1):
        s, q, c = stats[d]
        nonempty = c > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(nonempty, s / np.where(nonempty, c, 1), 0.0)
            msq = np.where(nonempty, q / np.where(nonempty, c, 1), 0.0)
        var = msq - mean * mean
        # round-off floor: sums of identical values may leave ~eps residue
        var = np.where(var <= 1e-12 * msq, 0.0, var)
        live = active & nonempty
        is_leaf = live & ((var <= hom_thresh) | (d == levels))
        split = live & ~is_leaf
        if wedge_params is not None and d < levels:
            line_thresh, step, max_size = wedge_params
            size = side >> d
            if size <= max_size:
                for iy, ix in zip(*np.nonzero(split)):
                    x0, y0 = ix * size, iy * size
                    x1, y1 = min(x0 + size, w), min(y0 + size, h)
                    block = values[y0:y1, x0:x1]
                    found = best_wedge(block, step)
                    if found is None or found[0] > line_thresh:
                        continue
                    lx1, ly1, lx2, ly2 = found[1]
                    wedge = Wedge(x0 + lx1, y0 + ly1, x0 + lx2, y0 + ly2, 0.0, 0.0)
                    a = _wedge_side(wedge, x0, y0, x1, y1)
                    wedge = Wedge(wedge.x1, wedge.y1, wedge.x2, wedge.y2,
                                  float(block[a].mean()), float(block[~a].mean()))
                    leaves[(d, int(ix), int(iy))] = QuadLeaf(d, int(ix), int(iy), float(block.mean()), wedge)
                    split[iy, ix] = False
        for iy, ix in zip(*np.nonzero(is_leaf)):
            leaves[(d, int(ix), int(iy))] = QuadLeaf(d, int(ix), int(iy), float(centre + mean[iy, ix]))
        active = np.repeat(np.repeat(split, 2, axis=0), 2, axis=1)
    return QuadtreePayload(w, h, leaves)


def build_quadtree(
    field: ScalarField, max_depth: int = DEFAULT_MAX_DEPTH, hom_thresh: float = DEFAULT_HOM_THRESH
) -> DiscreteRepresentation:
    """Recursive 4-way split until variance <= ``hom_thresh`` or ``max_depth``."""
    return timed_build("quadtree", field, _decompose, max_depth, hom_thresh)


def build_wedgelet(
    field: ScalarField,
    max_depth: int = DEFAULT_MAX_DEPTH,
    hom_thresh: float = DEFAULT_HOM_THRESH,
    line_thresh: float = DEFAULT_LINE_THRESH,
    line_step: int = DEFAULT_LINE_STEP,
    wedge_max_size: int = DEFAULT_WEDGE_MAX_SIZE,
) -> DiscreteRepresentation:
    """Quadtree whose non-homogeneous nodes may instead become a single wedge.

    Before splitting a node no larger than ``wedge_max_size`` cells, every
    line joining two perimeter points (sampled every ``line_step`` cells) is
    scored; if the best two-sided residual variance is ``<= line_thresh`` the
    node becomes a wedge leaf.  ``line_thresh <= 0`` disables wedges.
    """
    params = (line_thresh, line_step, wedge_max_size) if line_thresh > 0 else None
    return timed_build("wedgelet", field, _decompose, max_depth, hom_thresh, params)
