"""Variable-resolution pointy-top hexagon maps.

Hexagons use axial coordinates ``(q, r)``; a level-``l`` hexagon has edge
``base_edge * 2**l`` and its centre sits at
``(edge * sqrt(3) * (q + r / 2), edge * 1.5 * r)`` in cell coordinates.
Each field cell belongs to the base hexagon nearest its centre.  Hexagons do
not nest exactly, so a level-``l`` hexagon's parent is the level-``l+1``
hexagon nearest its centre.  In parent axial coordinates that centre is
exactly ``(q / 2, r / 2)``, which often ties, so a fixed nudge of
``(2**-20, 2**-21)`` is added before rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..raster_io import ScalarField
from .base import DiscreteRepresentation, RepresentationError, timed_build

SQRT3 = math.sqrt(3.0)
NUDGE_Q = 2.0**-20
NUDGE_R = 2.0**-21

DEFAULT_BASE_EDGE = 4.0
DEFAULT_LEVELS = 4
DEFAULT_THRESHOLDS = (2e-4, 2e-4, 2e-4, 2e-4)


def cube_round(qf, rf):
    """Round fractional axial coordinates to the containing hexagon."""
    qf = np.asarray(qf, dtype=np.float64)
    rf = np.asarray(rf, dtype=np.float64)
    sf = -qf - rf
    q = np.floor(qf + 0.5)
    r = np.floor(rf + 0.5)
    s = np.floor(sf + 0.5)
    dq, dr, ds = np.abs(q - qf), np.abs(r - rf), np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(np.int64), r.astype(np.int64)


def point_to_axial(x, y, edge: float):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return cube_round((SQRT3 / 3.0 * x - y / 3.0) / edge, (2.0 / 3.0 * y) / edge)


def axial_to_point(q, r, edge: float):
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    return edge * SQRT3 * (q + r / 2.0), edge * 1.5 * r


def parent_axial(q, r):
    """Axial coordinates of the next-coarser hexagon nearest to ``(q, r)``'s centre."""
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    return cube_round(q / 2.0 + NUDGE_Q, r / 2.0 + NUDGE_R)


def ancestor_axial(q, r, levels_up: int):
    for _ in range(levels_up):
        q, r = parent_axial(q, r)
    return np.asarray(q, dtype=np.int64), np.asarray(r, dtype=np.int64)


@dataclass(frozen=True)
class HexCell:
    level: int
    q: int
    r: int
    value: float
    mse: float
    count: int


def _key(q, r) -> np.ndarray:
    return (np.asarray(q, dtype=np.int64) << 32) ^ (np.asarray(r, dtype=np.int64) & 0xFFFFFFFF)


class HexMapPayload:
    def __init__(self, width, height, base_edge, cells: Sequence[HexCell], thresholds=()):
        self.width = width
        self.height = height
        self.base_edge = float(base_edge)
        self.cells = list(cells)
        self.thresholds = tuple(thresholds)

    @property
    def leaf_count(self) -> int:
        return len(self.cells)

    @property
    def max_level(self) -> int:
        return max(c.level for c in self.cells)

    def base_axial(self, width: int, height: int):
        cx, cy = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
        return point_to_axial(cx, cy, self.base_edge)

    def _owner_index(self, width: int, height: int) -> np.ndarray:
        bq, br = self.base_axial(width, height)
        keys, first, inv = np.unique(_key(bq, br).ravel(), return_index=True, return_inverse=True)
        lookup = {(c.level, c.q, c.r): k for k, c in enumerate(self.cells)}
        owner = np.full(len(keys), -1, dtype=np.int64)
        q, r = bq.ravel()[first], br.ravel()[first]
        for level in range(self.max_level + 1):
            for i in np.flatnonzero(owner < 0):
                k = lookup.get((level, int(q[i]), int(r[i])))
                if k is not None:
                    owner[i] = k
            q, r = parent_axial(q, r)
        return owner[inv.reshape(-1)].reshape(height, width)

    def render(self, width: int, height: int) -> np.ndarray:
        owner = self._owner_index(width, height)
        values = np.array([c.value for c in self.cells])
        return np.where(owner >= 0, values[np.maximum(owner, 0)], np.nan)

    def leaf_regions(self, width: int, height: int):
        bq, br = self.base_axial(width, height)
        anc = [(bq, br)]
        for _ in range(self.max_level):
            anc.append(parent_axial(*anc[-1]))
        for c in self.cells:
            q, r = anc[c.level]
            yield (q == c.q) & (r == c.r), c.value


def _hexmap(field: ScalarField, base_edge: float, levels: int, thresholds: Sequence[float]) -> HexMapPayload:
    h, w = field.shape
    if base_edge <= 0 or base_edge > max(w, h):
        raise RepresentationError(f"base edge {base_edge} does not fit a {w}x{h} field")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if len(thresholds) != levels:
        raise ValueError(f"need {levels} thresholds, got {len(thresholds)}")
    cx, cy = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    bq, br = point_to_axial(cx.ravel(), cy.ravel(), base_edge)
    vals = field.values.ravel()

    keys, first, inv = np.unique(_key(bq, br), return_index=True, return_inverse=True)
    qs, rs = [bq[first]], [br[first]]
    counts = [np.bincount(inv, minlength=len(keys)).astype(np.float64)]
    sums = [np.bincount(inv, weights=vals, minlength=len(keys))]
    means0 = sums[0] / counts[0]
    mses = [np.bincount(inv, weights=(vals - means0[inv]) ** 2, minlength=len(keys)) / counts[0]]
    parents = []
    for _ in range(levels):
        pq, pr = parent_axial(qs[-1], rs[-1])
        pkeys, pfirst, pinv = np.unique(_key(pq, pr), return_index=True, return_inverse=True)
        parents.append(pinv)
        cnt = np.bincount(pinv, weights=counts[-1], minlength=len(pkeys))
        sm = np.bincount(pinv, weights=sums[-1], minlength=len(pkeys))
        child_mean = sums[-1] / counts[-1]
        mean = sm / cnt
        err = np.bincount(pinv, weights=counts[-1] * (child_mean - mean[pinv]) ** 2, minlength=len(pkeys)) / cnt
        qs.append(pq[pfirst])
        rs.append(pr[pfirst])
        counts.append(cnt)
        sums.append(sm)
        mses.append(err)

    cells = []
    live = np.ones(len(qs[levels]), dtype=bool)
    for level in range(levels, -1, -1):
        if level > 0:
            take = live & (mses[level] <= thresholds[level - 1])
        else:
            take = live
        for i in np.flatnonzero(take):
            cells.append(HexCell(level, int(qs[level][i]), int(rs[level][i]),
                                 float(sums[level][i] / counts[level][i]), float(mses[level][i]),
                                 int(counts[level][i])))
        if level > 0:
            expand = live & ~take
            live = expand[parents[level - 1]]
    return HexMapPayload(w, h, base_edge, cells, thresholds)


def build_hexmap(
    field: ScalarField,
    base_edge: float = DEFAULT_BASE_EDGE,
    levels: int = DEFAULT_LEVELS,
    error_thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> DiscreteRepresentation:
    """Select hexagons top-down by error threshold.

    ``levels`` counts the coarser levels above the base; ``error_thresholds[l-1]``
    bounds the MSE of a level-``l`` hexagon's mean against its children's
    means (weighted by cell count).  A hexagon within its threshold is kept
    whole; otherwise its children are examined.  Base hexagons are always
    kept when reached.  Every kept hexagon carries the mean of its cells.
    A single threshold, or a list of identical ones such as the default,
    applies to every level.
    """
    thresholds = tuple(float(t) for t in np.atleast_1d(error_thresholds))
    if len(set(thresholds)) == 1:
        thresholds = thresholds[:1] * int(levels)
    return timed_build("hexmap", field, _hexmap, float(base_edge), int(levels), thresholds)
