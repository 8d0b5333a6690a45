"""Top-down binary space partition by least-squares line selection.

A split line is parameterised by its normal angle (integer centidegrees in
``[0, 18000)``) and an integer offset ``rho`` in cell units measured from the
field origin.  A cell centre ``p`` goes to child 0 when
``p . (cos a, sin a) <= rho`` and to child 1 otherwise.  Build, render and
decode all call :func:`line_side`, so ownership is bit-identical everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from ..raster_io import ScalarField
from .base import DiscreteRepresentation, timed_build

DEFAULT_MAX_DEPTH = 9
DEFAULT_HOM_THRESH = 2e-4
DEFAULT_ANGLE_STEP = 5
DEFAULT_OFFSET_STEP = 2
DEFAULT_PRUNE_KEEP = 16


def line_normal(angle_cd: int) -> tuple[float, float]:
    theta = math.radians(angle_cd / 100.0)
    return math.cos(theta), math.sin(theta)


def line_side(xs: np.ndarray, ys: np.ndarray, angle_cd: int, offset: int) -> np.ndarray:
    """True where the point lies on child 0's side of the line."""
    c, s = line_normal(angle_cd)
    return xs * c + ys * s <= offset


def clip_polygon(poly: list[tuple[float, float]], angle_cd: int, offset: int, keep_low: bool):
    """Clip a convex polygon to one half-plane of a split line (Sutherland-Hodgman)."""
    c, s = line_normal(angle_cd)
    sign = 1.0 if keep_low else -1.0
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp = sign * (p[0] * c + p[1] * s - offset)
        fq = sign * (q[0] * c + q[1] * s - offset)
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


@dataclass
class BspNode:
    depth: int
    polygon: list[tuple[float, float]]
    value: float
    split: Optional[tuple[int, int]] = None  # (angle_cd, offset)
    children: list["BspNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.split is None


class BspPayload:
    def __init__(self, width: int, height: int, root: BspNode):
        self.width = width
        self.height = height
        self.root = root

    def preorder(self) -> Iterator[BspNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> list[BspNode]:
        return [n for n in self.preorder() if n.is_leaf]

    @property
    def leaf_count(self) -> int:
        return sum(1 for n in self.preorder() if n.is_leaf)

    def render(self, width: int, height: int) -> np.ndarray:
        out = np.full(width * height, np.nan)
        xs = (np.arange(width * height) % width) + 0.5
        ys = (np.arange(width * height) // width) + 0.5
        stack = [(self.root, np.arange(width * height))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.value
                continue
            low = line_side(xs[idx], ys[idx], *node.split)
            stack.append((node.children[0], idx[low]))
            stack.append((node.children[1], idx[~low]))
        return out.reshape(height, width)

    def leaf_regions(self, width: int, height: int):
        # independent of render(): each leaf is the conjunction of its path's half-planes
        xs, ys = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
        stack = [(self.root, np.ones((height, width), dtype=bool))]
        while stack:
            node, mask = stack.pop()
            if node.is_leaf:
                yield mask, node.value
                continue
            low = line_side(xs, ys, *node.split)
            stack.append((node.children[1], mask & ~low))
            stack.append((node.children[0], mask & low))


def _candidate_scores(xs, ys, v, angles, offset_step):
    """Cheap pruning score for every (angle, offset) candidate of a region.

    The score is the gap between the two side means weighted by side balance
    ``min(n0, n1) / n``, computed from sorted projections.  Lines leaving a
    side empty are skipped.
    """
    n = v.size
    cands = []
    for angle_cd in angles:
        c, s = line_normal(angle_cd)
        proj = xs * c + ys * s
        order = np.argsort(proj, kind="stable")
        sp = proj[order]
        csum = np.concatenate([[0.0], np.cumsum(v[order])])
        lo = math.ceil(sp[0] / offset_step) * offset_step
        hi = math.floor(sp[-1] / offset_step) * offset_step
        if hi < lo:
            continue
        offsets = np.arange(lo, hi + 1, offset_step, dtype=np.int64)
        n0 = np.searchsorted(sp, offsets, side="right")
        ok = (n0 > 0) & (n0 < n)
        if not ok.any():
            continue
        offsets, n0 = offsets[ok], n0[ok]
        s0 = csum[n0]
        gap = np.abs(s0 / n0 - (csum[-1] - s0) / (n - n0))
        score = gap * np.minimum(n0, n - n0) / n
        for off, sc in zip(offsets.tolist(), score.tolist()):
            cands.append((-sc, angle_cd, off))
    return cands


def _best_split(xs, ys, v, angles, offset_step, prune_keep):
    cands = _candidate_scores(xs, ys, v, angles, offset_step)
    if not cands:
        return None
    cands.sort()
    best = None
    for _, angle_cd, off in cands[:prune_keep]:
        low = line_side(xs, ys, angle_cd, off)
        n0 = int(low.sum())
        if n0 == 0 or n0 == v.size:
            continue
        a, b = v[low], v[~low]
        sse = float(np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2))
        key = (sse, angle_cd, off)
        if best is None or key < best[0]:
            best = (key, low)
    if best is None:
        return None
    (_, angle_cd, off), low = best
    return angle_cd, off, low


def _bsp(field: ScalarField, max_depth, hom_thresh, angle_step, offset_step, prune_keep) -> BspPayload:
    if 18000 % int(round(angle_step * 100)) != 0:
        raise ValueError("angle_step must divide 180 degrees")
    angles = list(range(0, 18000, int(round(angle_step * 100))))
    h, w = field.shape
    flat = field.values.ravel()
    all_idx = np.arange(w * h)
    xs_all = (all_idx % w) + 0.5
    ys_all = (all_idx // w) + 0.5
    rect = [(0.0, 0.0), (float(w), 0.0), (float(w), float(h)), (0.0, float(h))]
    root = BspNode(0, rect, 0.0)
    stack = [(root, all_idx)]
    while stack:
        node, idx = stack.pop()
        v = flat[idx]
        mean = float(v.mean())
        node.value = mean
        if node.depth >= max_depth or float(np.mean((v - mean) ** 2)) <= hom_thresh or idx.size < 2:
            continue
        xs, ys = xs_all[idx], ys_all[idx]
        found = _best_split(xs, ys, v, angles, offset_step, prune_keep)
        if found is None:
            continue
        angle_cd, off, low = found
        node.split = (angle_cd, off)
        kids = []
        for keep_low, sub in ((True, idx[low]), (False, idx[~low])):
            poly = clip_polygon(node.polygon, angle_cd, off, keep_low)
            kids.append((BspNode(node.depth + 1, poly, 0.0), sub))
        node.children = [k for k, _ in kids]
        stack.extend(reversed(kids))
    return BspPayload(w, h, root)


def build_bsp_lse(
    field: ScalarField,
    max_depth: int = DEFAULT_MAX_DEPTH,
    hom_thresh: float = DEFAULT_HOM_THRESH,
    angle_step: float = DEFAULT_ANGLE_STEP,
    offset_step: int = DEFAULT_OFFSET_STEP,
    prune_keep: int = DEFAULT_PRUNE_KEEP,
) -> DiscreteRepresentation:
    """Recursive binary split by the least-squares line from a pruned candidate set.

    Candidates lie on an ``angle_step`` x ``offset_step`` grid.  All are
    cheap-scored, the best ``prune_keep`` are evaluated by exact two-sided
    squared error, and the minimiser splits the region (ties: smallest angle,
    then smallest offset).  Recursion stops at ``max_depth`` or when the region
    variance is ``<= hom_thresh``.
    """
    return timed_build("bsp-lse", field, _bsp, max_depth, hom_thresh, angle_step, offset_step, prune_keep)
