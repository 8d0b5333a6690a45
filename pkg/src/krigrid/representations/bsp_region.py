"""Bottom-up binary partition tree built by Kruskal merging on the 4-adjacency graph.

Edges are weighted by the absolute difference of (optionally quantised)
neighbouring values and processed in increasing ``(weight, edge index)``
order, where horizontal edges are numbered before vertical ones, each
row-major.  Every successful union is a merge-tree node whose altitude is
the edge weight.

The final partition keeps a merge, i.e. fuses its two children into one
region, when the altitude is 0 (flat zones are never split) or when either
child covers fewer than ``min_region_px`` pixels (a small region is absorbed
by its sibling).  Every resulting region therefore holds at least
``min_region_px`` pixels unless the whole field is smaller than that.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..raster_io import ScalarField
from .base import DiscreteRepresentation, timed_build

DEFAULT_MIN_REGION_PX = 10
DEFAULT_QUANTISATION = 256


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root


class BspRegionPayload:
    def __init__(self, width, height, labels, values, merge_children=None, merge_altitude=None):
        self.width = width
        self.height = height
        self.labels = labels
        self.values = values
        self.merge_children = merge_children
        self.merge_altitude = merge_altitude

    @property
    def leaf_count(self) -> int:
        return len(self.values)

    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=len(self.values))

    def render(self, width: int, height: int) -> np.ndarray:
        return self.values[self.labels]

    def leaf_regions(self, width: int, height: int):
        for k, v in enumerate(self.values):
            yield self.labels == k, float(v)

    def runs(self) -> list[list[tuple[int, int, int]]]:
        """Per leaf, its horizontal pixel runs ``(row, start, length)`` in row-major order."""
        out: list[list[tuple[int, int, int]]] = [[] for _ in range(len(self.values))]
        for row in range(self.height):
            line = self.labels[row]
            cuts = np.flatnonzero(np.diff(line)) + 1
            starts = np.concatenate([[0], cuts])
            ends = np.concatenate([cuts, [self.width]])
            for s, e in zip(starts.tolist(), ends.tolist()):
                out[int(line[s])].append((row, s, e - s))
        return out


def _edges(h: int, w: int):
    idx = np.arange(h * w).reshape(h, w)
    ea = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    eb = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return ea, eb


def _relabel_first_seen(labels: np.ndarray) -> np.ndarray:
    """Renumber labels 0..K-1 in order of first row-major occurrence."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    lut = np.empty(flat.max() + 1, dtype=np.int64)
    lut[uniq] = np.argsort(np.argsort(first))
    return lut[flat].reshape(labels.shape)


def _bsp_region(field: ScalarField, min_region_px: int, quantisation: int) -> BspRegionPayload:
    h, w = field.shape
    vals = field.values
    if quantisation:
        q = np.floor(vals * (quantisation - 1) + 0.5)
    else:
        q = vals
    qf = q.ravel()
    ea, eb = _edges(h, w)
    wgt = np.abs(qf[ea] - qf[eb])

    # flat zones: components over zero-weight edges (altitude-0 merges are always kept)
    zero = wgt == 0
    n = h * w
    graph = coo_matrix((np.ones(int(zero.sum())), (ea[zero], eb[zero])), shape=(n, n))
    n_zones, zone = connected_components(graph, directed=False)
    area = np.bincount(zone, minlength=n_zones).tolist()

    # zone adjacency: only the first (weight, index) edge between two zones can merge them
    nz = ~zero
    za, zb, zw = zone[ea[nz]], zone[eb[nz]], wgt[nz]
    eidx = np.flatnonzero(nz)
    lo, hi = np.minimum(za, zb), np.maximum(za, zb)
    order = np.lexsort((eidx, zw))
    lo, hi, zw = lo[order], hi[order], zw[order]
    pair = lo.astype(np.int64) * n_zones + hi
    _, first = np.unique(pair, return_index=True)
    first.sort()
    lo, hi, zw = lo[first].tolist(), hi[first].tolist(), zw[first].tolist()

    tree = _UnionFind(n_zones)
    final = _UnionFind(n_zones)
    node_of = list(range(n_zones))  # tree root -> merge-tree node id
    children, altitude = [], []
    merges_left = n_zones - 1
    for a, b, alt in zip(lo, hi, zw):
        if merges_left == 0:
            break
        ra, rb = tree.find(a), tree.find(b)
        if ra == rb:
            continue
        small = min(area[ra], area[rb]) < min_region_px
        children.append((node_of[ra], node_of[rb]))
        altitude.append(alt)
        tree.parent[rb] = ra
        area[ra] += area[rb]
        node_of[ra] = n_zones + len(children) - 1
        merges_left -= 1
        if small:
            fa, fb = final.find(a), final.find(b)
            if fa != fb:
                final.parent[fb] = fa

    roots = np.array([final.find(z) for z in range(n_zones)], dtype=np.int64)
    labels = _relabel_first_seen(roots[zone].reshape(h, w))
    counts = np.bincount(labels.ravel())
    sums = np.bincount(labels.ravel(), weights=vals.ravel())
    values = sums / counts
    return BspRegionPayload(
        w, h, labels, values,
        np.asarray(children, dtype=np.int64).reshape(-1, 2),
        np.asarray(altitude, dtype=np.float64),
    )


def build_bsp_region(
    field: ScalarField,
    min_region_px: int = DEFAULT_MIN_REGION_PX,
    quantisation: int = DEFAULT_QUANTISATION,
) -> DiscreteRepresentation:
    """Region partition from the pruned Kruskal binary partition tree.

    ``quantisation`` levels (default 256) are applied to values before edge
    weighting; ``0`` uses raw values.
    """
    return timed_build("bsp-region", field, _bsp_region, min_region_px, quantisation)
