"""Field-distribution features of a weed raster.

Patch statistics, DBSCAN cluster statistics, global Moran's I, Getis-Ord
Gi* hot/cold spots and local Moran outliers.  The grid statistics take a
coarse 2-D array (normally the mean-aggregated weed mask) and use binary
contiguity weights restricted to the grid.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from os import PathLike
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .raster_io import ScalarField, SemanticRaster

FEATURE_NAMES = (
    "weed_coverage_ratio",
    "weed_patches",
    "largest_patch_size",
    "avg_patch_size",
    "patch_size_std",
    "dbscan_num_clusters",
    "dbscan_avg_cluster_size",
    "global_autocorrelation",
    "hotspot_to_coldspot_ratio",
    "hot_to_cold_outlier_ratio",
)

_QUEEN = np.ones((3, 3))
TIE_RTOL = 1e-9
_ROOK = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=float)


class DegenerateFieldError(ValueError):
    """The grid has zero variance, so the statistic is undefined."""


def weed_patches_stats(mask, connectivity: int = 8) -> tuple[int, int, float, float]:
    """Connected components of true cells: ``(count, largest, mean size, population std)``."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    mask = np.asarray(mask, dtype=bool)
    structure = ndimage.generate_binary_structure(2, 2 if connectivity == 8 else 1)
    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return 0, 0, 0.0, 0.0
    sizes = np.bincount(labels.ravel())[1:]
    return int(count), int(sizes.max()), float(sizes.mean()), float(sizes.std())


def dbscan_labels(points, eps: float, min_pts: int) -> tuple[np.ndarray, np.ndarray]:
    """DBSCAN cluster labels (``-1`` noise) and core flags, in input order.

    Neighbourhoods are closed Euclidean balls of radius ``eps`` that include
    the point itself; a point is core when its neighbourhood holds at least
    ``min_pts`` points.  Points are scanned row-major (by ``y``, then ``x``,
    then input position), and a border point joins the first cluster that
    reaches it in that scan.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels, np.zeros(0, dtype=bool)
    tree = cKDTree(pts)
    neigh = tree.query_ball_point(pts, eps)
    core = np.array([len(nb) >= min_pts for nb in neigh])
    visited = np.zeros(n, dtype=bool)
    order = np.lexsort((np.arange(n), pts[:, 0], pts[:, 1]))
    cluster = 0
    for p in order.tolist():
        if visited[p] or not core[p]:
            continue
        visited[p] = True
        labels[p] = cluster
        queue = deque([p])
        while queue:
            q = queue.popleft()
            for r in sorted(neigh[q], key=lambda i: (pts[i, 1], pts[i, 0], i)):
                if labels[r] < 0:
                    labels[r] = cluster
                if core[r] and not visited[r]:
                    visited[r] = True
                    queue.append(r)
        cluster += 1
    return labels, core


def dbscan_clusters(points, eps: float, min_pts: int) -> tuple[int, float, int]:
    """``(num_clusters, mean cluster size in points, noise count)``."""
    labels, _ = dbscan_labels(points, eps, min_pts)
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    noise = int(np.count_nonzero(labels < 0))
    if n_clusters == 0:
        return 0, 0.0, noise
    sizes = np.bincount(labels[labels >= 0], minlength=n_clusters)
    return n_clusters, float(sizes.mean()), noise


def _grid(grid) -> np.ndarray:
    values = grid.values if isinstance(grid, ScalarField) else np.asarray(grid, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("grid must be a non-empty 2-D array")
    if values.min() == values.max():
        raise DegenerateFieldError("grid has zero variance")
    return values


def _kernel(weights: str) -> np.ndarray:
    if weights == "queen":
        return _QUEEN
    if weights == "rook":
        return _ROOK
    raise ValueError(f"unknown contiguity {weights!r}")


def spatial_lag(values: np.ndarray, weights: str = "queen", include_self: bool = False) -> np.ndarray:
    """Sum of neighbouring values under binary contiguity weights."""
    k = _kernel(weights).copy()
    k[1, 1] = 1.0 if include_self else 0.0
    return ndimage.correlate(values, k, mode="constant", cval=0.0)


def neighbour_counts(shape, weights: str = "queen", include_self: bool = False) -> np.ndarray:
    return spatial_lag(np.ones(shape), weights, include_self)


def morans_i(grid, weights: str = "queen") -> float:
    """Global Moran's I, ``(N / W) * sum_ij w_ij z_i z_j / sum_i z_i**2``."""
    x = _grid(grid)
    z = x - x.mean()
    w_total = neighbour_counts(x.shape, weights).sum()
    return float(x.size / w_total * np.sum(z * spatial_lag(z, weights)) / np.sum(z * z))


def getis_ord_z(grid, weights: str = "queen") -> np.ndarray:
    """Gi* z-scores with self-inclusive binary weights.

    ``z_i = (L_i - xbar W_i) / (S sqrt((n W_i - W_i**2) / (n - 1)))`` where
    ``L_i`` is the self-inclusive neighbourhood sum, ``W_i`` its cell count and
    ``S`` the population standard deviation.  Cells whose neighbourhood spans
    the whole grid have no variance and get ``z = 0``.
    """
    x = _grid(grid)
    n = x.size
    xbar = x.mean()
    s = math.sqrt(max(float(np.mean(x * x) - xbar * xbar), 0.0))
    lag = spatial_lag(x, weights, include_self=True)
    wi = neighbour_counts(x.shape, weights, include_self=True)
    den2 = (n * wi - wi * wi) / (n - 1)
    out = np.zeros_like(x)
    ok = den2 > 0
    out[ok] = (lag[ok] - xbar * wi[ok]) / (s * np.sqrt(den2[ok]))
    return out


def getis_ord_ratio(grid, z_thresh: float = 1.96, weights: str = "queen") -> tuple[float, int, int]:
    """``(hot / max(cold, 1), hot, cold)`` with hot ``z > z_thresh`` and cold ``z < -z_thresh``."""
    z = getis_ord_z(grid, weights)
    hot = int(np.count_nonzero(z > z_thresh))
    cold = int(np.count_nonzero(z < -z_thresh))
    return hot / max(cold, 1), hot, cold


def local_morans(grid, weights: str = "queen") -> np.ndarray:
    """Local Moran ``I_i = z_i * sum_j w_ij z_j / m2`` with ``m2 = mean(z**2)``."""
    x = _grid(grid)
    z = x - x.mean()
    return z * spatial_lag(z, weights) / np.mean(z * z)


def local_outliers(grid, permutations: int = 99, alpha: float = 0.05, seed: int = 0, weights: str = "queen"):
    """Significant negative local Moran cells as ``(high_low, low_high)`` boolean grids.

    Significance uses total randomisation: every permutation reshuffles all
    grid values and recomputes each ``I_i``.  For a cell with negative
    ``I_i`` the pseudo p-value is ``(#{I_perm <= I_obs} + 1) / (permutations + 1)``;
    the cell is an outlier when ``p <= alpha``.  High-low cells lie above
    the grid mean, low-high cells below it.  Permuted values within a
    relative ``1e-9`` of the observed one count as ties, so rounding in the
    neighbourhood sums cannot break an exact tie.
    """
    x = _grid(grid)
    obs = local_morans(x, weights)
    bound = obs + TIE_RTOL * np.abs(obs)
    rng = np.random.default_rng(seed)
    lower = np.zeros(x.shape, dtype=np.int64)
    flat = x.ravel()
    for _ in range(permutations):
        perm = flat[rng.permutation(flat.size)].reshape(x.shape)
        lower += local_morans(perm, weights) <= bound
    p = (lower + 1) / (permutations + 1)
    outlier = (obs < 0) & (p <= alpha)
    above = x > x.mean()
    return outlier & above, outlier & ~above


def local_outlier_ratio(grid, permutations: int = 99, alpha: float = 0.05, seed: int = 0,
                        weights: str = "queen") -> tuple[float, int, int]:
    """``(high_low / max(low_high, 1), high_low, low_high)``."""
    hl, lh = local_outliers(grid, permutations, alpha, seed, weights)
    n_hl, n_lh = int(hl.sum()), int(lh.sum())
    return n_hl / max(n_lh, 1), n_hl, n_lh


def block_edges(n: int, parts: int) -> np.ndarray:
    parts = min(parts, n)
    return (np.arange(parts + 1) * n) // parts


def aggregate_mean(mask, cells: int) -> np.ndarray:
    """Mean of ``mask`` over a near-uniform ``cells x cells`` block grid (fewer when the raster is smaller)."""
    m = np.asarray(mask, dtype=np.float64)
    ry, rx = block_edges(m.shape[0], cells), block_edges(m.shape[1], cells)
    sums = np.add.reduceat(np.add.reduceat(m, ry[:-1], axis=0), rx[:-1], axis=1)
    return sums / np.outer(np.diff(ry), np.diff(rx))


def downsample_any(mask, factor: int) -> np.ndarray:
    """True where any cell of the ``factor x factor`` block is true (partial edge blocks included)."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    ry = np.arange(0, h, factor)
    rx = np.arange(0, w, factor)
    return np.logical_or.reduceat(np.logical_or.reduceat(m, ry, axis=0), rx, axis=1)


@dataclass(frozen=True)
class FeatureConfig:
    connectivity: int = 8
    dbscan_downsample: int = 8
    dbscan_eps: float = 3.0
    dbscan_min_pts: int = 5
    aggregate_cells: int = 32
    contiguity: str = "queen"
    z_thresh: float = 1.96
    permutations: int = 99
    alpha: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class FieldFeatures:
    weed_coverage_ratio: float
    weed_patches: int
    largest_patch_size: int
    avg_patch_size: float
    patch_size_std: float
    dbscan_num_clusters: int
    dbscan_avg_cluster_size: float
    global_autocorrelation: Optional[float]
    hotspot_to_coldspot_ratio: Optional[float]
    hot_to_cold_outlier_ratio: Optional[float]
    # raw counts behind the guarded ratios; not part of the feature table
    hot_count: Optional[int] = None
    cold_count: Optional[int] = None
    high_low: Optional[int] = None
    low_high: Optional[int] = None

    def feature_vector(self) -> dict:
        return {name: getattr(self, name) for name in FEATURE_NAMES}


def compute_features(raster: SemanticRaster, config: FeatureConfig = FeatureConfig()) -> FieldFeatures:
    mask = raster.weed_mask
    count, largest, mean_size, std_size = weed_patches_stats(mask, config.connectivity)
    coarse = downsample_any(mask, config.dbscan_downsample)
    rows, cols = np.nonzero(coarse)
    n_clusters, avg_cluster, _ = dbscan_clusters(np.column_stack([cols, rows]), config.dbscan_eps, config.dbscan_min_pts)
    grid = aggregate_mean(mask, config.aggregate_cells)
    try:
        moran = morans_i(grid, config.contiguity)
        gi_ratio, hot, cold = getis_ord_ratio(grid, config.z_thresh, config.contiguity)
        lo_ratio, hl, lh = local_outlier_ratio(grid, config.permutations, config.alpha, config.seed, config.contiguity)
    except DegenerateFieldError:
        moran = gi_ratio = lo_ratio = None
        hot = cold = hl = lh = None
    return FieldFeatures(
        weed_coverage_ratio=raster.coverage,
        weed_patches=count,
        largest_patch_size=largest,
        avg_patch_size=mean_size,
        patch_size_std=std_size,
        dbscan_num_clusters=n_clusters,
        dbscan_avg_cluster_size=avg_cluster,
        global_autocorrelation=moran,
        hotspot_to_coldspot_ratio=gi_ratio,
        hot_to_cold_outlier_ratio=lo_ratio,
        hot_count=hot,
        cold_count=cold,
        high_low=hl,
        low_high=lh,
    )


NULL = "null"


def _cell(v) -> str:
    if v is None:
        return NULL
    return repr(float(v)) if isinstance(v, float) else str(v)


def _parse(text: str, kind):
    if text == NULL:
        return None
    return kind(text)


def write_features_csv(rows: Sequence[tuple[str, FieldFeatures]], path: PathLike, counts: bool = False) -> None:
    """One row per field; ``counts`` appends the raw hot/cold and outlier counts."""
    names = [f.name for f in fields(FieldFeatures)] if counts else list(FEATURE_NAMES)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["field", *names])
        for name, feats in rows:
            d = asdict(feats)
            out.writerow([name, *(_cell(d[k]) for k in names)])


def read_features_csv(path: PathLike) -> list[tuple[str, FieldFeatures]]:
    known = {f.name for f in fields(FieldFeatures)}
    int_fields = {"weed_patches", "largest_patch_size", "dbscan_num_clusters",
                  "hot_count", "cold_count", "high_low", "low_high"}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            name = row.pop("field")
            kw = {k: _parse(v, int if k in int_fields else float) for k, v in row.items() if k in known}
            out.append((name, FieldFeatures(**kw)))
    return out
