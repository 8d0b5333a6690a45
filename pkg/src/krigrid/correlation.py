"""Spearman rank correlation between field features and representation metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .representations import KINDS
from .spatial_features import FEATURE_NAMES, FieldFeatures

METRICS = ("one_minus_ssim", "hamming", "mse")
REPR_LABELS = {
    "quadtree": "Quadtree",
    "wedgelet": "Wedgelet",
    "bsp-lse": "BSP_LSE",
    "bsp-region": "BSP_Region",
    "hexmap": "Hex",
}
METRIC_LABELS = {"one_minus_ssim": "1-SS", "hamming": "HD", "mse": "MSE"}
LOW_POWER_N = 10


class CorrelationError(ValueError):
    pass


class ZeroVarianceError(CorrelationError):
    pass


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of mean ranks (ties share the average rank)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise CorrelationError("spearman needs two 1-D sequences of equal length")
    if x.size < 2:
        raise CorrelationError("spearman needs at least 2 pairs")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("zero rank variance")
    rho = float(rx @ ry) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def metric_label(kind: str, metric: str) -> str:
    return f"{REPR_LABELS[kind]}_{METRIC_LABELS[metric]}"


@dataclass
class CorrelationTable:
    """Rho per ``(feature, repr, metric)``; ``None`` where undefined."""

    entries: dict[tuple[str, str, str], Optional[float]]
    n_fields: int
    features: tuple[str, ...] = FEATURE_NAMES
    columns: tuple[tuple[str, str], ...] = field(default=())

    @property
    def low_power(self) -> bool:
        return self.n_fields < LOW_POWER_N

    def extremes(self) -> dict[str, Optional[tuple[tuple[str, float], tuple[str, float]]]]:
        """Per feature, ``((label, max rho), (label, min rho))``; first column wins ties."""
        out = {}
        for feat in self.features:
            vals = [(metric_label(k, m), self.entries[(feat, k, m)]) for k, m in self.columns
                    if self.entries.get((feat, k, m)) is not None]
            if not vals:
                out[feat] = None
                continue
            hi = max(vals, key=lambda t: t[1])
            lo = min(vals, key=lambda t: t[1])
            out[feat] = (hi, lo)
        return out


def correlate(
    features: Mapping[str, FieldFeatures],
    metrics: Mapping[tuple[str, str], Mapping[str, float]],
    kinds: Sequence[str] = KINDS,
    metric_names: Sequence[str] = METRICS,
) -> CorrelationTable:
    """Correlate each feature with each per-field metric over fields.

    ``metrics[(field, kind)][metric]`` holds the per-field value (normally the
    mean over trials).  Fields where a feature is null are dropped for that
    feature only.  An entry is ``None`` when fewer than 2 pairs remain or
    either side has zero rank variance.
    """
    names = sorted(features)
    complete = [f for f in names if all((f, k) in metrics for k in kinds)]
    if len(complete) < 2:
        raise CorrelationError(f"need at least 2 fields with complete metric rows, got {len(complete)}")
    columns = tuple((k, m) for k in kinds for m in metric_names)
    entries: dict[tuple[str, str, str], Optional[float]] = {}
    for feat in FEATURE_NAMES:
        for k, m in columns:
            pairs = [(getattr(features[f], feat), metrics[(f, k)][m]) for f in complete]
            pairs = [(a, b) for a, b in pairs if a is not None and b is not None and np.isfinite(b)]
            rho = None
            if len(pairs) >= 2:
                try:
                    rho = spearman([a for a, _ in pairs], [b for _, b in pairs])
                except ZeroVarianceError:
                    rho = None
            entries[(feat, k, m)] = rho
    return CorrelationTable(entries, len(complete), FEATURE_NAMES, columns)


def _fmt(v: Optional[float]) -> str:
    return "null" if v is None else repr(v)


def write_correlations_csv(table: CorrelationTable, path: PathLike) -> None:
    """Matrix with one row per feature and one column per ``Repr_Metric`` label."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["feature", *(metric_label(k, m) for k, m in table.columns)])
        for feat in table.features:
            out.writerow([feat, *(_fmt(table.entries[(feat, k, m)]) for k, m in table.columns)])


def extremes_markdown(table: CorrelationTable) -> str:
    lines = [
        "| Feature | Metric | Max Value | Metric | Min Value |",
        "|---|---|---|---|---|",
    ]
    for feat, ext in table.extremes().items():
        if ext is None:
            lines.append(f"| {feat} | null | null | null | null |")
        else:
            (hl, hv), (ll, lv) = ext
            lines.append(f"| {feat} | {hl} | {hv:.2f} | {ll} | {lv:.2f} |")
    note = f"n = {table.n_fields} fields"
    if table.low_power:
        note += " (low power: rho takes few distinct values and is not tested for significance)"
    lines += ["", note]
    return "\n".join(lines) + "\n"
