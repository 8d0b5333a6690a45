"""End-to-end benchmark: sample, fit, render, build, evaluate, correlate.

Untimed stages (sampling, fitting, rendering the gridmap, evaluation) may
run in worker processes; representation builds always run one at a time in
the main process so their wall-clock times are comparable.  Every stage is
deterministic given the configuration, so ``--jobs N`` writes the same CSV
files as ``--jobs 1``.
"""
from __future__ import annotations

import csv
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .config import BenchConfig
from .correlation import CorrelationError, correlate, extremes_markdown, write_correlations_csv
from .kriging import KrigingModel, QStats, cross_validate, fit_variogram, grid_shape, render_field
from .metrics import METRIC_COLUMNS, evaluate_encoded
from .raster_io import ScalarField, SemanticRaster, load_orthomosaic, sample_uniform, write_field_png
from .representations import KINDS, build, deserialize_repr, render_repr, serialize_repr
from .spatial_features import FieldFeatures, compute_features, write_features_csv

log = logging.getLogger(__name__)

DENSE_BYTES_PER_CELL = 8  # float64 gridmap
ERROR_COLUMNS = ("map", "trial", "stage", "error_type", "message")
TABLE_METRICS = (("one_minus_ssim_e4", "1 - SS (e-04)"), ("hamming", "HD"), ("mse", "MSE"))


@dataclass
class Gridmap:
    field: ScalarField
    variogram_text: str
    qstats: Optional[QStats]


def gridmap_for(raster: SemanticRaster, cfg: BenchConfig, seed: int, on_stage: Callable[[str], None] = lambda s: None):
    """Sample, fit and render one gridmap; ``on_stage`` is told which stage is running."""
    on_stage("sample")
    samples = sample_uniform(raster, cfg.n_samples, cfg.window, seed)
    on_stage("fit")
    vario = fit_variogram(samples, cfg.variogram, n_lags=cfg.n_lags)
    extent = (raster.width, raster.height)
    model = KrigingModel(samples, vario, extent=extent)
    try:
        qs = cross_validate(model)
    except ValueError:
        qs = None
    on_stage("render")
    field = render_field(model, *grid_shape(extent, cfg.grid_long_side))
    text = vario.to_text({"extent_width": float(extent[0]), "extent_height": float(extent[1])})
    return samples, Gridmap(field, text, qs)


def _gridmap_task(args):
    path, cfg, seed = args
    stage = ["load"]
    try:
        raster = load_orthomosaic(path, cfg.weed_colour)
        _, gm = gridmap_for(raster, cfg, seed, lambda s: stage.__setitem__(0, s))
        return gm, None
    except Exception as exc:  # reported as an error row, never raised
        return None, (stage[0], type(exc).__name__, str(exc))


def _eval_task(args):
    data, field, build_time = args
    try:
        return evaluate_encoded(data, field, build_time), None
    except Exception as exc:
        return None, (type(exc).__name__, str(exc))


def _features_task(args):
    path, cfg = args
    try:
        return compute_features(load_orthomosaic(path, cfg.weed_colour), cfg.features), None
    except Exception as exc:
        return None, (type(exc).__name__, str(exc))


def _pmap(fn, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _fmt_ms(values: Iterable[float], digits: int = 2) -> str:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        return "n/a"
    return f"{v.mean():.{digits}f}({v.std():.{digits}f})"


def metric_means(rows: Sequence[dict]) -> dict[tuple[str, str], dict[str, float]]:
    """Per ``(map, repr)`` trial means of every numeric metric column."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["map"], r["repr"]), []).append(r)
    out = {}
    for key, rs in groups.items():
        out[key] = {c: float(np.mean([r[c] for r in rs])) for c in METRIC_COLUMNS[3:]}
        out[key]["one_minus_ssim"] = out[key]["one_minus_ssim_e4"]
    return out


def tables_markdown(rows: Sequence[dict], maps: Sequence[str], dense_bytes: dict[str, int],
                    qstats: dict[str, list[QStats]]) -> str:
    """Markdown tables: per-map mean(std) over trials, all-map summary, time and space."""
    means = metric_means(rows)
    by = {}
    for r in rows:
        by.setdefault((r["map"], r["repr"]), []).append(r)
    done = [m for m in maps if any((m, k) in by for k in KINDS)]
    out = ["# Benchmark tables", "", "Values are mean(std) with population standard deviation.", ""]

    out += ["## Variogram cross-validation", "", "| Map | Q1 | Q2 | cR |", "|---|---|---|---|"]
    for m in done:
        qs = qstats.get(m, [])
        if qs:
            q1 = _fmt_ms([q.q1 for q in qs], 4)
            q2 = _fmt_ms([q.q2 for q in qs], 4)
            cr = _fmt_ms([q.cr for q in qs], 6)
            out.append(f"| {m} | {q1} | {q2} | {cr} |")
    out.append("")

    out += ["## Per-map similarity over trials", "", "| Metric | Map | " + " | ".join(KINDS) + " |",
            "|---|---|" + "---|" * len(KINDS)]
    for col, label in TABLE_METRICS:
        for m in done:
            cells = [_fmt_ms(r[col] for r in by.get((m, k), [])) for k in KINDS]
            out.append(f"| {label} | {m} | " + " | ".join(cells) + " |")
    out.append("")

    out += ["## All maps (mean(std) of per-map means)", "", "| Metric | " + " | ".join(KINDS) + " |",
            "|---|" + "---|" * len(KINDS)]
    for col, label in TABLE_METRICS:
        cells = [_fmt_ms(means[(m, k)][col] for m in done if (m, k) in means) for k in KINDS]
        out.append(f"| {label} | " + " | ".join(cells) + " |")
    out.append("")

    out += ["## Time and space (mean(std) of per-map means)", "",
            "| | " + " | ".join(KINDS) + " | Grid map |", "|---|" + "---|" * (len(KINDS) + 1)]
    t_cells = [_fmt_ms((means[(m, k)]["time_s"] for m in done if (m, k) in means), 3) for k in KINDS]
    s_cells = [_fmt_ms((means[(m, k)]["size_bytes"] / 1e6 for m in done if (m, k) in means), 3) for k in KINDS]
    out.append("| Time (s) | " + " | ".join(t_cells) + " | n/a |")
    out.append("| Space (MB) | " + " | ".join(s_cells) + f" | {_fmt_ms((dense_bytes[m] / 1e6 for m in done), 3)} |")
    out.append("")
    return "\n".join(out)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def _render_figures(out: Path, name: str, gm: Gridmap, encoded: dict[str, bytes]) -> None:
    from .plotting import render_panel

    renders = {"gridmap": gm.field}
    write_field_png(gm.field, out / f"{name}_gridmap.png")
    for kind, data in encoded.items():
        f = render_repr(deserialize_repr(data), gm.field.width, gm.field.height)
        write_field_png(f, out / f"{name}_{kind}.png")
        renders[kind] = f
    render_panel(renders, out / f"{name}_panel.png", title=name)


def run_benchmark(cfg: BenchConfig, jobs: int = 1, figures: bool = True) -> int:
    """Run every field x trial and write the output files; returns the exit status."""
    cfg.check_paths()
    names = cfg.map_names()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    render_dir = out / "renders"
    if figures:
        render_dir.mkdir(exist_ok=True)

    tasks = [(m, t) for m in range(len(cfg.fields)) for t in range(cfg.trials)]
    log.info("rendering %d gridmaps with %d job(s)", len(tasks), jobs)
    grids = _pmap(_gridmap_task, [(cfg.fields[m], cfg, cfg.base_seed + t) for m, t in tasks], jobs)

    errors: list[list[str]] = []
    builds = []  # (map index, trial, gridmap, {kind: (bytes, build_time)})
    for (m, t), (gm, err) in zip(tasks, grids):
        if err is not None:
            errors.append([names[m], str(t), *err])
            log.warning("%s trial %d failed at %s: %s", names[m], t, err[0], err[2])
            continue
        encoded = {}
        try:
            for kind in KINDS:
                stage = f"build:{kind}"
                rep = build(kind, gm.field, **cfg.params(kind))
                encoded[kind] = (serialize_repr(rep), rep.build_time)
        except Exception as exc:
            errors.append([names[m], str(t), stage, type(exc).__name__, str(exc)])
            log.warning("%s trial %d failed at %s: %s", names[m], t, stage, exc)
            continue
        builds.append((m, t, gm, encoded))

    eval_items = [(data, gm.field, bt) for _, _, gm, enc in builds for data, bt in enc.values()]
    reports = iter(_pmap(_eval_task, eval_items, jobs))
    rows: list[dict] = []
    csv_rows: list[list[str]] = []
    qstats: dict[str, list[QStats]] = {}
    dense: dict[str, int] = {}
    ok_trials = 0
    for m, t, gm, enc in builds:
        results = [(kind, next(reports)) for kind in enc]
        failed = [(kind, err) for kind, (_, err) in results if err is not None]
        if failed:
            kind, (etype, msg) = failed[0]
            errors.append([names[m], str(t), f"eval:{kind}", etype, msg])
            continue
        ok_trials += 1
        dense[names[m]] = gm.field.values.size * DENSE_BYTES_PER_CELL
        if gm.qstats is not None:
            qstats.setdefault(names[m], []).append(gm.qstats)
        for kind, (rep_metrics, _) in results:
            row = rep_metrics.row(names[m], kind, t)
            csv_rows.append(row)
            rows.append(dict(zip(METRIC_COLUMNS, [row[0], row[1], t, *map(float, row[3:])])))
        if figures and t == cfg.render_trial:
            _render_figures(render_dir, names[m], gm, {k: v[0] for k, v in enc.items()})

    _write_csv(out / "metrics.csv", METRIC_COLUMNS, csv_rows)
    _write_csv(out / "errors.csv", ERROR_COLUMNS, errors)

    feats = _pmap(_features_task, [(p, cfg) for p in cfg.fields], jobs)
    feature_rows: list[tuple[str, FieldFeatures]] = []
    for name, (f, err) in zip(names, feats):
        if err is None:
            feature_rows.append((name, f))
        else:
            log.warning("features for %s failed: %s", name, err[1])
    write_features_csv(feature_rows, out / "features.csv")
    write_features_csv(feature_rows, out / "features_counts.csv", counts=True)

    tables = tables_markdown(rows, names, dense, qstats)
    try:
        table = correlate(dict(feature_rows), metric_means(rows))
        write_correlations_csv(table, out / "correlations.csv")
        extremes = extremes_markdown(table)
    except CorrelationError as exc:
        _write_csv(out / "correlations.csv", ["feature"], [])
        extremes = f"Correlation skipped: {exc}\n"
    (out / "correlations.md").write_text(extremes)
    (out / "tables.md").write_text(tables + "\n## Feature correlations (Spearman)\n\n" + extremes)

    if figures and rows:
        from .plotting import metric_chart

        means = metric_means(rows)
        summary = {}
        for col, label in TABLE_METRICS:
            summary[label] = {}
            for k in KINDS:
                vals = [means[(m, k)][col] for m in names if (m, k) in means]
                summary[label][k] = (float(np.mean(vals)), float(np.std(vals)))
        metric_chart(summary, KINDS, render_dir / "summary.png")

    manifest = {
        "tool": "krigrid",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config": cfg.to_dict(),
        "seeds": {f"{names[m]}:{t}": cfg.base_seed + t for m, t in tasks},
        "jobs": jobs,
        "trials_ok": ok_trials,
        "trials_failed": len(tasks) - ok_trials,
        "argv": sys.argv,
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("%d of %d trials succeeded; outputs in %s", ok_trials, len(tasks), out)
    return 0 if ok_trials > 0 else 1
