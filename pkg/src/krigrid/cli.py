"""Command line interface: ``krigrid <command> ...``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__


class MissingInput(Exception):
    pass


def _need(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"missing {what}: expected file {p}")
    return p


def _cmd_bench(args) -> int:
    from .bench import run_benchmark
    from .config import load_config

    from .raster_io import parse_colour

    cfg = load_config(_need(args.config, "config file"))
    cfg = cfg.with_overrides(
        base_seed=args.seed, out=Path(args.out) if args.out else None, trials=args.trials,
        n_samples=args.samples, window=args.window,
        weed_colour=parse_colour(args.weed_colour) if args.weed_colour else None,
    )
    return run_benchmark(cfg, jobs=args.jobs, figures=not args.no_figures)


def _cmd_sample(args) -> int:
    from .raster_io import load_orthomosaic, parse_colour, sample_uniform, write_samples_csv

    raster = load_orthomosaic(_need(args.raster, "raster"), parse_colour(args.weed_colour))
    write_samples_csv(sample_uniform(raster, args.n, args.window, args.seed), args.out)
    return 0


def _cmd_fit(args) -> int:
    from .kriging import fit_variogram
    from .raster_io import read_samples_csv

    samples = read_samples_csv(_need(args.samples, "samples CSV"))
    vario = fit_variogram(samples, args.kind, n_lags=args.n_lags)
    extra = {}
    if args.extent:
        extra = {"extent_width": float(args.extent[0]), "extent_height": float(args.extent[1])}
    text = vario.to_text(extra)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_render_gp(args) -> int:
    from .kriging import grid_shape, model_from_text, render_field
    from .raster_io import read_samples_csv, write_field_npy, write_field_png

    samples = read_samples_csv(_need(args.samples, "samples CSV"))
    model = model_from_text(_need(args.model, "variogram model text").read_text(), samples)
    field = render_field(model, *grid_shape(model.extent, args.long_side))
    out = Path(args.out)
    write_field_npy(field, out.with_suffix(".npy"))
    write_field_png(field, out.with_suffix(".png"))
    return 0


def _parse_params(kind: str, pairs) -> dict:
    from .config import ConfigError, _coerce, builder_defaults

    defaults = builder_defaults(kind)
    params = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"bad --param {pair!r}; expected name=value")
        name, value = (s.strip() for s in pair.split("=", 1))
        if name not in defaults:
            raise ConfigError(f"{kind} has no parameter {name!r}; known: {sorted(defaults)}")
        params[name] = _coerce(value, defaults[name], name)
    return params


def _cmd_build(args) -> int:
    from .raster_io import read_field
    from .representations import build, serialize_repr

    field = read_field(_need(args.field, "gridmap"))
    rep = build(args.kind, field, **_parse_params(args.kind, args.param))
    Path(args.out).write_bytes(serialize_repr(rep))
    print(f"{args.kind}: {rep.leaf_count} leaves, built in {rep.build_time:.4f} s")
    return 0


def _cmd_eval(args) -> int:
    from .metrics import METRIC_COLUMNS, evaluate_encoded
    from .raster_io import read_field
    from .representations import deserialize_repr

    data = _need(args.repr, "serialised representation").read_bytes()
    reference = read_field(_need(args.reference, "reference field"))
    kind = deserialize_repr(data).kind
    row = evaluate_encoded(data, reference, args.build_time).row(args.map, kind, args.trial)
    if args.out:
        out = Path(args.out)
        fresh = not out.exists() or not args.append
        with open(out, "a" if args.append else "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if fresh:
                w.writerow(METRIC_COLUMNS)
            w.writerow(row)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        w.writerow(row)
    return 0


def _cmd_features(args) -> int:
    from .raster_io import load_orthomosaic, parse_colour
    from .spatial_features import FeatureConfig, compute_features, write_features_csv

    cfg = FeatureConfig(seed=args.seed)
    rows = []
    for path in args.raster:
        raster = load_orthomosaic(_need(path, "raster"), parse_colour(args.weed_colour))
        rows.append((Path(path).stem, compute_features(raster, cfg)))
    write_features_csv(rows, args.out)
    return 0


def _cmd_correlate(args) -> int:
    from .bench import metric_means
    from .correlation import correlate, extremes_markdown, write_correlations_csv
    from .metrics import read_metrics_csv
    from .spatial_features import read_features_csv

    feats = dict(read_features_csv(_need(args.features, "features CSV")))
    rows = read_metrics_csv(_need(args.metrics, "metrics CSV"))
    table = correlate(feats, metric_means(rows))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_correlations_csv(table, out / "correlations.csv")
    md = extremes_markdown(table)
    (out / "correlations.md").write_text(md)
    sys.stdout.write(md)
    return 0


def build_parser() -> argparse.ArgumentParser:
    from .kriging import VARIOGRAM_KINDS
    from .representations import KINDS

    p = argparse.ArgumentParser(prog="krigrid", description="Kriged weed maps and discrete map representations.")
    p.add_argument("--version", action="version", version=f"krigrid {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the full benchmark from a config file")
    b.add_argument("--config", required=True)
    b.add_argument("--jobs", type=int, default=1, help="worker processes for untimed stages")
    b.add_argument("--seed", type=int, help="override base_seed")
    b.add_argument("--out", help="override the output directory")
    b.add_argument("--trials", type=int, help="override the trial count")
    b.add_argument("--samples", type=int, help="override n_samples")
    b.add_argument("--window", type=int, help="override the sampling window (pixels)")
    b.add_argument("--weed-colour", help="override the weed label colour R,G,B")
    b.add_argument("--no-figures", action="store_true", help="skip PNG renders")
    b.set_defaults(func=_cmd_bench)

    s = sub.add_parser("sample", help="draw window-averaged samples from a labelled raster")
    s.add_argument("--raster", required=True)
    s.add_argument("--samples", "--n", dest="n", type=int, default=500, help="number of samples")
    s.add_argument("--window", type=int, default=150)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--weed-colour", default="255,0,0")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sample)

    f = sub.add_parser("fit", help="fit a variogram to a samples CSV")
    f.add_argument("--samples", required=True)
    f.add_argument("--kind", default="exponential", choices=VARIOGRAM_KINDS)
    f.add_argument("--n-lags", type=int, default=20)
    f.add_argument("--extent", type=float, nargs=2, metavar=("WIDTH", "HEIGHT"),
                   help="raster extent recorded for render-gp")
    f.add_argument("--out", help="write the parameter block here instead of stdout")
    f.set_defaults(func=_cmd_fit)

    r = sub.add_parser("render-gp", help="render the kriging mean to gridmap .npy and .png")
    r.add_argument("--samples", required=True)
    r.add_argument("--model", required=True)
    r.add_argument("--long-side", type=int, default=1024)
    r.add_argument("--out", required=True, help="output stem; writes STEM.npy and STEM.png")
    r.set_defaults(func=_cmd_render_gp)

    bd = sub.add_parser("build", help="build one representation and serialise it")
    bd.add_argument("--field", required=True, help="gridmap .npy (lossless) or .png")
    bd.add_argument("--kind", required=True, choices=KINDS)
    bd.add_argument("--param", action="append", metavar="NAME=VALUE")
    bd.add_argument("--out", required=True)
    bd.set_defaults(func=_cmd_build)

    e = sub.add_parser("eval", help="score a serialised representation against a reference")
    e.add_argument("--repr", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--map", default="map")
    e.add_argument("--trial", type=int, default=0)
    e.add_argument("--build-time", type=float, default=0.0)
    e.add_argument("--out")
    e.add_argument("--append", action="store_true")
    e.set_defaults(func=_cmd_eval)

    ft = sub.add_parser("features", help="field-distribution features of labelled rasters")
    ft.add_argument("--raster", required=True, nargs="+")
    ft.add_argument("--weed-colour", default="255,0,0")
    ft.add_argument("--seed", type=int, default=0, help="permutation-test seed")
    ft.add_argument("--out", required=True)
    ft.set_defaults(func=_cmd_features)

    c = sub.add_parser("correlate", help="Spearman correlations of features against metrics")
    c.add_argument("--features", required=True)
    c.add_argument("--metrics", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_correlate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingInput as exc:
        print(f"krigrid {args.command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"krigrid {args.command}: {exc}", file=sys.stderr)
        return 2
