"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data or format error, 3 training
divergence. Failures also print one ``error kind=... message=...`` line to
stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import normalize_bands, read_cube, read_labels, write_cube, write_labels
from .errors import ContractError, FormatError, TrainingDiverged
from .metrics import compute_metrics
from .model import load_checkpoint, save_checkpoint
from .render import default_palette, render_map
from .segmentation import pca_reduce, slic_segment
from .synthetic import make_synthetic
from .trainer import VARIANT_ALIASES, VARIANTS, RunRecord, load_config, predict, run_ablation, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def run_record_path(ckpt):
    return Path(str(ckpt) + ".run.json")


def _fail(kind, message):
    print(f"error kind={kind} message={json.dumps(str(message))}", file=sys.stderr)


def _config(path):
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        config, _ = load_config(path)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from None
    except (ContractError, TypeError) as exc:
        raise UsageError(f"bad config: {exc}") from None
    return config


def cmd_inspect(args):
    cube = read_cube(args.cube)
    print(f"{cube.height}x{cube.width}x{cube.bands}")
    flat = cube.pixels()
    print(f"values {flat.size}")
    print(f"range {flat.min():.6g} {flat.max():.6g}")
    return EXIT_OK


def cmd_segment(args):
    cube = normalize_bands(read_cube(args.cube))
    feats = pca_reduce(cube, min(args.pca, cube.bands))
    seg = slic_segment(feats, args.regions, args.compactness, args.iters)
    print(f"regions {seg.region_count}")
    if args.out:
        write_labels(args.out, seg.region_of + 1)
    return EXIT_OK


def cmd_train(args):
    config = _config(args.config)
    cube = read_cube(args.cube)
    labels = read_labels(args.labels, cube.height, cube.width)
    try:
        model, record = train(cube, labels, config)
    except TrainingDiverged as exc:
        if exc.record is not None:
            run_record_path(args.out).write_text(exc.record.to_json(), encoding="utf-8")
        raise
    save_checkpoint(args.out, model)
    run_record_path(args.out).write_text(record.to_json(), encoding="utf-8")
    print(f"regions {record.region_count}")
    print(f"best_iteration {record.best_iteration}")
    print(f"seconds {record.wall_clock_seconds:.2f}")
    if record.metrics:
        print(f"OA    {record.metrics['oa']:.4f}")
        print(f"AA    {record.metrics['aa']:.4f}")
        print(f"kappa {record.metrics['kappa']:.4f}")
    return EXIT_OK


def cmd_eval(args):
    model = load_checkpoint(args.ckpt)
    cube = read_cube(args.cube)
    labels = read_labels(args.labels, cube.height, cube.width)
    pred = predict(model, cube)
    flat = labels.flat()
    eval_idx = np.flatnonzero(flat > 0)
    scope = "all-labeled"
    rec_path = run_record_path(args.ckpt)
    if not args.all and rec_path.exists():
        record = RunRecord.from_json(rec_path.read_text(encoding="utf-8"))
        seen = np.zeros(flat.size, dtype=bool)
        seen[np.asarray(record.train_idx + record.val_idx, dtype=np.int64)] = True
        eval_idx = np.flatnonzero((flat > 0) & ~seen)
        scope = "test"
    metrics = compute_metrics(pred, labels, eval_idx, model.n_classes)
    print(f"scope {scope} pixels {len(eval_idx)}")
    print(metrics.summary())
    return EXIT_OK


def cmd_predict(args):
    model = load_checkpoint(args.ckpt)
    cube = read_cube(args.cube)
    write_labels(args.out, predict(model, cube))
    return EXIT_OK


def cmd_render(args):
    raster = read_labels(args.raster, args.height, args.width)
    n_classes = args.classes or max(raster.n_classes, 1)
    Path(args.out).write_bytes(render_map(raster.labels, default_palette(n_classes)))
    return EXIT_OK


def cmd_ablate(args):
    config = _config(args.config)
    cube = read_cube(args.cube)
    labels = read_labels(args.labels, cube.height, cube.width)
    record = run_ablation(cube, labels, config, args.variant)
    print(f"variant {record.variant}")
    if record.metrics:
        print(f"OA    {record.metrics['oa']:.4f}")
        print(f"AA    {record.metrics['aa']:.4f}")
        print(f"kappa {record.metrics['kappa']:.4f}")
    if args.out:
        Path(args.out).write_text(record.to_json(), encoding="utf-8")
    return EXIT_OK


def cmd_synth(args):
    cube, labels = make_synthetic(
        args.height, args.width, args.bands, args.classes, args.separation, args.noise, args.seed
    )
    write_cube(args.out, cube)
    write_labels(args.out + ".labels.raw", labels, header=False)
    print(f"{cube.height}x{cube.width}x{cube.bands}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="cadgcn", description="Context-aware dynamic GCN for hyperspectral images")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("inspect", help="print cube dimensions")
    s.add_argument("cube")
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("segment", help="run SLIC and report the region count")
    s.add_argument("cube")
    s.add_argument("--regions", type=int, required=True)
    s.add_argument("--compactness", type=float, default=0.1)
    s.add_argument("--iters", type=int, default=10)
    s.add_argument("--pca", type=int, default=3)
    s.add_argument("--out", help="write region ids + 1 as a uint16 raster")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("train", help="train and write a checkpoint plus run record")
    s.add_argument("cube")
    s.add_argument("labels")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="OA/AA/kappa of a checkpoint")
    s.add_argument("ckpt")
    s.add_argument("cube")
    s.add_argument("labels")
    s.add_argument("--all", action="store_true", help="score every labeled pixel")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="write the predicted class map")
    s.add_argument("ckpt")
    s.add_argument("cube")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("render", help="render a class raster as PPM")
    s.add_argument("raster")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", type=int, default=None)
    s.add_argument("--height", type=int, default=None)
    s.add_argument("--width", type=int, default=None)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("ablate", help="train one ablation variant")
    s.add_argument("cube")
    s.add_argument("labels")
    s.add_argument("--config", required=True)
    s.add_argument("--variant", required=True, choices=list(VARIANTS) + list(VARIANT_ALIASES))
    s.add_argument("--out", help="write the run record as JSON")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("synth", help="write a synthetic cube and label raster")
    s.add_argument("--out", required=True, help="output name, without extension")
    s.add_argument("--height", type=int, default=32)
    s.add_argument("--width", type=int, default=32)
    s.add_argument("--bands", type=int, default=10)
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--separation", type=float, default=20.0)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def run_command(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _fail("usage", exc)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        _fail("usage", exc)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        _fail("diverged", exc)
        return EXIT_DIVERGED
    except (FormatError, ContractError, OSError) as exc:
        _fail("data", exc)
        return EXIT_DATA


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
