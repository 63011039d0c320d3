"""Command-line surface: aggregate, train, index, evaluate, inspect."""

from __future__ import annotations

import argparse
import dataclasses
import os
import shutil
import sys

import numpy as np

from . import mixer, trainer
from .checkpoint import load_checkpoint
from .kernel import DegenerateVectorError, NumericInputError, ShapeError
from .manifest import ManifestError, parse_manifest, write_manifest
from .mixer import GridFactorizationError
from .retrieval import CoordinateRangeError, GeoTag, RetrievalIndex, evaluate
from .runconfig import RunConfigError, load_run_config
from .tensorfile import TensorFileError, read_header, read_tensor, write_tensor

_USER_ERRORS = (
    ShapeError,
    DegenerateVectorError,
    NumericInputError,
    GridFactorizationError,
    ManifestError,
    RunConfigError,
    TensorFileError,
    CoordinateRangeError,
    trainer.TrainingDivergedError,
    trainer.InsufficientDataError,
    ValueError,
    OSError,
)

INDEX_DESCRIPTORS = "descriptors.vprt"
INDEX_RECORDS = "records.jsonl"
INDEX_CHECKPOINT = "checkpoint"


def _select_records(records, split):
    if split is None:
        return records
    chosen = [r for r in records if r.split == split]
    if not chosen:
        raise ValueError(f"manifest has no records with split={split!r}")
    return chosen


def _descriptors_for(records, model, feature_root):
    rows = []
    for rec in records:
        tokens = read_tensor(os.path.join(feature_root, rec.features))
        rows.append(mixer.aggregate(tokens, model))
    return np.stack(rows)


def _cmd_aggregate(args):
    records = _select_records(parse_manifest(args.manifest), args.split)
    model = load_checkpoint(args.checkpoint)
    feature_root = os.path.dirname(os.path.abspath(args.manifest))
    os.makedirs(args.out, exist_ok=True)
    for rec in records:
        tokens = read_tensor(os.path.join(feature_root, rec.features))
        descriptor = mixer.aggregate(tokens, model)
        write_tensor(os.path.join(args.out, f"{rec.image_id}.vprt"), descriptor)
    print(f"wrote {len(records)} descriptors to {args.out}")
    return 0


def _cmd_train(args):
    run = load_run_config(args.config)
    manifest_path = args.manifest or run.manifest
    out_dir = args.out or run.out
    if not manifest_path:
        raise ValueError("no manifest given (set manifest= in the config or pass --manifest)")
    if not out_dir:
        raise ValueError("no output directory given (set out= in the config or pass --out)")
    train_cfg = run.train
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    records = parse_manifest(manifest_path)
    feature_root = os.path.dirname(os.path.abspath(manifest_path))
    _, step_losses = trainer.train(
        records, run.aggregator, train_cfg, out_dir,
        feature_root=feature_root, loss_cfg=run.loss,
    )
    final = step_losses[-1][3] if step_losses else float("nan")
    print(f"trained {train_cfg.epochs} epochs, {len(step_losses)} steps, final loss {final:.6f}")
    print(f"checkpoint: {os.path.join(out_dir, 'checkpoint')}")
    return 0


def _cmd_index(args):
    records = _select_records(parse_manifest(args.manifest), args.split)
    model = load_checkpoint(args.checkpoint)
    feature_root = os.path.dirname(os.path.abspath(args.manifest))
    descriptors = _descriptors_for(records, model, feature_root)
    os.makedirs(args.out, exist_ok=True)
    write_tensor(os.path.join(args.out, INDEX_DESCRIPTORS), descriptors)
    write_manifest(os.path.join(args.out, INDEX_RECORDS), records)
    # embed the checkpoint so evaluate can aggregate queries with the same model
    ckpt_copy = os.path.join(args.out, INDEX_CHECKPOINT)
    if os.path.exists(ckpt_copy):
        shutil.rmtree(ckpt_copy)
    shutil.copytree(args.checkpoint, ckpt_copy)
    print(f"indexed {len(records)} records into {args.out}")
    return 0


def load_index(directory):
    descriptors = read_tensor(os.path.join(directory, INDEX_DESCRIPTORS))
    records = parse_manifest(os.path.join(directory, INDEX_RECORDS))
    if len(records) != descriptors.shape[0]:
        raise ValueError(
            f"{directory}: {len(records)} records but {descriptors.shape[0]} descriptors"
        )
    return RetrievalIndex(
        image_ids=[r.image_id for r in records],
        descriptors=descriptors,
        geotags=[GeoTag(r.lat, r.lon) for r in records],
    )


def _cmd_evaluate(args):
    index = load_index(args.index)
    model = load_checkpoint(os.path.join(args.index, INDEX_CHECKPOINT))
    queries = [r for r in parse_manifest(args.queries) if r.split == "query"]
    if not queries:
        raise ValueError(f"{args.queries}: no records with split='query'")
    feature_root = os.path.dirname(os.path.abspath(args.queries))
    descriptors = _descriptors_for(queries, model, feature_root)
    tags = [GeoTag(r.lat, r.lon) for r in queries]
    ks = [int(k) for k in args.k.split(",") if k]
    report = evaluate(index, descriptors, tags, ks=ks, threshold_m=args.threshold_m)
    text = report.to_json()
    if args.out:
        tmp = f"{args.out}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        os.replace(tmp, args.out)
    print(text)
    return 0


def _cmd_inspect(args):
    for path in args.paths:
        dtype, dims = read_header(path)
        print(f"{path}: dtype={dtype} dims=[{','.join(str(d) for d in dims)}]")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="placemix",
        description="Visual place recognition engine: descriptor aggregation, "
        "metric training, and geodesic retrieval evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="turn feature files into descriptor files")
    p.add_argument("--checkpoint", required=True, help="model checkpoint directory")
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON-Lines)")
    p.add_argument("--split", choices=["train", "database", "query"], default=None)
    p.add_argument("--out", required=True, help="output directory for descriptor files")
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("train", help="train the aggregation head")
    p.add_argument("--config", required=True, help="key=value run configuration file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--manifest", default=None, help="override the config manifest path")
    p.add_argument("--out", default=None, help="override the config output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("index", help="build a retrieval index from database images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "database", "query"], default="database")
    p.add_argument("--out", required=True, help="index output directory")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("evaluate", help="recall@k of queries against an index")
    p.add_argument("--index", required=True, help="index directory built by `index`")
    p.add_argument("--queries", required=True, help="manifest holding query records")
    p.add_argument("--threshold-m", type=float, default=25.0, dest="threshold_m")
    p.add_argument("--k", default="1,5,10", help="comma-separated k values")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("inspect", help="print tensor-file headers")
    p.add_argument("paths", nargs="+", metavar="FILE")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
