"""Command-line pipeline: extract, train, predict, evaluate, synth, ingest-live, bench.

Exit codes: 0 success, 1 runtime/data failure, 2 usage or config error.
All randomness flows from --seed, expanded per stage as
SeedSequence((seed, crc32(stage_name))).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .distortions import (
    DEFAULT_HALF_SEVERITY,
    KINDS,
    DistortionSpec,
    generate_dataset,
    procedural_reference,
)
from .errors import GradiqaError, ParameterError
from .evaluation import (
    evaluate,
    ingest_live_r2,
    read_manifest,
    report_csv_rows,
    report_table,
    write_manifest,
)
from .features import (
    DEFAULT_CONFIG,
    FEATURE_LAYOUT_VERSION,
    FeatureConfig,
    extract_features,
    extract_many,
    read_features_csv,
    write_features_csv,
)
from .network import TrainConfig, load_model, save_model, train_scg
from .raster import load_grayscale


class UsageError(Exception):
    """Config-file or argument-combination problem; exits 2."""


def stage_seed(master: int, stage: str) -> int:
    return int(np.random.SeedSequence((master, zlib.crc32(stage.encode()))).generate_state(1)[0])


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


# ---------------------------------------------------------------- extract

def _resolve_inputs(args):
    """(paths, targets, reference_ids) from bare images or a manifest."""
    if args.manifest:
        base = Path(args.manifest).parent
        records = read_manifest(args.manifest)
        paths = [str(p) if (p := Path(r.path)).is_absolute() else str(base / p) for r in records]
        return paths, [r.target for r in records], [r.reference_id for r in records]
    if not args.images:
        raise UsageError("give image paths or --manifest")
    return list(args.images), [float("nan")] * len(args.images), [None] * len(args.images)


def cmd_extract(args) -> int:
    paths, targets, _ = _resolve_inputs(args)
    config = DEFAULT_CONFIG
    if args.fail_fast:
        rows = []
        for p in paths:
            rows.append(extract_features(load_grayscale(p), config))
        matrix = np.array(rows)
        ok_mask = np.ones(len(paths), dtype=bool)
        errors = []
    else:
        matrix, ok_mask, errors = extract_many(paths, config, jobs=args.jobs)
    kept = [p for p, ok in zip(paths, ok_mask) if ok]
    kept_targets = [t for t, ok in zip(targets, ok_mask) if ok]
    write_features_csv(args.out, kept, matrix, kept_targets)
    for path, exc in errors:
        print(f"extract failed: {path}: {exc}", file=sys.stderr)
    if args.verbose:
        print(f"wrote {len(kept)} feature rows to {args.out}")
    return 1 if errors else 0


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    if bool(args.features) == bool(args.manifest):
        raise UsageError("give exactly one of --features or --manifest")
    groups = None
    if args.features:
        paths, matrix, targets = read_features_csv(args.features)
    else:
        records = read_manifest(args.manifest)
        base = Path(args.manifest).parent
        paths = [str(p) if (p := Path(r.path)).is_absolute() else str(base / p) for r in records]
        matrix, ok_mask, errors = extract_many(paths, DEFAULT_CONFIG, jobs=args.jobs)
        if errors:
            for path, exc in errors:
                print(f"extract failed: {path}: {exc}", file=sys.stderr)
            return 1
        targets = np.array([r.target for r in records])
        if all(r.reference_id for r in records):
            groups = np.array([r.reference_id for r in records])
    if args.split_mode == "content" and groups is None:
        raise UsageError("content-disjoint split needs a manifest with reference ids")

    fracs = [float(v) for v in args.split.split(",")] if args.split else [0.70, 0.15, 0.15]
    if len(fracs) != 3:
        raise UsageError("--split needs three comma-separated fractions")
    cfg = TrainConfig(
        max_epochs=args.max_epochs,
        max_validation_failures=args.val_failures,
        train_frac=fracs[0], val_frac=fracs[1], test_frac=fracs[2],
        seed=stage_seed(args.seed, "train"),
        split_mode=args.split_mode,
    )
    model, history = train_scg(
        np.asarray(matrix), np.asarray(targets, dtype=np.float64), cfg,
        groups=groups,
        meta={"feature_config": DEFAULT_CONFIG.to_dict(),
              "feature_layout_version": FEATURE_LAYOUT_VERSION,
              "cli_seed": args.seed},
    )
    save_model(model, args.out)

    history_path = f"{args.out}.history.csv"
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse", "test_mse", "grad_norm"])
        for i in range(history.epochs):
            writer.writerow(
                [i + 1] + [f"{v:.17g}" for v in (history.train_mse[i], history.val_mse[i],
                                                 history.test_mse[i], history.grad_norm[i])]
            )
    split_path = f"{args.out}.split.csv"
    split_of = {}
    for name, idx in (("train", history.train_idx), ("val", history.val_idx),
                      ("test", history.test_idx)):
        for i in idx:
            split_of[int(i)] = name
    with open(split_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "split"])
        for i, p in enumerate(paths):
            writer.writerow([p, split_of[i]])

    if args.plot:
        from .plotting import line_chart_svg

        line_chart_svg(
            {"train": history.train_mse.tolist(), "validation": history.val_mse.tolist(),
             "test": history.test_mse.tolist()},
            f"{args.out}.history.svg", title="Mean squared error by epoch",
            y_label="MSE", log_y=True,
        )
        line_chart_svg(
            {"gradient norm": history.grad_norm.tolist()},
            f"{args.out}.gradient.svg", title="Gradient norm by epoch",
            y_label="|grad|", log_y=True,
        )
    best_val = history.val_mse[history.best_epoch - 1] if history.best_epoch else float("nan")
    print(
        f"trained {history.epochs} epochs; best epoch {history.best_epoch} "
        f"(validation MSE {best_val:.6g}); stopped: {history.stop_reason}"
    )
    return 0


# ---------------------------------------------------------------- predict

def cmd_predict(args) -> int:
    from .network import forward

    model = load_model(args.model)
    layout = model.meta.get("feature_layout_version", FEATURE_LAYOUT_VERSION)
    if layout != FEATURE_LAYOUT_VERSION:
        return _fail(
            f"model was built for feature layout v{layout}, "
            f"this build produces v{FEATURE_LAYOUT_VERSION}"
        )
    config = FeatureConfig.from_dict(model.meta.get("feature_config", {}))
    rows = []
    failures = 0
    for p in args.images:
        try:
            score = forward(model, extract_features(load_grayscale(p), config))
            rows.append((p, score))
        except (GradiqaError, OSError) as exc:
            failures += 1
            print(f"predict failed: {p}: {exc}", file=sys.stderr)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "score"])
            for p, s in rows:
                writer.writerow([p, f"{s:.17g}"])
    else:
        for p, s in rows:
            print(f"{p},{s:.17g}")
    return 1 if failures else 0


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    records = read_manifest(args.manifest)
    root = Path(args.manifest).parent
    if args.subset != "all":
        if not args.split_csv:
            raise UsageError("--subset needs --split-csv from a training run")
        with open(args.split_csv, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            split_of = {row[0]: row[1] for row in reader}
        records = [
            r for r in records
            if split_of.get(r.path, split_of.get(str(root / r.path))) == args.subset
        ]
        if not records:
            return _fail(f"no manifest records fall in subset {args.subset!r}")
    report = evaluate(model, records, root=root, jobs=args.jobs)
    print(report_table(report))
    for path, msg in report.failures:
        print(f"evaluate failed: {path}: {msg}", file=sys.stderr)
    if args.out:
        with open(f"{args.out}.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(report_csv_rows(report))
    if args.dump:
        with open(args.dump, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "class", "target", "prediction"])
            for path, cls, target, pred in report.pairs:
                writer.writerow([path, cls, f"{target:.17g}", f"{pred:.17g}"])
    return 1 if report.failures else 0


# ---------------------------------------------------------------- synth

def _read_ladder(path) -> tuple[list[DistortionSpec], dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: unreadable ladder config ({exc})") from exc
    if not isinstance(doc, dict) or "rungs" not in doc:
        raise UsageError(f"{path}: ladder config needs a 'rungs' list")
    half = dict(DEFAULT_HALF_SEVERITY)
    half.update(doc.get("half_severity", {}))
    specs = []
    for i, rung in enumerate(doc["rungs"]):
        try:
            kind = rung["kind"]
            levels = rung["levels"]
            seed = int(rung.get("seed", 0))
        except (TypeError, KeyError) as exc:
            raise UsageError(f"{path}: rung {i}: missing field {exc}") from exc
        if kind not in KINDS:
            raise UsageError(f"{path}: rung {i}: unknown kind {kind!r} (have {KINDS})")
        if not isinstance(levels, list) or not levels:
            raise UsageError(f"{path}: rung {i}: 'levels' must be a non-empty list")
        for j, level in enumerate(levels):
            try:
                specs.append(DistortionSpec(kind=kind, level=float(level), seed=seed + j))
            except (TypeError, ValueError, ParameterError) as exc:
                raise UsageError(f"{path}: rung {i} level {j}: {exc}") from exc
    return specs, half


def cmd_synth(args) -> int:
    specs, half = _read_ladder(args.ladder)
    refs_dir = Path(args.refs)
    if not refs_dir.is_dir():
        return _fail(f"{refs_dir}: not a directory")
    refs = sorted(
        p for p in refs_dir.iterdir() if p.suffix.lower() in (".pgm", ".png", ".bmp")
    )
    if not refs:
        return _fail(f"{refs_dir}: no reference images (.pgm/.png/.bmp)")
    records = generate_dataset(refs, specs, args.out, half_severity=half)
    print(f"wrote {len(records)} images + manifest.csv to {args.out}")
    return 0


# ---------------------------------------------------------------- ingest-live

def cmd_ingest_live(args) -> int:
    records = ingest_live_r2(args.root)
    write_manifest(records, args.out)
    by_class = {}
    for r in records:
        by_class[r.distortion_class] = by_class.get(r.distortion_class, 0) + 1
    print(f"wrote {len(records)} records to {args.out}: "
          + ", ".join(f"{k}={v}" for k, v in sorted(by_class.items())))
    return 0


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    if args.image:
        plane = load_grayscale(args.image)
    else:
        plane = procedural_reference(0, 512, 768)
    extract_features(plane, DEFAULT_CONFIG)  # warm caches before timing
    times = []
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        extract_features(plane, DEFAULT_CONFIG)
        times.append((time.perf_counter() - t0) * 1000.0)
    best, median = min(times), sorted(times)[len(times) // 2]
    print(
        f"feature extraction on {plane.shape[0]}x{plane.shape[1]}: "
        f"best {best:.1f} ms, median {median:.1f} ms over {args.repeat} runs"
    )
    if args.budget_ms is not None and median > args.budget_ms:
        return _fail(f"median {median:.1f} ms exceeds budget {args.budget_ms} ms")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradiqa",
        description="Blind image quality scoring from gradient and normalized-"
                    "luminance statistics.",
    )
    parser.add_argument("--version", action="version", version=f"gradiqa {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--jobs", "--threads", type=int, default=1, dest="jobs",
                        help="worker parallelism (output order is unaffected)")
    common.add_argument("--verbose", action="store_true", help="chattier progress output")
    common.add_argument("--config", help="JSON file supplying flag defaults "
                                         "(explicit flags still win)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common],
                       help="write a 27-feature CSV for images or a manifest")
    p.add_argument("images", nargs="*", help="image files (PGM/PNG/BMP)")
    p.add_argument("--manifest", help="manifest CSV supplying paths and targets")
    p.add_argument("--out", required=True, help="output features CSV")
    p.add_argument("--fail-fast", action="store_true", help="abort on the first bad image")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train the 27-30-1 quality network")
    p.add_argument("--features", help="features CSV from `extract`")
    p.add_argument("--manifest", help="manifest CSV (features extracted on the fly)")
    p.add_argument("--out", required=True, help="output model file (JSON)")
    p.add_argument("--max-epochs", type=int, default=2000)
    p.add_argument("--val-failures", type=int, default=6,
                   help="consecutive non-improving epochs before early stop")
    p.add_argument("--split", help="train,val,test fractions (default 0.70,0.15,0.15)")
    p.add_argument("--split-mode", choices=("random", "content"), default="random",
                   help="random rows, or keep each reference's images in one split")
    p.add_argument("--plot", action="store_true", help="also write SVG history charts")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score images with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("images", nargs="+", help="image files to score")
    p.add_argument("--out", help="output CSV (default: print to stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common],
                       help="per-distortion-class correlation report for a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="report CSV prefix")
    p.add_argument("--dump", help="also write per-image predictions CSV")
    p.add_argument("--subset", choices=("all", "train", "val", "test"), default="all",
                   help="restrict to one training split (needs --split-csv)")
    p.add_argument("--split-csv", help="split assignment CSV written by `train`")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a graded synthetic-distortion dataset")
    p.add_argument("--refs", required=True, help="directory of reference images")
    p.add_argument("--ladder", required=True, help="JSON ladder config (kinds/levels/seeds)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest-live", parents=[common],
                       help="build a manifest from a LIVE release-2 directory")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True, help="output manifest CSV")
    p.set_defaults(func=cmd_ingest_live)

    p = sub.add_parser("bench", parents=[common],
                       help="time single-image feature extraction")
    p.add_argument("--image", help="image to time (default: synthetic 512x768)")
    p.add_argument("--repeat", type=int, default=10)
    p.add_argument("--budget-ms", type=float, help="fail if the median exceeds this")
    p.set_defaults(func=cmd_bench)
    return parser, sub


def _apply_config_defaults(argv, parser, sub) -> None:
    """Seed flag defaults from a --config JSON file before parsing."""
    argv = list(argv)
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None:
        return
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: unreadable config file ({exc})") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object of flag defaults")
    parsers = [parser] + list(sub.choices.values())
    known = {a.dest for sp in parsers for a in sp._actions}
    unknown = set(doc) - known
    if unknown:
        raise UsageError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    for sp in parsers:
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in doc.items() if k in dests})


def main(argv=None) -> int:
    parser, sub = build_parser()
    args = None
    try:
        _apply_config_defaults(argv if argv is not None else sys.argv[1:], parser, sub)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (GradiqaError, OSError, ValueError) as exc:
        if args is not None and getattr(args, "verbose", False):
            raise
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
