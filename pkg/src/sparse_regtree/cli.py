"""Command line entry point: train, predict, evaluate, sweep, trace-plot-data.

Exit codes: 0 on success (a timed-out solve that returns its best tree counts
as success), 2 for usage errors, 3 for unreadable or unusable data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dataset import BinaryDataset, DataError, FeatureMeta, binarize, encode, load_csv, read_frame
from .model import EvalReport, SchemaError, Tree, deserialize, evaluate, render_text, serialize
from .solver import SolverConfig, TraceRecord, solve

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

# regularization grid used for frontier sweeps
DEFAULT_GRID = (
    0.0001, 0.0002, 0.0005, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007,
    0.008, 0.009, 0.01, 0.035, 0.055, 0.08, 0.1, 0.105, 0.2, 0.5,
)
LEAF_DISPLAY_CAP = 30
SWEEP_COLUMNS = [
    "depth", "lambda_arg", "lambda", "leaves", "train_mse", "r_squared", "objective",
    "wall_time_s", "status", "over_30_leaves",
]
TRACE_COLUMNS = ["wall_time_s", "lower_bound", "upper_bound", "graph_size", "iterations"]


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    if text.strip().lower() == "default":
        return list(DEFAULT_GRID)
    try:
        grid = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --lambda-grid {text!r}") from exc
    if not grid:
        raise UsageError("--lambda-grid is empty")
    if any(g < 0 or not math.isfinite(g) for g in grid):
        raise UsageError("--lambda-grid values must be finite and non-negative")
    return grid


def load_binary(args) -> BinaryDataset:
    raw = load_csv(args.data, args.target)
    cats = args.categorical.split(",") if args.categorical else None
    return binarize(raw, args.buckets, categorical=cats, drop_first_level=args.drop_first_level)


def lambda_raw(lam: float, data: BinaryDataset, units: str) -> float:
    """Convert a command-line lambda to MSE units."""
    if units == "variance":
        return lam * float(np.var(data.targets))
    return lam


def write_trace(trace: list[TraceRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            w.writerow([f"{r.wall_time:.6f}", repr(r.root_lb), repr(r.root_ub), r.graph_size, r.iterations])


def read_trace(path) -> list[TraceRecord]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read trace {path}: {exc}") from exc
    try:
        return [
            TraceRecord(
                float(r["wall_time_s"]), float(r["lower_bound"]), float(r["upper_bound"]),
                int(r["graph_size"]), int(r["iterations"]),
            )
            for r in rows
        ]
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed trace file {path}") from exc


def model_document(tree: Tree, data: BinaryDataset, lam_units: str, lam_cli: float) -> str:
    doc = json.loads(serialize(tree))
    doc["encoding"] = [m.to_dict() for m in data.feature_meta]
    doc["target"] = data.target_name
    doc["lambda_cli"] = {"value": lam_cli, "units": lam_units}
    return json.dumps(doc, indent=2, sort_keys=True)


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    tree = deserialize(text)
    doc = json.loads(text)
    meta = [FeatureMeta.from_dict(d) for d in doc.get("encoding", [])]
    return tree, meta, doc.get("target")


def encode_frame(frame, meta, tree: Tree) -> np.ndarray:
    if not meta:
        # model trained on pre-binarized columns: take them in order
        cols = [c for c in frame.columns][: tree.n_features]
        return frame[cols].to_numpy().astype(np.uint8)
    return encode(frame, meta)


# -- commands ------------------------------------------------------------------


def cmd_train(args) -> int:
    if args.lambda_grid is not None:
        raise UsageError("--lambda-grid is only valid for sweep; use --lambda")
    data = load_binary(args)
    lam = lambda_raw(args.lam, data, args.lambda_units)
    cfg = SolverConfig(
        lam=lam, depth_limit=args.depth, time_limit=args.time_limit_s, bound_mode=args.bound,
        warm_start=args.warm_start,
    )
    res = solve(data, cfg)
    tree = res.tree
    if args.out_model:
        Path(args.out_model).write_text(model_document(tree, data, args.lambda_units, args.lam), encoding="utf-8")
    if args.out_trace:
        write_trace(res.trace, args.out_trace)
    text = render_text(tree)
    if args.out_text:
        Path(args.out_text).write_text(text + "\n", encoding="utf-8")
    if not args.quiet:
        print(text)
    ev = evaluate(tree, data)
    print(
        f"objective={res.upper_bound:.10g} lower_bound={res.lower_bound:.10g} gap={res.gap:.3g} "
        f"leaves={tree.leaf_count} depth={tree.depth} mse={ev.mse:.10g} r2={ev.r_squared:.6f} "
        f"lambda_mse={lam:.10g} status={res.status} wall_time_s={res.wall_time:.3f}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    tree, meta, target = load_model(args.model)
    frame = read_frame(args.data)
    drop = [c for c in (args.target or target,) if c and c in frame.columns]
    frame = frame.drop(columns=drop)
    frame = frame.dropna(axis=0, how="any")
    pred = tree.predict(encode_frame(frame, meta, tree))
    out = open(args.out_csv, "w", newline="", encoding="utf-8") if args.out_csv else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["row", "prediction"])
        for i, p in zip(frame.index, pred):
            w.writerow([i, repr(float(p))])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    tree, meta, target = load_model(args.model)
    raw = load_csv(args.data, args.target or target)
    X = encode_frame(raw.columns, meta, tree)
    ev: EvalReport = evaluate(tree, (X, raw.target))
    print(f"mse={ev.mse:.10g} r2={ev.r_squared:.6f} n={ev.n} leaves={tree.leaf_count}")
    return EXIT_OK


def _sweep_cell(payload):
    data, depth, lam_cli, lam, time_limit, bound = payload
    res = solve(data, SolverConfig(lam=lam, depth_limit=depth, time_limit=time_limit, bound_mode=bound))
    ev = evaluate(res.tree, data)
    leaves = res.tree.leaf_count
    return {
        "depth": "none" if depth is None else depth,
        "lambda_arg": repr(lam_cli),
        "lambda": repr(lam),
        "leaves": leaves,
        "train_mse": repr(ev.mse),
        "r_squared": repr(ev.r_squared),
        "objective": repr(ev.mse + lam * leaves),
        "wall_time_s": f"{res.wall_time:.4f}",
        "status": res.status,
        "over_30_leaves": int(leaves > LEAF_DISPLAY_CAP),
    }


def cmd_sweep(args) -> int:
    if args.lam is not None:
        raise UsageError("sweep takes --lambda-grid, not --lambda")
    grid = parse_grid(args.lambda_grid or "default")
    depths = list(args.depth_list or [])
    if any(d < 1 for d in depths):
        raise UsageError("--depth values must be at least 1")
    if args.no_depth_limit or not depths:
        depths.append(None)
    data = load_binary(args)
    cells = [
        (data, d, g, lambda_raw(g, data, args.lambda_units), args.time_limit_s, args.bound)
        for d in depths
        for g in grid
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    out = open(args.out_csv, "w", newline="", encoding="utf-8") if args.out_csv else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_trace_plot_data(args) -> int:
    trace = read_trace(args.trace)
    out = open(args.out_csv, "w", newline="", encoding="utf-8") if args.out_csv else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["time", "bound_type", "value"])
        for r in trace:
            w.writerow([f"{r.wall_time:.6f}", "lower", repr(r.root_lb)])
            w.writerow([f"{r.wall_time:.6f}", "upper", repr(r.root_ub)])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _data_flags(p, target_required=False):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--target", required=target_required, help="target column (default: last column)")
    p.add_argument("--buckets", type=int, default=4, help="equal-width buckets per numeric column")
    p.add_argument("--categorical", help="comma-separated columns to one-hot encode")
    p.add_argument("--drop-first-level", action="store_true", help="drop the first level of categoricals")


def _solver_flags(p):
    p.add_argument("--time-limit-s", type=float, default=None)
    p.add_argument("--bound", choices=["kmeans", "equiv"], default="kmeans")
    p.add_argument(
        "--lambda-units", choices=["variance", "mse"], default="variance",
        help="'variance': lambda is a fraction of the target variance (default); 'mse': raw MSE units",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparse-regtree", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one optimal tree")
    _data_flags(p)
    _solver_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--lambda-grid", default=None, help=argparse.SUPPRESS)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--depth", type=int, default=None)
    g.add_argument("--no-depth-limit", action="store_true")
    p.add_argument("--warm-start", action="store_true", help="seed the search greedily (speed only)")
    p.add_argument("--out-model")
    p.add_argument("--out-trace")
    p.add_argument("--out-text")
    p.add_argument("-q", "--quiet", action="store_true", help="do not print the tree")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict rows of a CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", help="column to ignore if present")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MSE and R^2 of a saved model on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="train over a lambda grid and depth list")
    _data_flags(p)
    _solver_flags(p)
    p.add_argument("--lambda-grid", default=None, help="comma-separated values or 'default'")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help=argparse.SUPPRESS)
    p.add_argument("--depth", dest="depth_list", type=int, nargs="+", help="one or more depth limits")
    p.add_argument("--no-depth-limit", action="store_true", help="also run without a depth limit")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trace-plot-data", help="tidy (time, bound_type, value) rows from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_trace_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "no_depth_limit", False) and args.command == "train":
        args.depth = None
    if args.command == "train" and args.depth is not None and args.depth < 1:
        parser.error("--depth must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SchemaError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
