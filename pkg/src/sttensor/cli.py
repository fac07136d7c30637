"""Command line interface.

Subcommands: ``synth`` (planted benchmark tensors), ``decompose`` (one CP
run), ``compare-inits`` (initializer x rank comparison table), ``cluster``
(k sweep over factor rows), ``eda`` (seasonal correlation maps and
autocorrelation functions).

Every command writes a JSON run report embedding the exact parameters and
seeds needed to rerun it. Reports are deterministic given the full flag
set, except for the ``timings`` and ``timestamp`` fields.

Exit codes: 0 success, 2 usage error, 3 input/format error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
import zlib
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .clustering import sweep_k
from .cpd import AlsOptions, cp_als
from .errors import FormatError, NumericError
from .io import (
    DatasetDescriptor,
    GridSpec,
    SyntheticConfig,
    generate_synthetic,
    load_binary,
    save_binary,
)
from .stats import SEASONS, TimeIndex, season_masks, correlation_map, seasonal_acf
from .stpca import StpcaOptions
from .tensor import cp_reconstruct

USAGE_ERROR = 2
INPUT_ERROR = 3
NUMERIC_ERROR = 4


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonnegative_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {value}")
    return value


def _int_list(text):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list: {exc}")


def _dims(text):
    parts = _int_list(text)
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError("expected --dims STEPS,ROWS,COLS with positive entries")
    return tuple(parts)


def _write_report(path, command, parameters, results, timings):
    report = {
        "command": command,
        "version": __version__,
        "parameters": parameters,
        "results": results,
        "timings": {k: float(v) for k, v in timings.items()},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))
    return report


def _load_tensor(path):
    if not Path(path).exists():
        raise FormatError("not-found", f"tensor file not found: {path}")
    return load_binary(path)


def _resolve_grid(args, descriptor):
    if getattr(args, "grid", None):
        return GridSpec.load(args.grid)
    return descriptor.grid


def _stpca_options(args):
    return StpcaOptions(b_max=args.b_max, weights=args.weights, seed=args.seed)


def _run_decomposition(tensor, descriptor, initializer, rank, seed, args):
    grid = _resolve_grid(args, descriptor) if initializer == "stpca" else None
    opts = AlsOptions(
        rank=rank,
        max_iters=args.max_iters,
        fit_tolerance=args.tol,
        ridge=args.ridge,
        seed=seed,
        initializer=initializer,
        stpca=_stpca_options(args) if initializer == "stpca" else None,
    )
    return cp_als(tensor, opts, grid=grid)


def _add_als_flags(sub, with_init=True):
    if with_init:
        sub.add_argument("--init", choices=("random", "hosvd", "stpca"), default="random")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--max-iters", type=_positive_int, default=500)
    sub.add_argument("--tol", type=float, default=1e-8)
    sub.add_argument("--ridge", type=_nonnegative_float, default=1e-12)
    sub.add_argument("--grid", default=None, help="grid JSON (defaults to the tensor's sidecar grid)")
    sub.add_argument("--b-max", type=int, default=5, help="harmonics for the stpca initializer")
    sub.add_argument("--weights", default="queen", help="spatial weights scheme: queen or knn:N")


def cmd_synth(args):
    n_steps, n_rows, n_cols = args.dims
    config = SyntheticConfig(
        n_steps=n_steps,
        n_rows=n_rows,
        n_cols=n_cols,
        n_variables=args.variables,
        rank=args.rank,
        smoothness=args.smoothness,
        n_clusters=args.clusters,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    tensor, truth = generate_synthetic(config)
    descriptor = DatasetDescriptor(
        variables=[f"var{k + 1}" for k in range(config.n_variables)],
        time_index=TimeIndex(datetime.date(2000, 1, 1), config.n_steps),
        grid=GridSpec.full(config.n_rows, config.n_cols),
        provenance=f"synthetic planted benchmark, rank={config.rank}, seed={config.seed}",
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_binary(out, tensor, descriptor)

    truth_payload = {
        "weights": truth.model.weights.tolist(),
        "factors": {
            "mode1": truth.model.factors[0].tolist(),
            "mode2": truth.model.factors[1].tolist(),
            "mode3": truth.model.factors[2].tolist(),
        },
        "labels": truth.labels.tolist(),
        "noise_sigma": truth.noise_sigma,
        "seed": truth.seed,
    }
    Path(str(out) + ".truth.json").write_text(json.dumps(truth_payload))

    crc = zlib.crc32(out.read_bytes()) & 0xFFFFFFFF
    _write_report(
        str(out) + ".report.json",
        "synth",
        {
            "out": str(out),
            "dims": list(args.dims),
            "variables": config.n_variables,
            "rank": config.rank,
            "noise": config.noise_sigma,
            "clusters": config.n_clusters,
            "smoothness": config.smoothness,
            "seed": config.seed,
        },
        {
            "tensor_dims": list(tensor.dims),
            "file_crc32": crc,
            "planted_weights": truth.model.weights.tolist(),
            "outputs": [str(out), str(out) + ".meta.json", str(out) + ".truth.json"],
        },
        {},
    )
    print(f"wrote {out} ({tensor.dims[0]}x{tensor.dims[1]}x{tensor.dims[2]}), crc32={crc:08x}")
    return 0


def _write_factors(out_dir, model):
    paths = []
    for mode, factor in enumerate(model.factors, start=1):
        frame = pd.DataFrame(
            factor, columns=[f"component_{r + 1}" for r in range(model.rank)]
        )
        frame.insert(0, "row", np.arange(factor.shape[0]))
        path = out_dir / f"factors_mode{mode}.csv"
        frame.to_csv(path, index=False)
        paths.append(str(path))
    return paths


def cmd_decompose(args):
    tensor, descriptor = _load_tensor(args.tensor)
    model, trace = _run_decomposition(tensor, descriptor, args.init, args.rank, args.seed, args)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    factor_paths = _write_factors(out_dir, model)
    trace_frame = pd.DataFrame(
        {"iteration": np.arange(1, trace.iterations + 1), "rel_error": trace.rel_errors}
    )
    trace_frame.to_csv(out_dir / "trace.csv", index=False)

    _write_report(
        out_dir / "report.json",
        "decompose",
        {
            "tensor": str(args.tensor),
            "rank": args.rank,
            "init": args.init,
            "seed": args.seed,
            "max_iters": args.max_iters,
            "tol": args.tol,
            "ridge": args.ridge,
            "b_max": args.b_max,
            "weights": args.weights,
            "grid": args.grid,
        },
        {
            "final_rel_error": float(trace.rel_errors[-1]),
            "iterations": trace.iterations,
            "stop_reason": trace.stop_reason,
            "weights": model.weights.tolist(),
            "dims": list(tensor.dims),
            "notes": trace.notes,
            "outputs": factor_paths + [str(out_dir / "trace.csv")],
        },
        {"init_seconds": trace.init_seconds, "als_seconds": trace.als_seconds},
    )
    print(
        f"{args.init} rank={args.rank}: rel_error={trace.rel_errors[-1]:.6f} "
        f"after {trace.iterations} sweeps ({trace.stop_reason})"
    )
    return 0


def cmd_compare_inits(args):
    tensor, descriptor = _load_tensor(args.tensor)
    seeds = [args.seed + s for s in range(args.seeds)]
    runs = []
    for initializer in ("random", "hosvd", "stpca"):
        run_seeds = seeds if initializer == "random" else seeds[:1]
        for rank in args.ranks:
            for seed in run_seeds:
                model, trace = _run_decomposition(tensor, descriptor, initializer, rank, seed, args)
                runs.append(
                    {
                        "initializer": initializer,
                        "rank": rank,
                        "seed": seed,
                        "rel_error": float(trace.rel_errors[-1]),
                        "iterations": trace.iterations,
                        "stop_reason": trace.stop_reason,
                        "init_seconds": trace.init_seconds,
                        "als_seconds": trace.als_seconds,
                    }
                )

    rows = []
    cells = {}
    for initializer in ("random", "hosvd", "stpca"):
        cells[initializer] = {}
        for rank in args.ranks:
            group = [r for r in runs if r["initializer"] == initializer and r["rank"] == rank]
            errors = [r["rel_error"] for r in group]
            cells[initializer][str(rank)] = min(errors)
            rows.append(
                {
                    "initializer": initializer,
                    "rank": rank,
                    "best_rel_error": min(errors),
                    "mean_rel_error": float(np.mean(errors)),
                    "runs": len(group),
                    "mean_init_seconds": float(np.mean([r["init_seconds"] for r in group])),
                    "mean_als_seconds": float(np.mean([r["als_seconds"] for r in group])),
                }
            )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(out_dir / "table.csv", index=False)

    timings = {}
    for run in runs:
        key = f"{run['initializer']}_rank{run['rank']}_seed{run['seed']}"
        timings[key + "_init_seconds"] = run["init_seconds"]
        timings[key + "_als_seconds"] = run["als_seconds"]
    results_runs = [
        {k: v for k, v in run.items() if not k.endswith("_seconds")} for run in runs
    ]
    _write_report(
        out_dir / "report.json",
        "compare-inits",
        {
            "tensor": str(args.tensor),
            "ranks": list(args.ranks),
            "seeds": seeds,
            "max_iters": args.max_iters,
            "tol": args.tol,
            "ridge": args.ridge,
            "b_max": args.b_max,
            "weights": args.weights,
            "grid": args.grid,
        },
        {"cells": cells, "runs": results_runs, "outputs": [str(out_dir / "table.csv")]},
        timings,
    )
    for row in rows:
        print(
            f"{row['initializer']:>6} rank={row['rank']}: best={row['best_rel_error']:.6f} "
            f"mean={row['mean_rel_error']:.6f} over {row['runs']} run(s)"
        )
    return 0


def cmd_cluster(args):
    factors_path = Path(args.factors) / f"factors_mode{args.mode}.csv"
    if not factors_path.exists():
        raise FormatError("not-found", f"factor file not found: {factors_path}")
    frame = pd.read_csv(factors_path)
    points = frame.drop(columns=["row"]).to_numpy(dtype=np.float64)
    if args.k_max > points.shape[0] - 1:
        raise ValueError(
            f"--k-max {args.k_max} exceeds n-1 = {points.shape[0] - 1} for mode {args.mode}"
        )
    sweep = sweep_k(points, k_min=args.k_min, k_max=args.k_max, seed=args.seed)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = pd.DataFrame(
        {
            "k": sweep.ks,
            "mean_silhouette": sweep.silhouettes,
            "best": (sweep.ks == sweep.best_k).astype(int),
        }
    )
    table.to_csv(out_dir / "silhouette_by_k.csv", index=False)
    assignments = pd.DataFrame(
        {"row": np.arange(points.shape[0]), "cluster": sweep.best.assignments}
    )
    assignments.to_csv(out_dir / "assignments.csv", index=False)

    _write_report(
        out_dir / "report.json",
        "cluster",
        {
            "factors": str(args.factors),
            "mode": args.mode,
            "k_min": args.k_min,
            "k_max": args.k_max,
            "seed": args.seed,
        },
        {
            "best_k": sweep.best_k,
            "best_mean_silhouette": float(sweep.best.mean_silhouette),
            "table": [
                {"k": int(k), "mean_silhouette": float(s)}
                for k, s in zip(sweep.ks, sweep.silhouettes)
            ],
            "n_rows": int(points.shape[0]),
            "outputs": [str(out_dir / "silhouette_by_k.csv"), str(out_dir / "assignments.csv")],
        },
        {},
    )
    print(f"mode {args.mode}: best k = {sweep.best_k}, silhouette = {sweep.best.mean_silhouette:.4f}")
    return 0


def _resolve_variable(descriptor, text):
    if text.isdigit() or (text.startswith("-") and text[1:].isdigit()):
        return int(text)
    if text in descriptor.variables:
        return descriptor.variables.index(text)
    raise ValueError(f"unknown variable {text!r} (have: {', '.join(descriptor.variables)})")


def cmd_eda(args):
    tensor, descriptor = _load_tensor(args.tensor)
    if args.start_date or args.calendar:
        start = args.start_date or descriptor.time_index.start.isoformat()
        calendar = args.calendar or descriptor.time_index.calendar
        time_index = TimeIndex(start, tensor.dims[0], calendar)
    else:
        time_index = descriptor.time_index
    if time_index.length != tensor.dims[0]:
        raise ValueError("time index length does not match the tensor")

    variable = _resolve_variable(descriptor, args.variable)
    masks = {m.season: m for m in season_masks(time_index)}
    wanted = list(SEASONS) if args.season == "all" else [args.season]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    season_counts = {}
    acf_mode = args.ref_cell is None
    n_cells = tensor.dims[1]
    if acf_mode:
        cell = args.acf_cell if args.acf_cell is not None else n_cells // 2
    else:
        cell = args.ref_cell

    for season in wanted:
        mask = masks[season]
        season_counts[season] = int(mask.mask.sum())
        if acf_mode:
            values = seasonal_acf(
                tensor, variable, cell, mask, args.max_lag, min_pairs=args.min_pairs
            )
            frame = pd.DataFrame(
                {
                    "lag": np.arange(1, args.max_lag + 1),
                    "value": values,
                    "missing": np.isnan(values).astype(int),
                }
            )
            path = out_dir / f"acf_{season}.csv"
        else:
            values = correlation_map(tensor, variable, mask, cell)
            frame = pd.DataFrame(
                {
                    "cell_id": np.arange(n_cells),
                    "value": values,
                    "missing": np.isnan(values).astype(int),
                }
            )
            path = out_dir / f"corr_map_{season}.csv"
        frame.to_csv(path, index=False)
        outputs.append(str(path))

    _write_report(
        out_dir / "report.json",
        "eda",
        {
            "tensor": str(args.tensor),
            "variable": args.variable,
            "season": args.season,
            "ref_cell": args.ref_cell,
            "acf_cell": args.acf_cell,
            "max_lag": args.max_lag,
            "min_pairs": args.min_pairs,
            "start_date": args.start_date,
            "calendar": args.calendar,
        },
        {
            "kind": "acf" if acf_mode else "correlation_map",
            "variable_index": variable,
            "variable_name": descriptor.variables[variable],
            "cell": int(cell),
            "season_step_counts": season_counts,
            "outputs": outputs,
        },
        {},
    )
    print(f"wrote {len(outputs)} file(s) to {out_dir}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sttensor",
        description="Spatio-temporal tensor decomposition and clustering toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-structure benchmark tensor")
    p.add_argument("out", help="output STT1 path")
    p.add_argument("--dims", type=_dims, default=(365, 12, 12), help="STEPS,ROWS,COLS")
    p.add_argument("--variables", type=_positive_int, default=3)
    p.add_argument("--rank", type=_positive_int, default=3)
    p.add_argument("--noise", type=_nonnegative_float, default=0.1)
    p.add_argument("--clusters", type=_positive_int, default=None)
    p.add_argument("--smoothness", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decompose", help="run one CP decomposition")
    p.add_argument("tensor", help="STT1 tensor path")
    p.add_argument("--rank", type=_positive_int, required=True)
    _add_als_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("compare-inits", help="compare initializers across ranks")
    p.add_argument("tensor", help="STT1 tensor path")
    p.add_argument("--ranks", type=_int_list, default=[2, 3])
    p.add_argument("--seeds", type=_positive_int, default=1, help="number of seeds for random init")
    _add_als_flags(p, with_init=False)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare_inits)

    p = sub.add_parser("cluster", help="k-means sweep over factor rows")
    p.add_argument("factors", help="output directory of a decompose run")
    p.add_argument("--mode", type=int, choices=(1, 2), required=True)
    p.add_argument("--k-min", type=_positive_int, default=2)
    p.add_argument("--k-max", type=_positive_int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eda", help="seasonal correlation maps or autocorrelation functions")
    p.add_argument("tensor", help="STT1 tensor path")
    p.add_argument("--variable", default="0", help="variable index or name")
    p.add_argument("--season", choices=SEASONS + ("all",), default="all")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ref-cell", type=int, default=None, help="correlation map reference cell")
    group.add_argument(
        "--acf-cell",
        type=int,
        nargs="?",
        const=-1,
        default=None,
        help="autocorrelation cell (default: middle of the flattened cell list)",
    )
    p.add_argument("--max-lag", type=_positive_int, default=60)
    p.add_argument("--min-pairs", type=_positive_int, default=30)
    p.add_argument("--start-date", default=None)
    p.add_argument("--calendar", choices=("gregorian", "noleap"), default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eda)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "acf_cell", None) == -1:
        args.acf_cell = None  # default cell is resolved against the tensor
    try:
        return args.func(args)
    except FormatError as err:
        print(f"error [{err.code}]: {err}", file=sys.stderr)
        return INPUT_ERROR
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return INPUT_ERROR
    except (NumericError, np.linalg.LinAlgError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return NUMERIC_ERROR
    except ValueError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return USAGE_ERROR


def entry():  # console script
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
