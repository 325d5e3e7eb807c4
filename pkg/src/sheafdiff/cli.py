"""Command line front end.

Every subcommand prints a JSON summary to stdout; the ones that produce
tables write delimited files into --out and render a matching figure
next to them.  Exit codes: 0 success, 2 malformed input, 3 numeric
failure, 4 property-suite failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .errors import EXIT_VERIFY, ParseError, SheafError, exit_code_for
from .graphs import uniform_dims
from .sheaves import dirichlet_energy, load_sheaf
from .stability import ThetaVector, moment_map, cent_mm, theta_mm, project_theta, stability_wall_diagnostic
from .diffusion import DiffusionConfig, default_alpha, euler_diffuse, spectral_diffuse, spectral_gap
from .model import SheafModel
from .training import TrainConfig, evaluate, save_checkpoint, train, write_history_csv
from .datasets import (
    generate_two_block,
    load_dataset,
    summarize,
    write_dataset,
    write_fixture_dataset,
)
from .experiments import (
    ARCH_PRESETS,
    REGULARIZER_WEIGHTS,
    ExperimentSpec,
    emit_results,
    frozen_identity_baseline,
    matched_square_control,
    run_depth_ablation,
    run_grid,
    write_aggregate_csv,
    write_depth_csv,
)
from .verification import ALL_SUITES, run_suite
from . import figures

__all__ = ["main", "build_parser"]


def _out_dir(args) -> str:
    path = args.out or "."
    os.makedirs(path, exist_ok=True)
    return path


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


def _read_signal_csv(path: str, expected_rows: int) -> np.ndarray:
    try:
        x = np.loadtxt(path, delimiter=",", ndmin=1)
    except OSError as exc:
        raise ParseError(f"cannot read signal {path}: {exc}") from exc
    except ValueError as exc:
        raise ParseError(f"{path}: malformed signal CSV: {exc}") from exc
    if x.shape[0] != expected_rows:
        raise ParseError(
            f"{path}: {x.shape[0]} rows, sheaf has {expected_rows} stalk coordinates"
        )
    return x


# --- subcommands ------------------------------------------------------------


def cmd_verify(args) -> int:
    names = [args.property] if args.property else list(ALL_SUITES)
    reports = []
    for name in names:
        report = run_suite(name, seed=args.seed, instances=args.instances)
        reports.append(report)
        print(json.dumps(report.as_dict()))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump([r.as_dict() for r in reports], fh, indent=2)
            fh.write("\n")
    return 0 if all(r.ok for r in reports) else EXIT_VERIFY


def cmd_diffuse(args) -> int:
    sheaf = load_sheaf(args.sheaf)
    n0 = sheaf.dims.n0
    if args.signal:
        x0 = _read_signal_csv(args.signal, n0)
    else:
        x0 = np.random.default_rng(args.seed).standard_normal(n0)
    out = _out_dir(args)

    summary: dict = {
        "mode": args.mode,
        "stalk_coordinates": n0,
        "input_norm": float(np.linalg.norm(x0)),
    }
    h, lam_plus, lam_max = spectral_gap(sheaf)
    summary["sections"] = h
    summary["lambda_plus"] = lam_plus
    summary["lambda_max"] = lam_max

    if args.mode == "spectral":
        xt = spectral_diffuse(sheaf, x0, args.t)
        summary["t"] = args.t
        summary["output_norm"] = float(np.linalg.norm(xt))
        summary["energy_initial"] = dirichlet_energy(sheaf, x0)
        summary["energy_final"] = dirichlet_energy(sheaf, xt)
        final = xt
    else:
        alpha = args.alpha if args.alpha is not None else default_alpha(sheaf)
        config = DiffusionConfig(mode="euler", alpha=alpha, layers=args.layers)
        report = euler_diffuse(sheaf, x0, config)
        trace_path = os.path.join(out, "energy_trace.csv")
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write("step,energy\n")
            for step, energy in report.energy_trace:
                fh.write(f"{step},{energy:.10g}\n")
        figures.plot_energy_trace(
            report.energy_trace, os.path.join(out, "energy_trace.png")
        )
        summary["alpha"] = alpha
        summary["layers"] = args.layers
        summary["converged"] = report.converged
        summary["nonfinite_at"] = report.nonfinite_at
        if report.energy_trace:
            summary["energy_initial"] = report.energy_trace[0][1]
            summary["energy_final"] = report.energy_trace[-1][1]
        summary["files"] = [trace_path, os.path.join(out, "energy_trace.png")]
        final = report.final

    signal_path = os.path.join(out, "diffused.csv")
    np.savetxt(signal_path, final, delimiter=",", fmt="%.17g")
    summary.setdefault("files", []).insert(0, signal_path)
    _print_json(summary)
    return 0


def cmd_moment(args) -> int:
    sheaf = load_sheaf(args.sheaf)
    graph, dims = sheaf.graph, sheaf.dims
    mu = moment_map(sheaf)
    traces = {}
    for i, name in enumerate(graph.vertices):
        traces[name] = float(np.trace(mu.mu_v[i]))
    for e in range(graph.n_edges):
        traces[graph.edge_id(e)] = float(np.trace(mu.mu_e[e]))

    summary = {
        "traces": traces,
        "trace_sum": float(sum(traces.values())),
        "cent_mm": cent_mm(sheaf),
    }
    if args.theta:
        try:
            raw = np.array([float(t) for t in args.theta.split(",")])
        except ValueError as exc:
            raise ParseError(f"--theta: {exc}") from exc
        if raw.size != dims.n_objects:
            raise ParseError(
                f"--theta has {raw.size} entries, sheaf has {dims.n_objects} objects"
            )
        theta = project_theta(raw, dims)
        summary["theta"] = [float(t) for t in theta.values]
        summary["theta_mm"] = theta_mm(sheaf, theta)
    else:
        summary["theta_mm_at_zero"] = theta_mm(sheaf, ThetaVector.zero(dims))

    wall = stability_wall_diagnostic(dims, seed=args.seed)
    summary["wall"] = {
        "uniform": wall.uniform,
        "forced_trivial_weight_zero": wall.forced_trivial_weight_zero,
        "max_abs_trivial_weight": wall.max_abs_trivial_weight,
        "escape_trivial_weight": wall.escape_trivial_weight,
        "escape_theta": (
            None
            if wall.example_escape_theta is None
            else [float(t) for t in wall.example_escape_theta.values]
        ),
    }
    _print_json(summary)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, default=float)
            fh.write("\n")
    return 0


def _spec_from_args(args, seeds: tuple[int, ...] = (0,)) -> ExperimentSpec:
    if args.d_v is not None or args.d_e is not None:
        if args.d_v is None or args.d_e is None:
            raise ParseError("--d-v and --d-e must be given together")
        lam_mu, lam_theta = REGULARIZER_WEIGHTS[args.regularizer]
        return ExperimentSpec(
            name=f"{args.d_v}x{args.d_e}/{args.regularizer}",
            d_v=args.d_v,
            d_e=args.d_e,
            regularizer=args.regularizer,
            lambda_mu=lam_mu,
            lambda_theta=lam_theta,
            layers=args.layers,
            hidden=args.hidden,
            alpha_scale=args.alpha_scale,
            dropout_p=args.dropout,
            seeds=seeds,
        )
    return ExperimentSpec.preset(
        args.arch,
        args.regularizer,
        layers=args.layers,
        hidden=args.hidden,
        alpha_scale=args.alpha_scale,
        dropout_p=args.dropout,
        seeds=seeds,
    )


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        weight_decay=args.weight_decay,
        max_epochs=args.epochs,
        patience=min(args.patience, args.epochs),
        seed=args.seed,
    )


def cmd_train(args) -> int:
    bundle = load_dataset(args.dataset)
    spec = _spec_from_args(args)
    config = _train_config(args)
    dims = uniform_dims(bundle.graph, spec.d_v, spec.d_e)
    model = SheafModel.initialize(
        bundle.graph,
        dims,
        bundle.n_features,
        bundle.n_classes,
        hidden=spec.hidden,
        layers=spec.layers,
        lambda_mu=spec.lambda_mu,
        lambda_theta=spec.lambda_theta,
        alpha_scale=spec.alpha_scale,
        dropout_p=spec.dropout_p,
        seed=args.seed,
    )
    result = train(model, bundle, config, split_index=args.split)
    split = bundle.splits[args.split]

    out = _out_dir(args)
    history_csv = os.path.join(out, "history.csv")
    write_history_csv(result, history_csv)
    files = [history_csv]
    if result.history:
        history_png = os.path.join(out, "history.png")
        figures.plot_training_history(result.history, history_png)
        files.append(history_png)
    checkpoint = os.path.join(out, "checkpoint.json")
    save_checkpoint(model, checkpoint)
    files.append(checkpoint)

    if result.halt_reason == "nonfinite":
        test_acc = float("nan")
        best_val_acc = float("nan")
    else:
        test_acc = evaluate(model, bundle.features, bundle.labels, split.test)
        best_val_acc = max((r.val_acc for r in result.history), default=float("nan"))
    summary = {
        "spec": spec.name,
        "split": args.split,
        "epochs_run": len(result.history),
        "best_epoch": result.best_epoch,
        "halt_reason": result.halt_reason,
        "best_val_loss": result.best_val_loss,
        "best_val_acc": best_val_acc,
        "test_acc": test_acc,
        "files": files,
    }
    if result.history:
        b = result.final_breakdown
        summary["final_loss"] = {
            "task": b.task, "cent": b.cent, "theta_mm": b.theta_mm, "total": b.total
        }
    _print_json(summary)
    return 0


def cmd_grid(args) -> int:
    bundle = load_dataset(args.dataset)
    seeds = tuple(range(args.seeds))
    specs = []
    for arch in args.archs.split(","):
        for reg in args.regularizers.split(","):
            specs.append(
                ExperimentSpec.preset(
                    arch.strip(),
                    reg.strip(),
                    layers=args.layers,
                    hidden=args.hidden,
                    alpha_scale=args.alpha_scale,
                    dropout_p=args.dropout,
                    seeds=seeds,
                )
            )
    if args.matched_control:
        rect = next((s for s in specs if s.d_v != s.d_e), None)
        if rect is None:
            raise ParseError("--matched-control needs a rectangular spec in the grid")
        specs.append(replace(matched_square_control(rect, bundle), seeds=seeds))
    if args.identity_baseline:
        specs.append(frozen_identity_baseline(seeds=seeds))

    config = _train_config(args)
    records, aggregates = run_grid(specs, bundle, config)

    out = _out_dir(args)
    ext = "json" if args.format == "json" else "csv"
    records_path = os.path.join(out, f"grid_records.{ext}")
    emit_results(records, args.format, records_path, config=config, aggregates=aggregates)
    agg_path = os.path.join(out, "grid_aggregates.csv")
    write_aggregate_csv(aggregates, agg_path)
    fig_path = os.path.join(out, "grid_summary.png")
    figures.plot_grid_summary(aggregates, fig_path)

    _print_json(
        {
            "cells": len(records),
            "aggregates": [
                {
                    "spec": a.spec_name,
                    "test": a.formatted,
                    "mean_val": a.mean_val,
                    "halt_count": a.halt_count,
                    "n_parameters": a.n_parameters,
                }
                for a in aggregates
            ],
            "files": [records_path, agg_path, fig_path],
        }
    )
    return 0


def cmd_ablate_depth(args) -> int:
    bundle = load_dataset(args.dataset)
    depths = sorted(int(d) for d in args.depths.split(","))
    spec = _spec_from_args(args, seeds=tuple(range(args.seeds)))
    config = _train_config(args)
    records, rows = run_depth_ablation(spec, bundle, depths, config)

    out = _out_dir(args)
    depth_path = os.path.join(out, "depth_ablation.csv")
    write_depth_csv(rows, depth_path)
    ext = "json" if args.format == "json" else "csv"
    records_path = os.path.join(out, f"depth_records.{ext}")
    emit_results(records, args.format, records_path, config=config)
    fig_path = os.path.join(out, "depth_ablation.png")
    figures.plot_depth_ablation(rows, fig_path)

    _print_json(
        {
            "rows": [
                {
                    "depth": r.depth,
                    "mean_test": r.mean_test,
                    "std_test": r.std_test,
                    "halt_count": r.halt_count,
                }
                for r in rows
            ],
            "files": [depth_path, records_path, fig_path],
        }
    )
    return 0


def cmd_gen_synth(args) -> int:
    if args.fixture:
        manifest = write_fixture_dataset(
            args.directory,
            n_vertices=args.fixture_vertices,
            n_edges=args.fixture_edges,
            n_features=args.fixture_features,
            n_classes=args.fixture_classes,
            seed=args.seed,
            n_splits=args.n_splits,
        )
    else:
        bundle = generate_two_block(
            n_per_block=args.n_per_block,
            p_intra=args.p_intra,
            p_inter=args.p_inter,
            seed=args.seed,
            n_splits=args.n_splits,
        )
        write_dataset(bundle, args.directory)
        manifest = bundle.manifest
    _print_json({"directory": args.directory, "manifest": manifest})
    return 0


def cmd_inspect_dataset(args) -> int:
    bundle = load_dataset(args.dataset)
    summary = summarize(bundle)
    if bundle.manifest is not None:
        summary["manifest"] = bundle.manifest
    _print_json(summary)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, default=float)
            fh.write("\n")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--out", default=None, help="output directory or file")
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv",
        help="record file format for table-emitting commands",
    )

    train_common = argparse.ArgumentParser(add_help=False)
    train_common.add_argument(
        "--arch", choices=sorted(ARCH_PRESETS), default="rect-3to2"
    )
    train_common.add_argument("--d-v", type=int, default=None,
                              help="vertex stalk dimension (overrides --arch)")
    train_common.add_argument("--d-e", type=int, default=None,
                              help="edge stalk dimension (overrides --arch)")
    train_common.add_argument(
        "--regularizer", choices=sorted(REGULARIZER_WEIGHTS), default="theta"
    )
    train_common.add_argument("--layers", type=int, default=4)
    train_common.add_argument("--hidden", type=int, default=8)
    train_common.add_argument("--alpha-scale", type=float, default=1.0)
    train_common.add_argument("--dropout", type=float, default=0.0)
    train_common.add_argument("--epochs", type=int, default=300)
    train_common.add_argument("--patience", type=int, default=50)
    train_common.add_argument("--lr", type=float, default=0.01)
    train_common.add_argument("--weight-decay", type=float, default=5e-3)

    parser = argparse.ArgumentParser(
        prog="sheafdiff",
        description="Sheaf diffusion on graphs: sections, stability, training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common],
                       help="run the theorem property suites")
    p.add_argument("--property", choices=sorted(ALL_SUITES), default=None,
                   help="run one suite instead of all")
    p.add_argument("--instances", type=int, default=None,
                   help="override the suite's instance count")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("diffuse", parents=[common], help="diffuse a signal")
    p.add_argument("sheaf", help="sheaf JSON file")
    p.add_argument("--mode", choices=("euler", "spectral"), default="euler")
    p.add_argument("--t", type=float, default=1.0, help="spectral-mode time")
    p.add_argument("--alpha", type=float, default=None,
                   help="euler step size (default 1/lambda_max)")
    p.add_argument("--layers", type=int, default=16, help="euler step count")
    p.add_argument("--signal", default=None,
                   help="input CSV, one row per stalk coordinate (default: random)")
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("moment", parents=[common],
                       help="moment map traces, balance values, wall diagnostic")
    p.add_argument("sheaf", help="sheaf JSON file")
    p.add_argument("--theta", default=None,
                   help="comma-separated raw theta, projected before use")
    p.set_defaults(func=cmd_moment)

    p = sub.add_parser("train", parents=[common, train_common],
                       help="train one model on a dataset directory")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--split", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", parents=[common, train_common],
                       help="architecture x regularizer grid")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--archs", default="square-3x3,rect-3to2")
    p.add_argument("--regularizers", default="none,cent,theta")
    p.add_argument("--seeds", type=int, default=1, help="seeds per cell")
    p.add_argument("--matched-control", action="store_true",
                   help="add the parameter-matched square control")
    p.add_argument("--identity-baseline", action="store_true",
                   help="add the frozen identity-map deep baseline")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("ablate-depth", parents=[common, train_common],
                       help="sweep diffusion depth")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--depths", default="2,4,8,16")
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_ablate_depth)

    p = sub.add_parser("gen-synth", parents=[common],
                       help="write a synthetic dataset directory")
    p.add_argument("directory", help="target directory")
    p.add_argument("--n-per-block", type=int, default=30)
    p.add_argument("--p-intra", type=float, default=0.1)
    p.add_argument("--p-inter", type=float, default=0.3)
    p.add_argument("--n-splits", type=int, default=1)
    p.add_argument("--fixture", action="store_true",
                   help="write the benchmark-shaped random fixture instead")
    p.add_argument("--fixture-vertices", type=int, default=183)
    p.add_argument("--fixture-edges", type=int, default=325)
    p.add_argument("--fixture-features", type=int, default=1703)
    p.add_argument("--fixture-classes", type=int, default=5)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("inspect-dataset", parents=[common],
                       help="report dataset counts and homophily")
    p.add_argument("dataset", help="dataset directory")
    p.set_defaults(func=cmd_inspect_dataset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SheafError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exit_code_for(exc)
        return code if code is not None else 1


if __name__ == "__main__":
    sys.exit(main())
