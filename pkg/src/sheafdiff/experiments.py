"""Experiment orchestration: architecture/regularizer grids, the
parameter-matched square control, depth sweeps, and result emission.

Every run is addressed by (spec, split, seed) and seeded from that
address, so a grid is a pure function of its inputs and reruns emit
byte-identical tables.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParseError, PreconditionError, StructuralError
from .datasets import DatasetBundle
from .graphs import uniform_dims
from .model import SheafModel, count_parameters
from .sheaves import dirichlet_energy
from .training import TrainConfig, evaluate, train

__all__ = [
    "ExperimentSpec",
    "ResultRecord",
    "AggregateRecord",
    "DepthRow",
    "run_grid",
    "run_depth_ablation",
    "matched_square_control",
    "frozen_identity_baseline",
    "emit_results",
    "parse_results",
    "write_aggregate_csv",
    "write_depth_csv",
    "format_mean_std",
]

ARCH_PRESETS = {
    "square-3x3": (3, 3),
    "rect-3to2": (3, 2),
}

REGULARIZER_WEIGHTS = {
    "none": (0.0, 0.0),
    "cent": (2e-3, 0.0),
    "theta": (0.0, 1e-4),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One model recipe to run across splits and seeds."""

    name: str
    d_v: int
    d_e: int
    regularizer: str
    lambda_mu: float
    lambda_theta: float
    layers: int = 4
    hidden: int = 8
    alpha_scale: float = 1.0
    dropout_p: float = 0.0
    identity_maps: bool = False
    freeze_maps: bool = False
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if self.regularizer not in REGULARIZER_WEIGHTS:
            raise StructuralError(
                f"unknown regularizer {self.regularizer!r}; "
                f"choose from {sorted(REGULARIZER_WEIGHTS)}"
            )
        if self.d_v < 1 or self.d_e < 1 or self.hidden < 1:
            raise StructuralError("dimensions and hidden width must be >= 1")
        if not self.seeds:
            raise StructuralError("spec needs at least one seed")

    @property
    def arch(self) -> str:
        return f"{self.d_v}x{self.d_e}"

    @classmethod
    def preset(cls, arch: str, regularizer: str, **overrides) -> "ExperimentSpec":
        if arch not in ARCH_PRESETS:
            raise StructuralError(
                f"unknown architecture {arch!r}; choose from {sorted(ARCH_PRESETS)}"
            )
        d_v, d_e = ARCH_PRESETS[arch]
        lam_mu, lam_theta = REGULARIZER_WEIGHTS[regularizer]
        fields = {
            "name": f"{arch}/{regularizer}",
            "d_v": d_v,
            "d_e": d_e,
            "regularizer": regularizer,
            "lambda_mu": lam_mu,
            "lambda_theta": lam_theta,
        }
        fields.update(overrides)
        return cls(**fields)


@dataclass(frozen=True)
class ResultRecord:
    """One trained run.  Loss fields are measured on the restored
    best-validation parameters; a non-finite halt leaves nan metrics."""

    spec_name: str
    arch: str
    regularizer: str
    split: int
    seed: int
    test_acc: float
    best_val_acc: float
    task: float
    cent: float
    theta_mm: float
    total: float
    energy: float
    epochs: int
    halt_reason: str


@dataclass(frozen=True)
class AggregateRecord:
    spec_name: str
    arch: str
    regularizer: str
    n_runs: int
    halt_count: int
    mean_test: float
    std_test: float
    mean_val: float
    n_parameters: int
    formatted: str


@dataclass(frozen=True)
class DepthRow:
    depth: int
    mean_test: float
    std_test: float
    halt_count: int


def format_mean_std(mean: float, std: float) -> str:
    """Percent with two decimals: ``80.00 ± 5.01``."""
    if not np.isfinite(mean):
        return "n/a"
    return f"{100.0 * mean:.2f} ± {100.0 * std:.2f}"


def _cell_seed(master: int, spec_index: int, split: int, seed: int) -> int:
    ss = np.random.SeedSequence([master, spec_index, split, seed])
    return int(ss.generate_state(1)[0])


def _run_cell(
    spec: ExperimentSpec,
    bundle: DatasetBundle,
    config: TrainConfig,
    split_index: int,
    seed: int,
    cell_seed: int,
) -> tuple[ResultRecord, SheafModel]:
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
        identity_maps=spec.identity_maps,
        seed=cell_seed,
    )
    run_config = replace(config, seed=cell_seed, freeze_maps=spec.freeze_maps)
    result = train(model, bundle, run_config, split_index=split_index)
    split = bundle.splits[split_index]

    if result.halt_reason == "nonfinite":
        test_acc = best_val = task = cent = theta_mm = total = energy = float("nan")
    else:
        test_acc = evaluate(model, bundle.features, bundle.labels, split.test)
        best_val = max(rec.val_acc for rec in result.history)
        final = model.loss(bundle.features, bundle.labels, split.train)
        task, cent, theta_mm, total = final.task, final.cent, final.theta_mm, final.total
        energy = dirichlet_energy(
            model.sheaf(), model.diffused_features(bundle.features)
        )
    record = ResultRecord(
        spec_name=spec.name,
        arch=spec.arch,
        regularizer=spec.regularizer,
        split=split_index,
        seed=seed,
        test_acc=test_acc,
        best_val_acc=best_val,
        task=task,
        cent=cent,
        theta_mm=theta_mm,
        total=total,
        energy=energy,
        epochs=len(result.history),
        halt_reason=result.halt_reason,
    )
    return record, model


def _aggregate(
    spec: ExperimentSpec, records: list[ResultRecord], n_params: int
) -> AggregateRecord:
    tests = np.array([r.test_acc for r in records], dtype=float)
    vals = np.array([r.best_val_acc for r in records], dtype=float)
    finite = np.isfinite(tests)
    halt_count = int(np.sum(~finite))
    if finite.any():
        mean_test = float(tests[finite].mean())
        std_test = float(tests[finite].std())  # population spread across runs
        mean_val = float(vals[finite].mean())
    else:
        mean_test = std_test = mean_val = float("nan")
    return AggregateRecord(
        spec_name=spec.name,
        arch=spec.arch,
        regularizer=spec.regularizer,
        n_runs=len(records),
        halt_count=halt_count,
        mean_test=mean_test,
        std_test=std_test,
        mean_val=mean_val,
        n_parameters=n_params,
        formatted=format_mean_std(mean_test, std_test),
    )


def run_grid(
    specs: list[ExperimentSpec],
    bundle: DatasetBundle,
    config: TrainConfig,
) -> tuple[list[ResultRecord], list[AggregateRecord]]:
    """Train every (spec, split, seed) cell and aggregate per spec.

    Non-finite runs are recorded and skipped in the averages; the grid
    never aborts on one.
    """
    if not specs:
        raise PreconditionError("empty spec list")
    if not bundle.splits:
        raise PreconditionError("dataset bundle has no splits")
    records: list[ResultRecord] = []
    aggregates: list[AggregateRecord] = []
    for spec_index, spec in enumerate(specs):
        spec_records = []
        n_params = 0
        for split_index in range(len(bundle.splits)):
            for seed in spec.seeds:
                record, model = _run_cell(
                    spec, bundle, config, split_index, seed,
                    _cell_seed(config.seed, spec_index, split_index, seed),
                )
                n_params = count_parameters(model)
                spec_records.append(record)
        records.extend(spec_records)
        aggregates.append(_aggregate(spec, spec_records, n_params))
    return records, aggregates


def run_depth_ablation(
    spec: ExperimentSpec,
    bundle: DatasetBundle,
    depths: list[int],
    config: TrainConfig,
) -> tuple[list[ResultRecord], list[DepthRow]]:
    """One grid row per depth; a non-finite halt at any depth is counted
    and the sweep moves on."""
    if list(depths) != sorted(depths):
        raise PreconditionError("depths must be sorted ascending")
    if not depths:
        raise PreconditionError("empty depth list")
    records: list[ResultRecord] = []
    rows: list[DepthRow] = []
    for depth in depths:
        depth_spec = replace(spec, layers=int(depth), name=f"{spec.name}/L{depth}")
        depth_records, _ = run_grid([depth_spec], bundle, config)
        records.extend(depth_records)
        tests = np.array([r.test_acc for r in depth_records], dtype=float)
        finite = np.isfinite(tests)
        rows.append(
            DepthRow(
                depth=int(depth),
                mean_test=float(tests[finite].mean()) if finite.any() else float("nan"),
                std_test=float(tests[finite].std()) if finite.any() else float("nan"),
                halt_count=int(np.sum(~finite)),
            )
        )
    return records, rows


def matched_square_control(
    rect: ExperimentSpec, bundle: DatasetBundle
) -> ExperimentSpec:
    """Square-architecture spec sized to the rectangular spec's parameter
    count.

    A square model at the same stalk width spends more scalars on maps,
    so the hidden width is re-solved to bring the totals as close as the
    integer grid allows.
    """
    if rect.d_v == rect.d_e:
        raise PreconditionError("control is only meaningful for a rectangular spec")
    n_edges = bundle.graph.n_edges
    n_obj = bundle.graph.n_vertices + n_edges
    f, c = bundle.n_features, bundle.n_classes

    def param_count(d_v: int, d_e: int, hidden: int, with_theta: bool) -> int:
        maps = 2 * n_edges * d_e * d_v
        theta = n_obj if with_theta else 0
        return maps + theta + f * hidden + d_v * hidden * c + c

    target = param_count(rect.d_v, rect.d_e, rect.hidden, rect.lambda_theta > 0)
    s = rect.d_v

    def square_params(hidden: int) -> int:
        return param_count(s, s, hidden, False)

    best_h = max(
        1,
        min(
            range(1, 4 * rect.hidden + 2),
            key=lambda hh: abs(square_params(hh) - target),
        ),
    )
    return replace(
        rect,
        name=f"square-{s}x{s}/matched",
        d_e=s,
        regularizer="none",
        lambda_mu=0.0,
        lambda_theta=0.0,
        hidden=best_h,
    )


def frozen_identity_baseline(
    d: int = 3, layers: int = 32, hidden: int = 8, seeds: tuple[int, ...] = (0,)
) -> ExperimentSpec:
    """Square identity maps, frozen: a deep classical-diffusion baseline
    that can only oversmooth."""
    return ExperimentSpec(
        name=f"identity-{d}x{d}/frozen-L{layers}",
        d_v=d,
        d_e=d,
        regularizer="none",
        lambda_mu=0.0,
        lambda_theta=0.0,
        layers=layers,
        hidden=hidden,
        identity_maps=True,
        freeze_maps=True,
        seeds=seeds,
    )


# --- emission --------------------------------------------------------------

_RECORD_FIELDS = [
    "spec_name",
    "arch",
    "regularizer",
    "split",
    "seed",
    "test_acc",
    "best_val_acc",
    "task",
    "cent",
    "theta_mm",
    "total",
    "energy",
    "epochs",
    "halt_reason",
]
_FLOAT_FIELDS = {
    "test_acc",
    "best_val_acc",
    "task",
    "cent",
    "theta_mm",
    "total",
    "energy",
}


def _sig6(x: float) -> float:
    return float(f"{float(x):.6g}")


def emit_results(
    records: list[ResultRecord],
    fmt: str,
    path,
    config: TrainConfig | None = None,
    aggregates: list[AggregateRecord] | None = None,
) -> None:
    """Write run records with a stable column order and floats at six
    significant digits.  JSON output also echoes the training config and
    any aggregates for reproducibility."""
    if not records:
        raise PreconditionError("no records to emit")
    path = str(path)
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_RECORD_FIELDS)
            for r in records:
                row = []
                for name in _RECORD_FIELDS:
                    value = getattr(r, name)
                    row.append(f"{value:.6g}" if name in _FLOAT_FIELDS else value)
                writer.writerow(row)
    elif fmt == "json":
        obj: dict = {
            "records": [
                {
                    name: (
                        _sig6(getattr(r, name))
                        if name in _FLOAT_FIELDS
                        else getattr(r, name)
                    )
                    for name in _RECORD_FIELDS
                }
                for r in records
            ]
        }
        if config is not None:
            obj["config"] = {
                "lr": config.lr,
                "weight_decay": config.weight_decay,
                "max_epochs": config.max_epochs,
                "patience": config.patience,
                "seed": config.seed,
                "beta1": config.beta1,
                "beta2": config.beta2,
                "eps": config.eps,
            }
        if aggregates is not None:
            obj["aggregates"] = [
                {
                    "spec_name": a.spec_name,
                    "arch": a.arch,
                    "regularizer": a.regularizer,
                    "n_runs": a.n_runs,
                    "halt_count": a.halt_count,
                    "mean_test": _sig6(a.mean_test),
                    "std_test": _sig6(a.std_test),
                    "mean_val": _sig6(a.mean_val),
                    "n_parameters": a.n_parameters,
                    "formatted": a.formatted,
                }
                for a in aggregates
            ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, allow_nan=True)
            fh.write("\n")
    else:
        raise PreconditionError(f"unknown format {fmt!r}; use csv or json")


def parse_results(path, fmt: str | None = None) -> list[ResultRecord]:
    """Read records back from emit_results output."""
    path = str(path)
    if fmt is None:
        fmt = "json" if path.endswith(".json") else "csv"
    try:
        if fmt == "csv":
            with open(path, "r", encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                raw_rows = list(reader)
        else:
            with open(path, "r", encoding="utf-8") as fh:
                raw_rows = json.load(fh)["records"]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise ParseError(f"{path}: malformed results file: {exc}") from exc
    records = []
    for row in raw_rows:
        try:
            records.append(
                ResultRecord(
                    spec_name=str(row["spec_name"]),
                    arch=str(row["arch"]),
                    regularizer=str(row["regularizer"]),
                    split=int(row["split"]),
                    seed=int(row["seed"]),
                    test_acc=float(row["test_acc"]),
                    best_val_acc=float(row["best_val_acc"]),
                    task=float(row["task"]),
                    cent=float(row["cent"]),
                    theta_mm=float(row["theta_mm"]),
                    total=float(row["total"]),
                    energy=float(row["energy"]),
                    epochs=int(row["epochs"]),
                    halt_reason=str(row["halt_reason"]),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"{path}: bad record {row!r}: {exc}") from None
    return records


def write_aggregate_csv(aggregates: list[AggregateRecord], path) -> None:
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "spec_name",
                "arch",
                "regularizer",
                "n_runs",
                "halt_count",
                "mean_test",
                "std_test",
                "mean_val",
                "n_parameters",
                "formatted",
            ]
        )
        for a in aggregates:
            writer.writerow(
                [
                    a.spec_name,
                    a.arch,
                    a.regularizer,
                    a.n_runs,
                    a.halt_count,
                    f"{a.mean_test:.6g}",
                    f"{a.std_test:.6g}",
                    f"{a.mean_val:.6g}",
                    a.n_parameters,
                    a.formatted,
                ]
            )


def write_depth_csv(rows: list[DepthRow], path) -> None:
    """Columns: depth, mean_test, std_test, halt_count."""
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth", "mean_test", "std_test", "halt_count"])
        for row in rows:
            writer.writerow(
                [row.depth, f"{row.mean_test:.6g}", f"{row.std_test:.6g}", row.halt_count]
            )
