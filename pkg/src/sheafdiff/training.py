"""Training loop: Adam with weight decay, early stopping on validation
loss, best-epoch restoration, and checkpoint IO.

Per epoch, in order: the step size is refreshed from the current maps,
one gradient step is taken on the training nodes, then validation loss
and accuracy are measured.  Everything is driven by explicit seeds; two
runs with the same inputs produce identical histories.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParseError, PreconditionError, StructuralError
from .datasets import DatasetBundle, Split
from .model import LossBreakdown, SheafModel
from .sheaves import sheaf_from_json_obj, sheaf_to_json_obj

__all__ = [
    "TrainConfig",
    "Adam",
    "EpochRecord",
    "TrainResult",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    "write_history_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-3
    max_epochs: int = 1500
    patience: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    freeze_maps: bool = False

    def __post_init__(self) -> None:
        if self.lr <= 0.0:
            raise StructuralError("learning rate must be positive")
        if self.patience > self.max_epochs:
            raise StructuralError("patience cannot exceed max_epochs")
        if self.patience < 1 or self.max_epochs < 1:
            raise StructuralError("patience and max_epochs must be >= 1")


class Adam:
    """Adam with decoupled-from-nothing weight decay: the decay term is
    added to the gradient before the moment updates.  raw_theta is
    exempt; shrinking it toward zero has no meaning on the admissible
    hyperplane."""

    def __init__(self, config: TrainConfig):
        self.lr = config.lr
        self.weight_decay = config.weight_decay
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if self.weight_decay and name != "raw_theta":
                g = g + self.weight_decay * p
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    breakdown: LossBreakdown
    val_loss: float
    val_acc: float


@dataclass(frozen=True, eq=False)
class TrainResult:
    history: tuple[EpochRecord, ...]
    best_epoch: int
    best_val_loss: float
    halt_reason: str  # "early_stop" | "max_epochs" | "nonfinite"

    @property
    def final_breakdown(self) -> LossBreakdown:
        return self.history[-1].breakdown


def evaluate(model: SheafModel, features, labels, mask) -> float:
    """Fraction of masked nodes whose top score matches the label; score
    ties resolve to the lowest class index."""
    mask = SheafModel._check_mask(mask, model.graph.n_vertices)
    scores = model.forward(features)
    pred = np.argmax(scores[mask], axis=1)
    labels = np.asarray(labels, dtype=np.intp)
    return float(np.mean(pred == labels[mask]))


def train(
    model: SheafModel,
    bundle: DatasetBundle,
    config: TrainConfig,
    split_index: int = 0,
) -> TrainResult:
    """Fit the model on one split and restore the best-validation state.

    Early stopping: strict validation-loss improvement resets the clock;
    the run stops once ``patience`` epochs pass without one, so the last
    epoch is exactly best_epoch + patience.  A non-finite loss or
    parameter halts the run, keeps the partial history, and restores the
    best finite snapshot seen.
    """
    if not bundle.splits:
        raise PreconditionError("dataset bundle has no splits")
    if not 0 <= split_index < len(bundle.splits):
        raise PreconditionError(
            f"split index {split_index} out of range [0, {len(bundle.splits)})"
        )
    split: Split = bundle.splits[split_index]
    features, labels = bundle.features, bundle.labels

    optimizer = Adam(config)
    dropout_rng = np.random.default_rng(config.seed)

    history: list[EpochRecord] = []
    best_val = np.inf
    best_epoch = 0
    best_snap = None
    halt_reason = "max_epochs"

    for epoch in range(1, config.max_epochs + 1):
        try:
            model.refresh_alpha()
            breakdown, grads = model.loss_and_grads(
                features, labels, split.train,
                dropout_rng=dropout_rng if model.dropout_p > 0 else None,
            )
        except NumericError:
            halt_reason = "nonfinite"
            break
        if not breakdown.finite:
            halt_reason = "nonfinite"
            break

        if config.freeze_maps:
            for name in list(grads):
                if name.startswith("map:"):
                    grads[name] = np.zeros_like(grads[name])

        params = model.parameters()
        optimizer.step(params, grads)

        try:
            val_breakdown = model.loss(features, labels, split.val)
            val_loss = val_breakdown.task
            val_acc = evaluate(model, features, labels, split.val)
        except NumericError:
            halt_reason = "nonfinite"
            history.append(
                EpochRecord(epoch=epoch, breakdown=breakdown,
                            val_loss=float("nan"), val_acc=float("nan"))
            )
            break
        history.append(
            EpochRecord(epoch=epoch, breakdown=breakdown,
                        val_loss=val_loss, val_acc=val_acc)
        )
        if np.isfinite(val_loss) and val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_snap = model.snapshot()
        elif not np.isfinite(val_loss):
            halt_reason = "nonfinite"
            break
        if best_epoch and epoch - best_epoch >= config.patience:
            halt_reason = "early_stop"
            break

    if best_snap is not None:
        model.restore(best_snap)
    return TrainResult(
        history=tuple(history),
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        halt_reason=halt_reason,
    )


# --- persistence -----------------------------------------------------------


def save_checkpoint(model: SheafModel, path) -> None:
    """Sheaf JSON extended with the trainable state and hyperparameters."""
    obj = sheaf_to_json_obj(model.sheaf())
    obj["raw_theta"] = [float(x) for x in model.raw_theta]
    obj["encoder"] = {
        "shape": list(model.encoder.shape),
        "data": [float(x) for x in model.encoder.ravel()],
    }
    obj["readout"] = {
        "w_shape": list(model.readout_w.shape),
        "w": [float(x) for x in model.readout_w.ravel()],
        "b": [float(x) for x in model.readout_b],
    }
    obj["config"] = {
        "layers": model.layers,
        "n_classes": model.n_classes,
        "hidden": model.hidden,
        "lambda_mu": model.lambda_mu,
        "lambda_theta": model.lambda_theta,
        "alpha_scale": model.alpha_scale,
        "dropout_p": model.dropout_p,
    }
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_checkpoint(path) -> SheafModel:
    try:
        with open(str(path), "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("raw_theta", "encoder", "readout", "config"):
        if key not in obj:
            raise ParseError(f"checkpoint missing {key!r}")
    sheaf = sheaf_from_json_obj(obj)
    cfg = obj["config"]
    try:
        enc_shape = tuple(obj["encoder"]["shape"])
        encoder = np.asarray(obj["encoder"]["data"], dtype=float).reshape(enc_shape)
        w_shape = tuple(obj["readout"]["w_shape"])
        readout_w = np.asarray(obj["readout"]["w"], dtype=float).reshape(w_shape)
        readout_b = np.asarray(obj["readout"]["b"], dtype=float)
        raw_theta = np.asarray(obj["raw_theta"], dtype=float)
        model = SheafModel(
            sheaf.graph,
            sheaf.dims,
            [list(pair) for pair in sheaf.maps],
            raw_theta=raw_theta,
            encoder=encoder,
            readout_w=readout_w,
            readout_b=readout_b,
            layers=int(cfg["layers"]),
            n_classes=int(cfg["n_classes"]),
            lambda_mu=float(cfg["lambda_mu"]),
            lambda_theta=float(cfg["lambda_theta"]),
            alpha_scale=float(cfg["alpha_scale"]),
            dropout_p=float(cfg.get("dropout_p", 0.0)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"{path}: malformed checkpoint: {exc}") from None
    except StructuralError as exc:
        raise ParseError(f"{path}: inconsistent checkpoint: {exc}") from None
    return model


def write_history_csv(result: TrainResult, path) -> None:
    """Columns: epoch, task, cent, theta_mm, total, val_acc."""
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "task", "cent", "theta_mm", "total", "val_acc"])
        for rec in result.history:
            b = rec.breakdown
            writer.writerow(
                [
                    rec.epoch,
                    f"{b.task:.10g}",
                    f"{b.cent:.10g}",
                    f"{b.theta_mm:.10g}",
                    f"{b.total:.10g}",
                    f"{rec.val_acc:.10g}",
                ]
            )
