"""Trainable diffusion classifier over a sheaf with free per-incidence
restriction maps.

Computation graph, fixed: encode features, replicate each node's hidden
vector across its stalk coordinates, run L explicit diffusion steps
x <- x - alpha * Lap x, read out per node through one linear layer, and
score with softmax cross-entropy on the labeled nodes.  The balance
penalties act on the raw maps.  Gradients are hand-derived reverse mode
over this graph; the step size alpha is treated as a constant of the
current epoch, never differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, PreconditionError, StructuralError
from .graphs import DimensionVector, Graph
from .sheaves import CellularSheaf, coboundary_matrix, sheaf_laplacian
from .stability import (
    cent_mm_value_grad,
    project_theta,
    theta_mm_value_grad,
)
from .diffusion import spectral_gap

__all__ = ["LossBreakdown", "SheafModel", "count_parameters"]


@dataclass(frozen=True)
class LossBreakdown:
    """Composite objective: task + lambda_mu * cent + lambda_theta * theta_mm."""

    task: float
    cent: float
    theta_mm: float
    total: float

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.total))


class SheafModel:
    """Mutable parameter container plus the forward/backward pair.

    Vertex stalk dimensions must be uniform: the readout is one weight
    matrix shared across nodes, so every node must present the same
    number of stalk coordinates.
    """

    def __init__(
        self,
        graph: Graph,
        dims: DimensionVector,
        maps: list,
        raw_theta: np.ndarray,
        encoder: np.ndarray,
        readout_w: np.ndarray,
        readout_b: np.ndarray,
        *,
        layers: int,
        n_classes: int,
        lambda_mu: float = 0.0,
        lambda_theta: float = 0.0,
        alpha_scale: float = 1.0,
        dropout_p: float = 0.0,
    ):
        if len(set(dims.d_v)) != 1:
            raise StructuralError("readout requires uniform vertex stalk dimensions")
        if layers < 0:
            raise StructuralError("layer count must be >= 0")
        if lambda_mu < 0 or lambda_theta < 0:
            raise StructuralError("penalty weights must be nonnegative")
        if not 0.0 <= dropout_p < 1.0:
            raise StructuralError("dropout probability must be in [0, 1)")
        self.graph = graph
        self.dims = dims
        self.d = dims.d_v[0]
        self.hidden = encoder.shape[1]
        self.n_classes = int(n_classes)
        self.layers = int(layers)
        self.lambda_mu = float(lambda_mu)
        self.lambda_theta = float(lambda_theta)
        self.alpha_scale = float(alpha_scale)
        self.dropout_p = float(dropout_p)

        self.maps = [
            [np.array(pair[0], dtype=float), np.array(pair[1], dtype=float)]
            for pair in maps
        ]
        self.raw_theta = np.array(raw_theta, dtype=float).reshape(-1)
        self.encoder = np.array(encoder, dtype=float)
        self.readout_w = np.array(readout_w, dtype=float)
        self.readout_b = np.array(readout_b, dtype=float).reshape(-1)

        if self.raw_theta.size != dims.n_objects:
            raise StructuralError("raw_theta length must equal the object count")
        if self.readout_w.shape != (self.d * self.hidden, self.n_classes):
            raise StructuralError(
                f"readout weight shape {self.readout_w.shape} does not match "
                f"(d * hidden, classes) = ({self.d * self.hidden}, {self.n_classes})"
            )
        if self.readout_b.shape != (self.n_classes,):
            raise StructuralError("readout bias shape must be (classes,)")
        self.alpha = 1.0
        self.refresh_alpha()

    # --- construction ------------------------------------------------------

    @classmethod
    def initialize(
        cls,
        graph: Graph,
        dims: DimensionVector,
        n_features: int,
        n_classes: int,
        *,
        hidden: int = 8,
        layers: int = 4,
        lambda_mu: float = 0.0,
        lambda_theta: float = 0.0,
        alpha_scale: float = 1.0,
        dropout_p: float = 0.0,
        identity_maps: bool = False,
        seed: int = 0,
    ) -> "SheafModel":
        """Fresh parameters from a seed.

        Maps start near a half-strength identity block with small
        gaussian spread (keeps the top eigenvalue moderate); the encoder
        and readout get 1/sqrt(fan-in) gaussian entries.
        """
        rng = np.random.default_rng(seed)
        maps = []
        for e, (u, v) in enumerate(graph.edges):
            pair = []
            for vertex in (u, v):
                de, dv = dims.d_e[e], dims.d_v[vertex]
                if identity_maps:
                    a = np.eye(de, dv)
                else:
                    std = (dv * de) ** -0.25
                    a = std * rng.standard_normal((de, dv)) + 0.5 * np.eye(de, dv)
                pair.append(a)
            maps.append(pair)
        d = dims.d_v[0]
        encoder = rng.standard_normal((n_features, hidden)) / np.sqrt(n_features)
        readout_w = rng.standard_normal((d * hidden, n_classes)) / np.sqrt(d * hidden)
        return cls(
            graph,
            dims,
            maps,
            raw_theta=np.zeros(dims.n_objects),
            encoder=encoder,
            readout_w=readout_w,
            readout_b=np.zeros(n_classes),
            layers=layers,
            n_classes=n_classes,
            lambda_mu=lambda_mu,
            lambda_theta=lambda_theta,
            alpha_scale=alpha_scale,
            dropout_p=dropout_p,
        )

    def sheaf(self) -> CellularSheaf:
        """Current maps as an immutable sheaf value.

        Raises NumericError when an optimizer step has pushed a map to a
        non-finite value; training treats that as a halt condition.
        """
        for pair in self.maps:
            for a in pair:
                if not np.isfinite(a).all():
                    raise NumericError("restriction maps contain non-finite entries")
        return CellularSheaf(
            graph=self.graph,
            dims=self.dims,
            maps=tuple((p[0], p[1]) for p in self.maps),
        )

    def refresh_alpha(self) -> float:
        """Reset the step to alpha_scale / lambda_max for the current maps.

        Called once per epoch by the trainer, outside the differentiated
        graph; within an epoch alpha is a constant.
        """
        _, _, lam_max = spectral_gap(self.sheaf())
        self.alpha = self.alpha_scale if lam_max == 0.0 else self.alpha_scale / lam_max
        return self.alpha

    # --- parameter access --------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        """Live views of every learnable array, keyed by stable names."""
        params = {}
        for e, pair in enumerate(self.maps):
            params[f"map:{e}:u"] = pair[0]
            params[f"map:{e}:v"] = pair[1]
        params["raw_theta"] = self.raw_theta
        params["encoder"] = self.encoder
        params["readout_w"] = self.readout_w
        params["readout_b"] = self.readout_b
        return params

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(snap.keys()) != set(params.keys()):
            raise StructuralError("snapshot does not match this model's parameters")
        for k, v in params.items():
            np.copyto(v, snap[k])

    # --- forward -----------------------------------------------------------

    def _check_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[0] != self.graph.n_vertices:
            raise StructuralError(
                f"features must be (|V|, f); got {features.shape} for "
                f"{self.graph.n_vertices} vertices"
            )
        if features.shape[1] != self.encoder.shape[0]:
            raise StructuralError(
                f"feature width {features.shape[1]} does not match encoder "
                f"input {self.encoder.shape[0]}"
            )
        return features

    def _forward_cache(self, features: np.ndarray, dropout_rng) -> dict:
        features = self._check_features(features)
        with np.errstate(over="ignore", invalid="ignore"):
            z = features @ self.encoder
            mask = None
            if self.dropout_p > 0.0 and dropout_rng is not None:
                keep = dropout_rng.random(z.shape) >= self.dropout_p
                mask = keep / (1.0 - self.dropout_p)
                z = z * mask
            states = [np.repeat(z, self.d, axis=0)]
            lap = sheaf_laplacian(self.sheaf())
            for _ in range(self.layers):
                x = states[-1]
                states.append(x - self.alpha * (lap @ x))
            flat = states[-1].reshape(self.graph.n_vertices, self.d * self.hidden)
            scores = flat @ self.readout_w + self.readout_b
        return {
            "features": features,
            "z": z,
            "dropout_mask": mask,
            "states": states,
            "lap": lap,
            "flat": flat,
            "scores": scores,
        }

    def forward(self, features: np.ndarray, dropout_rng=None) -> np.ndarray:
        """Class scores per node, (|V|, classes)."""
        return self._forward_cache(features, dropout_rng)["scores"]

    def diffused_features(self, features: np.ndarray) -> np.ndarray:
        """Stalk signal after the diffusion layers, before readout."""
        return self._forward_cache(features, None)["states"][-1]

    @staticmethod
    def _check_mask(mask: np.ndarray, n: int) -> np.ndarray:
        mask = np.asarray(mask)
        if mask.dtype == bool:
            mask = np.flatnonzero(mask)
        mask = mask.astype(np.intp).reshape(-1)
        if mask.size == 0:
            raise PreconditionError("node mask is empty")
        if mask.min() < 0 or mask.max() >= n:
            raise StructuralError("node mask indexes outside the vertex range")
        return mask

    def _task_loss(self, scores, labels, mask):
        """Mean cross-entropy over the masked nodes, with the softmax
        gradient on the score rows."""
        labels = np.asarray(labels).astype(np.intp)
        y = labels[mask]
        if y.min() < 0 or y.max() >= self.n_classes:
            raise StructuralError("label outside the class range")
        logits = scores[mask]
        with np.errstate(over="ignore", invalid="ignore"):
            m = logits.max(axis=1, keepdims=True)
            shifted = logits - m
            logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            logp = shifted - logz
            task = float(-logp[np.arange(y.size), y].mean())
            probs = np.exp(logp)
        dscores = np.zeros_like(scores)
        grad_rows = probs.copy()
        grad_rows[np.arange(y.size), y] -= 1.0
        dscores[mask] = grad_rows / y.size
        return task, dscores

    def loss(
        self, features, labels, mask, dropout_rng=None
    ) -> LossBreakdown:
        cache = self._forward_cache(features, dropout_rng)
        mask = self._check_mask(mask, self.graph.n_vertices)
        task, _ = self._task_loss(cache["scores"], labels, mask)
        return self._assemble_breakdown(task)

    def _assemble_breakdown(self, task: float) -> LossBreakdown:
        sheaf = self.sheaf()
        cent, _ = cent_mm_value_grad(sheaf)
        theta = project_theta(self.raw_theta, self.dims)
        theta_val, _, _ = theta_mm_value_grad(sheaf, theta)
        total = task + self.lambda_mu * cent + self.lambda_theta * theta_val
        return LossBreakdown(
            task=task, cent=cent, theta_mm=theta_val, total=float(total)
        )

    # --- backward ----------------------------------------------------------

    def loss_and_grads(
        self, features, labels, mask, dropout_rng=None
    ) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
        """One combined forward/backward pass.

        Refuses to differentiate a non-finite forward: the gradients
        would be garbage, and the caller needs to treat the event as a
        halt, not a step.
        """
        cache = self._forward_cache(features, dropout_rng)
        mask = self._check_mask(mask, self.graph.n_vertices)
        scores = cache["scores"]
        if not np.isfinite(scores).all():
            raise NumericError(
                "forward pass produced non-finite scores; gradient refused"
            )
        task, dscores = self._task_loss(scores, labels, mask)
        breakdown = self._assemble_breakdown(task)

        d, h = self.d, self.hidden
        nv = self.graph.n_vertices
        states = cache["states"]
        lap = cache["lap"]

        # readout
        dflat = dscores @ self.readout_w.T
        grads = {
            "readout_w": cache["flat"].T @ dscores,
            "readout_b": dscores.sum(axis=0),
        }
        g_state = dflat.reshape(nv * d, h)

        # diffusion layers, newest first; alpha held constant
        dlap = np.zeros_like(lap)
        for k in range(self.layers - 1, -1, -1):
            dlap -= self.alpha * (g_state @ states[k].T)
            g_state = g_state - self.alpha * (lap @ g_state)

        # Laplacian is delta^T delta: chain into the coboundary blocks
        map_grads = [
            [np.zeros_like(pair[0]), np.zeros_like(pair[1])] for pair in self.maps
        ]
        if self.layers > 0:
            delta = coboundary_matrix(self.sheaf())
            ddelta = delta @ (dlap + dlap.T)
            dims = self.dims
            for e, (u, v) in enumerate(self.graph.edges):
                rows = dims.edge_slice(e)
                map_grads[e][0] -= ddelta[rows, dims.vertex_slice(u)]
                map_grads[e][1] += ddelta[rows, dims.vertex_slice(v)]

        # balance penalties act directly on the maps
        if self.lambda_mu > 0.0:
            _, cent_grads = cent_mm_value_grad(self.sheaf())
            for e in range(len(map_grads)):
                map_grads[e][0] += self.lambda_mu * cent_grads[e][0]
                map_grads[e][1] += self.lambda_mu * cent_grads[e][1]
        dtheta_raw = np.zeros_like(self.raw_theta)
        if self.lambda_theta > 0.0:
            theta = project_theta(self.raw_theta, self.dims)
            _, theta_grads, dtheta = theta_mm_value_grad(self.sheaf(), theta)
            for e in range(len(map_grads)):
                map_grads[e][0] += self.lambda_theta * theta_grads[e][0]
                map_grads[e][1] += self.lambda_theta * theta_grads[e][1]
            # chain through the projection: subtract the d-component
            dvec = self.dims.object_dims
            dtheta = self.lambda_theta * dtheta
            dtheta_raw = dtheta - (float(dvec @ dtheta) / float(dvec @ dvec)) * dvec

        # back out of the stalk replication into the encoder
        dz = np.add.reduceat(g_state, np.arange(0, nv * d, d), axis=0)
        if cache["dropout_mask"] is not None:
            dz = dz * cache["dropout_mask"]
        grads["encoder"] = cache["features"].T @ dz
        grads["raw_theta"] = dtheta_raw
        for e in range(len(map_grads)):
            grads[f"map:{e}:u"] = map_grads[e][0]
            grads[f"map:{e}:v"] = map_grads[e][1]
        return breakdown, grads

    def backward(self, features, labels, mask, dropout_rng=None) -> dict[str, np.ndarray]:
        """Gradient of the total loss for every parameter."""
        _, grads = self.loss_and_grads(features, labels, mask, dropout_rng)
        return grads


def count_parameters(model: SheafModel) -> int:
    """Trainable scalar count; raw_theta participates only when its
    penalty is active."""
    total = 0
    for name, arr in model.parameters().items():
        if name == "raw_theta" and model.lambda_theta == 0.0:
            continue
        total += arr.size
    return total
