"""Moment maps of the incidence-quiver action, balance penalties, stability
parameters, and the equal-stalk wall diagnostic.

Sign convention, fixed and not configurable: vertex components are the
negative sums -sum A^T A over incident edges (vertices only send arrows
out), edge components the positive sums +sum A A^T (edges only receive),
and a destabilizing subrepresentation has strictly negative theta-weight.
Trace balance sum_i tr(mu_i) = 0 then holds identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, StructuralError
from .graphs import DimensionVector
from .sheaves import CellularSheaf, Subrepresentation, verify_subrepresentation

__all__ = [
    "MomentMapValue",
    "ThetaVector",
    "WallReport",
    "KingVerdict",
    "KingReport",
    "moment_map",
    "cent_mm",
    "cent_mm_value_grad",
    "project_theta",
    "theta_mm",
    "theta_mm_value_grad",
    "theta_weight",
    "check_king_semistable",
    "stability_wall_diagnostic",
]

# Weights this close to zero (or closer) do not count as destabilizing.
KING_WEIGHT_TOL = 1e-12
# Admissibility slack for theta . d, relative to |d| |theta|.
ADMISSIBLE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class MomentMapValue:
    """Per-object symmetric matrices mu_i; vertices are negative
    semidefinite, edges positive semidefinite."""

    mu_v: tuple[np.ndarray, ...]
    mu_e: tuple[np.ndarray, ...]

    def traces(self) -> np.ndarray:
        """tr(mu_i) over all objects, vertices first."""
        return np.array(
            [float(np.trace(m)) for m in self.mu_v]
            + [float(np.trace(m)) for m in self.mu_e]
        )

    def all_blocks(self):
        yield from self.mu_v
        yield from self.mu_e


def moment_map(sheaf: CellularSheaf) -> MomentMapValue:
    """mu_v = -sum_{e: v in e} A^T A;  mu_e = sum_{v in e} A A^T.

    Blocks are symmetrized once; the global trace sum vanishes because
    tr(A^T A) = tr(A A^T) incidence by incidence.
    """
    d = sheaf.dims
    mu_v = [np.zeros((k, k)) for k in d.d_v]
    mu_e = [np.zeros((k, k)) for k in d.d_e]
    for v, e, a in sheaf.incidence_maps():
        mu_v[v] -= a.T @ a
        mu_e[e] += a @ a.T
    mu_v = tuple((m + m.T) / 2.0 for m in mu_v)
    mu_e = tuple((m + m.T) / 2.0 for m in mu_e)
    return MomentMapValue(mu_v=mu_v, mu_e=mu_e)


def _traceless(m: np.ndarray) -> np.ndarray:
    k = m.shape[0]
    return m - (np.trace(m) / k) * np.eye(k)


def cent_mm(sheaf: CellularSheaf, mu: MomentMapValue | None = None) -> float:
    """Squared Frobenius norm of the traceless part of every mu_i.

    Zero exactly when each block is a scalar multiple of the identity,
    i.e. the representation is balanced without choosing a chamber.
    Pass a precomputed ``mu`` to avoid recomputing the moment map.
    """
    if mu is None:
        mu = moment_map(sheaf)
    return float(sum(np.sum(_traceless(m) ** 2) for m in mu.all_blocks()))


def cent_mm_value_grad(
    sheaf: CellularSheaf, mu: MomentMapValue | None = None
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """cent_mm plus its gradient with respect to every restriction map.

    d/dA of sum_i |traceless(mu_i)|^2 is 4 (C_e A - A C_v) with C_i the
    traceless part of mu_i: the vertex term enters negatively through
    -A^T A, the edge term positively through A A^T.
    """
    if mu is None:
        mu = moment_map(sheaf)
    c_v = [_traceless(m) for m in mu.mu_v]
    c_e = [_traceless(m) for m in mu.mu_e]
    value = float(
        sum(np.sum(c ** 2) for c in c_v) + sum(np.sum(c ** 2) for c in c_e)
    )
    grads = []
    for e, (u, v) in enumerate(sheaf.graph.edges):
        a_u, a_v = sheaf.maps[e]
        g_u = 4.0 * (c_e[e] @ a_u - a_u @ c_v[u])
        g_v = 4.0 * (c_e[e] @ a_v - a_v @ c_v[v])
        grads.append((g_u, g_v))
    return value, grads


# --- stability parameters --------------------------------------------------


@dataclass(frozen=True, eq=False)
class ThetaVector:
    """One scalar per object, vertices first then edges.

    ``admissible`` asserts theta . d = 0 against the stored dimension
    vector; constructing an admissible ThetaVector re-verifies the claim.
    """

    values: np.ndarray
    dims: DimensionVector
    admissible: bool

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.dims.n_objects:
            raise StructuralError(
                f"theta has {vals.size} entries, expected {self.dims.n_objects}"
            )
        if not np.isfinite(vals).all():
            raise StructuralError("theta has non-finite entries")
        if self.admissible:
            d = self.dims.object_dims
            bound = ADMISSIBLE_RTOL * np.linalg.norm(d) * np.linalg.norm(vals)
            if abs(float(d @ vals)) > bound:
                raise StructuralError(
                    f"theta . d = {float(d @ vals):.3e} exceeds the "
                    f"admissibility bound {bound:.3e}"
                )
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def vertex_values(self) -> np.ndarray:
        return self.values[: len(self.dims.d_v)]

    @property
    def edge_values(self) -> np.ndarray:
        return self.values[len(self.dims.d_v) :]

    @classmethod
    def zero(cls, dims: DimensionVector) -> "ThetaVector":
        return cls(values=np.zeros(dims.n_objects), dims=dims, admissible=True)


def project_theta(raw, dims: DimensionVector) -> ThetaVector:
    """Orthogonal projection onto the admissible hyperplane theta . d = 0.

    theta_i = raw_i - (sum_j d_j raw_j / sum_j d_j^2) d_i; idempotent and
    the identity on already-admissible input.
    """
    raw = np.asarray(raw, dtype=float).reshape(-1)
    d = dims.object_dims
    if raw.size != d.size:
        raise StructuralError(f"raw theta has {raw.size} entries, expected {d.size}")
    theta = raw - (float(d @ raw) / float(d @ d)) * d
    return ThetaVector(values=theta, dims=dims, admissible=True)


def _shifted_blocks(
    sheaf: CellularSheaf, theta: ThetaVector, mu: MomentMapValue
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """S_i = mu_i - theta_i I per object, with the admissibility and
    dimension checks shared by the theta_mm entry points."""
    if not theta.admissible:
        raise PreconditionError(
            "theta must be admissible; run project_theta first"
        )
    d = sheaf.dims
    if theta.dims != d:
        raise StructuralError("theta was projected against different dimensions")
    nv = len(d.d_v)
    s_v = [
        mu.mu_v[i] - theta.values[i] * np.eye(d.d_v[i]) for i in range(nv)
    ]
    s_e = [
        mu.mu_e[e] - theta.values[nv + e] * np.eye(d.d_e[e])
        for e in range(len(d.d_e))
    ]
    return s_v, s_e


def theta_mm(
    sheaf: CellularSheaf, theta: ThetaVector, mu: MomentMapValue | None = None
) -> float:
    """Shifted residual sum_i |mu_i - theta_i I|_F^2 for admissible theta."""
    if mu is None:
        mu = moment_map(sheaf)
    s_v, s_e = _shifted_blocks(sheaf, theta, mu)
    return float(
        sum(np.sum(s ** 2) for s in s_v) + sum(np.sum(s ** 2) for s in s_e)
    )


def theta_mm_value_grad(
    sheaf: CellularSheaf, theta: ThetaVector, mu: MomentMapValue | None = None
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Value, map gradients, and theta gradient of the shifted residual.

    With S_i = mu_i - theta_i I: d/dA = 4 (S_e A - A S_v) and
    d/dtheta_i = -2 tr(S_i).  The theta gradient here is with respect to
    the admissible theta itself; chaining through the projection is the
    caller's job.
    """
    if mu is None:
        mu = moment_map(sheaf)
    s_v, s_e = _shifted_blocks(sheaf, theta, mu)
    value = float(
        sum(np.sum(s ** 2) for s in s_v) + sum(np.sum(s ** 2) for s in s_e)
    )
    map_grads = []
    for e, (u, v) in enumerate(sheaf.graph.edges):
        a_u, a_v = sheaf.maps[e]
        g_u = 4.0 * (s_e[e] @ a_u - a_u @ s_v[u])
        g_v = 4.0 * (s_e[e] @ a_v - a_v @ s_v[v])
        map_grads.append((g_u, g_v))
    dtheta = np.array(
        [-2.0 * float(np.trace(s)) for s in s_v]
        + [-2.0 * float(np.trace(s)) for s in s_e]
    )
    return value, map_grads, dtheta


def theta_weight(theta: ThetaVector, sub_dims) -> float:
    """theta . dim F' for a subrepresentation given by per-object ranks.

    ``sub_dims`` may be a Subrepresentation (column counts are used), a
    DimensionVector, or a plain per-object integer sequence ordered
    vertices first.  Ranks must not exceed the ambient dimensions.
    """
    if isinstance(sub_dims, Subrepresentation):
        ranks = np.array(sub_dims.k_v + sub_dims.k_e, dtype=float)
    elif isinstance(sub_dims, DimensionVector):
        ranks = sub_dims.object_dims
    else:
        ranks = np.asarray(sub_dims, dtype=float).reshape(-1)
    ambient = theta.dims.object_dims
    if ranks.size != ambient.size:
        raise StructuralError(
            f"rank vector has {ranks.size} entries, expected {ambient.size}"
        )
    if np.any(ranks < 0) or np.any(ranks > ambient):
        raise PreconditionError("subrepresentation ranks exceed ambient dimensions")
    return float(theta.values @ ranks)


@dataclass(frozen=True)
class KingVerdict:
    weight: float
    violates: bool


@dataclass(frozen=True)
class KingReport:
    verdicts: tuple[KingVerdict, ...]
    ok: bool


def check_king_semistable(
    sheaf: CellularSheaf,
    theta: ThetaVector,
    candidates: list[Subrepresentation],
    cert_tol: float = 1e-8,
) -> KingReport:
    """Weight test over the supplied candidates only.

    A candidate destabilizes when its theta-weight is below
    -KING_WEIGHT_TOL.  Passing says nothing about subrepresentations not
    supplied; this is a refutation tool, not a semistability proof.
    """
    if not theta.admissible:
        raise PreconditionError("theta must be admissible")
    verdicts = []
    for j, cand in enumerate(candidates):
        cert = verify_subrepresentation(sheaf, cand, tol=cert_tol)
        if not cert.certified:
            raise PreconditionError(
                f"candidate {j} is not a certified subrepresentation "
                f"(worst residual {cert.worst_residual:.3e})"
            )
        w = theta_weight(theta, cand)
        verdicts.append(KingVerdict(weight=w, violates=w < -KING_WEIGHT_TOL))
    return KingReport(
        verdicts=tuple(verdicts), ok=not any(v.violates for v in verdicts)
    )


# --- the equal-stalk wall --------------------------------------------------


@dataclass(frozen=True, eq=False)
class WallReport:
    uniform: bool
    forced_trivial_weight_zero: bool
    max_abs_trivial_weight: float
    example_escape_theta: ThetaVector | None
    escape_trivial_weight: float | None


def stability_wall_diagnostic(
    dims: DimensionVector, n_draws: int = 100, seed: int = 0
) -> WallReport:
    """Probe whether admissible parameters can assign the all-lines
    subrepresentation a negative weight.

    With equal stalk dimensions everywhere the weight of that
    subrepresentation is forced to zero for every admissible theta (the
    wall); this is verified on random projected draws.  Otherwise an
    explicit unit-norm admissible theta with negative weight is returned:
    the all-ones rank vector projected off the d-hyperplane and negated.
    """
    d = dims.object_dims
    ones = np.ones(dims.n_objects)
    rng = np.random.default_rng(seed)

    max_abs = 0.0
    for _ in range(n_draws):
        theta = project_theta(rng.standard_normal(dims.n_objects), dims)
        max_abs = max(max_abs, abs(float(theta.values @ ones)))

    p = ones - (float(d @ ones) / float(d @ d)) * d
    pnorm = float(np.linalg.norm(p))
    uniform = bool(np.all(d == d[0]))
    if pnorm <= 1e-14:
        # dims proportional to the all-ones vector: every dimension equal
        return WallReport(
            uniform=uniform,
            forced_trivial_weight_zero=True,
            max_abs_trivial_weight=max_abs,
            example_escape_theta=None,
            escape_trivial_weight=None,
        )
    escape = ThetaVector(values=-p / pnorm, dims=dims, admissible=True)
    # theta . ones = -(p . ones)/|p| = -|p| since p is the residual of ones
    weight = theta_weight(escape, np.ones(dims.n_objects, dtype=int))
    return WallReport(
        uniform=uniform,
        forced_trivial_weight_zero=False,
        max_abs_trivial_weight=max_abs,
        example_escape_theta=escape,
        escape_trivial_weight=weight,
    )
