"""Global sections: kernel bases, harmonic projection, and executable
checks that kernels add over direct sums and that subrepresentation
sections inject into the ambient harmonic space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BorderlineRankWarning, NumericError, PreconditionError, StructuralError
from .graphs import DimensionVector
from .sheaves import (
    NULLSPACE_RTOL,
    CellularSheaf,
    Subrepresentation,
    _orth,
    coboundary_matrix,
    direct_sum,
    direct_sum_embedding_indices,
    verify_subrepresentation,
)

__all__ = [
    "HarmonicBasis",
    "KernelDecompositionReport",
    "HarmonicInjectionReport",
    "kernel_basis",
    "harmonic_projection",
    "coboundary_svd",
    "coboundary_singular_values",
    "principal_angles",
    "max_principal_angle",
    "restricted_sheaf",
    "verify_kernel_decomposition",
    "verify_harmonic_injection",
]


def coboundary_svd(sheaf: CellularSheaf) -> tuple[np.ndarray, np.ndarray]:
    """Full SVD factors (singular values, V^T) of the coboundary.

    V^T always has all N0 rows, so rows beyond the singular-value count
    are exact nullspace directions.  Shared by the kernel and the
    spectral diffusion so their rank decisions can never disagree.
    """
    delta = coboundary_matrix(sheaf)
    if not np.isfinite(delta).all():
        raise NumericError("coboundary has non-finite entries")
    try:
        _, s, vt = np.linalg.svd(delta, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular value decomposition failed: {exc}") from exc
    return s, vt


def coboundary_singular_values(sheaf: CellularSheaf) -> np.ndarray:
    """Singular values of the coboundary, without the basis factors.

    Cheaper than coboundary_svd; same matrix, so thresholds applied to
    these values agree with the full factorization.
    """
    delta = coboundary_matrix(sheaf)
    if not np.isfinite(delta).all():
        raise NumericError("coboundary has non-finite entries")
    try:
        return np.linalg.svd(delta, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular value decomposition failed: {exc}") from exc


def _null_mask(s: np.ndarray, n_rows: int, rtol: float) -> np.ndarray:
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return np.ones(n_rows, dtype=bool)
    cutoff = rtol * smax
    borderline = int(np.sum((s > cutoff) & (s <= 10.0 * cutoff)))
    if borderline:
        warnings.warn(
            f"{borderline} singular value(s) within 10x of the nullspace "
            f"cutoff {cutoff:.3e}; kernel dimension is borderline",
            BorderlineRankWarning,
            stacklevel=3,
        )
    return np.concatenate([s <= cutoff, np.ones(n_rows - s.size, dtype=bool)])


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    """Orthonormal columns spanning the numerical nullspace of the
    coboundary, together with the cutoff that produced them."""

    basis: np.ndarray
    rtol: float
    sigma_max: float

    @property
    def h(self) -> int:
        return self.basis.shape[1]


def kernel_basis(sheaf: CellularSheaf, rtol: float = NULLSPACE_RTOL) -> HarmonicBasis:
    """Orthonormal basis of the space of global sections.

    Nullspace cutoff is rtol relative to the largest singular value of
    the coboundary; values within 10x of the cutoff trigger a
    BorderlineRankWarning because the dimension is then not certifiable.
    """
    s, vt = coboundary_svd(sheaf)
    mask = _null_mask(s, vt.shape[0], rtol)
    basis = np.ascontiguousarray(vt[mask].T)
    return HarmonicBasis(basis=basis, rtol=rtol, sigma_max=float(s[0]) if s.size else 0.0)


def harmonic_projection(basis: HarmonicBasis, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection B B^T x onto the section space; idempotent."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != basis.basis.shape[0]:
        raise PreconditionError(
            f"signal has {x.shape[0]} rows, basis lives in dimension {basis.basis.shape[0]}"
        )
    b = basis.basis
    return b @ (b.T @ x)


# --- subspace comparison ---------------------------------------------------


def principal_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Principal angles between col(a) and col(b), descending, in radians.

    Uses the sine form arcsin(sigma((I - Q_b Q_b^T) Q_a)) with the smaller
    subspace first; the cosine form loses small angles to rounding.
    """
    qa = _orth(np.asarray(a, dtype=float), "first subspace")
    qb = _orth(np.asarray(b, dtype=float), "second subspace")
    if qa.shape[0] != qb.shape[0]:
        raise StructuralError("subspaces live in different ambient dimensions")
    if qa.shape[1] > qb.shape[1]:
        qa, qb = qb, qa
    if qa.shape[1] == 0:
        return np.zeros(0)
    resid = qa - qb @ (qb.T @ qa)
    sines = np.linalg.svd(resid, compute_uv=False)
    return np.arcsin(np.clip(sines, 0.0, 1.0))


def max_principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    ang = principal_angles(a, b)
    return float(ang[0]) if ang.size else 0.0


# --- decomposition and injection checks ------------------------------------


@dataclass(frozen=True)
class KernelDecompositionReport:
    h_f: int
    h_g: int
    h_sum: int
    additive: bool
    max_angle: float
    ok: bool


def verify_kernel_decomposition(
    f: CellularSheaf, g: CellularSheaf, angle_tol: float = 1e-8
) -> KernelDecompositionReport:
    """Certify that sections of a direct sum are exactly the interleaved
    sections of the summands.

    Checks dimension additivity and that the embedded basis(f) + basis(g)
    spans the same subspace as the computed kernel of the sum.
    """
    if f.graph != g.graph:
        raise StructuralError("kernel decomposition requires a shared graph")
    bf = kernel_basis(f)
    bg = kernel_basis(g)
    total = direct_sum(f, g)
    bs = kernel_basis(total)

    idx_f, idx_g = direct_sum_embedding_indices(f.dims, g.dims)
    embedded = np.zeros((total.dims.n0, bf.h + bg.h))
    embedded[idx_f, : bf.h] = bf.basis
    embedded[idx_g, bf.h :] = bg.basis

    additive = bs.h == bf.h + bg.h
    if additive and bs.h > 0:
        angle = max_principal_angle(embedded, bs.basis)
    elif additive:
        angle = 0.0
    else:
        angle = float("inf")
    return KernelDecompositionReport(
        h_f=bf.h,
        h_g=bg.h,
        h_sum=bs.h,
        additive=additive,
        max_angle=angle,
        ok=additive and angle <= angle_tol,
    )


def restricted_sheaf(
    sheaf: CellularSheaf, sub: Subrepresentation
) -> tuple[CellularSheaf, list[np.ndarray], list[np.ndarray]]:
    """The sheaf induced on a subrepresentation's subspaces.

    Bases are orthonormalized; each restriction map becomes
    Q_e^T A Q_v in the new coordinates.  Returns the small sheaf plus the
    per-object orthonormal bases used to embed it back.
    """
    d = sheaf.dims
    for i, w in enumerate(sub.w_v):
        if w.shape[1] == 0:
            raise PreconditionError(f"vertex {i}: zero subspace cannot carry a sheaf")
    for e, w in enumerate(sub.w_e):
        if w.shape[1] == 0:
            raise PreconditionError(f"edge {e}: zero subspace cannot carry a sheaf")
    q_v = [_orth(w, f"vertex basis {i}") for i, w in enumerate(sub.w_v)]
    q_e = [_orth(w, f"edge basis {e}") for e, w in enumerate(sub.w_e)]
    small_dims = DimensionVector(
        d_v=tuple(q.shape[1] for q in q_v),
        d_e=tuple(q.shape[1] for q in q_e),
    )
    pairs = []
    for e, (u, v) in enumerate(sheaf.graph.edges):
        a_u, a_v = sheaf.maps[e]
        pairs.append((q_e[e].T @ a_u @ q_v[u], q_e[e].T @ a_v @ q_v[v]))
    small = CellularSheaf(graph=sheaf.graph, dims=small_dims, maps=tuple(pairs))
    return small, q_v, q_e


@dataclass(frozen=True, eq=False)
class HarmonicInjectionReport:
    h_sub: int
    h_full: int
    residual: float
    min_singular: float
    max_angle_to_kernel: float
    embedded: np.ndarray
    ok: bool


def verify_harmonic_injection(
    sheaf: CellularSheaf,
    sub: Subrepresentation,
    tol: float = 1e-8,
) -> HarmonicInjectionReport:
    """Compute the sections of a certified subrepresentation and certify
    that they embed into the ambient section space.

    The embedded sections must lie in the kernel of the ambient
    coboundary (residual relative to its operator norm) and stay full
    column rank.  Refuses subrepresentations that fail certification.
    """
    cert = verify_subrepresentation(sheaf, sub, tol=tol)
    if not cert.certified:
        raise PreconditionError(
            f"subrepresentation is not certified (worst residual "
            f"{cert.worst_residual:.3e} at {cert.worst_incidence})"
        )
    small, q_v, _ = restricted_sheaf(sheaf, sub)
    sub_basis = kernel_basis(small)
    full_basis = kernel_basis(sheaf)

    d = sheaf.dims
    embedded = np.zeros((d.n0, sub_basis.h))
    for i in range(len(d.d_v)):
        embedded[d.vertex_slice(i)] = q_v[i] @ sub_basis.basis[small.dims.vertex_slice(i)]

    if sub_basis.h == 0:
        return HarmonicInjectionReport(
            h_sub=0,
            h_full=full_basis.h,
            residual=0.0,
            min_singular=1.0,
            max_angle_to_kernel=0.0,
            embedded=embedded,
            ok=True,
        )

    delta = coboundary_matrix(sheaf)
    smax = float(np.linalg.norm(delta, 2)) if delta.size else 0.0
    residual = float(np.linalg.norm(delta @ embedded) / max(1.0, smax))
    sv = np.linalg.svd(embedded, compute_uv=False)
    min_singular = float(sv[-1])
    if full_basis.h >= sub_basis.h and full_basis.h > 0:
        angle = max_principal_angle(embedded, full_basis.basis)
    else:
        angle = float("inf")
    ok = residual <= tol and min_singular >= 1.0 - 1e-8 and sub_basis.h <= full_basis.h
    return HarmonicInjectionReport(
        h_sub=sub_basis.h,
        h_full=full_basis.h,
        residual=residual,
        min_singular=min_singular,
        max_angle_to_kernel=angle,
        embedded=embedded,
        ok=ok,
    )
