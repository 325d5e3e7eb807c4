"""Heat flow under the sheaf Laplacian: exact spectral evolution, the
explicit Euler layer model, and an oversmoothing probe for the limit.

The spectral path reuses the coboundary SVD that defines the section
space, so "diffuse forever" and "project onto sections" are the same
factorization and cannot disagree about rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, PreconditionError
from .sheaves import (
    NULLSPACE_RTOL,
    CellularSheaf,
    find_trivial_lines,
    sheaf_laplacian,
)
from .harmonic import (
    coboundary_singular_values,
    coboundary_svd,
    kernel_basis,
    harmonic_projection,
)

__all__ = [
    "DiffusionConfig",
    "DiffusionReport",
    "OversmoothingReport",
    "spectral_gap",
    "default_alpha",
    "spectral_diffuse",
    "euler_diffuse",
    "oversmoothing_probe",
]


@dataclass(frozen=True)
class DiffusionConfig:
    """Settings for one diffusion run.

    mode "spectral" uses the exact flow at time t; mode "euler" iterates
    x <- x - alpha * Lap x for ``layers`` steps.
    """

    mode: str = "euler"
    alpha: float = 0.0
    layers: int = 1
    t: float = 0.0
    energy_trace: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("spectral", "euler"):
            raise PreconditionError(f"unknown diffusion mode {self.mode!r}")
        if self.mode == "euler":
            if not (self.alpha > 0.0 and np.isfinite(self.alpha)):
                raise PreconditionError("euler mode needs a positive finite alpha")
            if self.layers < 1:
                raise PreconditionError("euler mode needs at least one layer")
        else:
            if not (self.t >= 0.0):
                raise PreconditionError("spectral mode needs t >= 0")


@dataclass(frozen=True, eq=False)
class DiffusionReport:
    """Outcome of a layered run.  ``energy_trace`` pairs (step, energy)
    stop at the last finite state; a non-finite state is still returned
    as ``final`` with its step recorded in ``nonfinite_at``."""

    final: np.ndarray
    energy_trace: tuple[tuple[int, float], ...]
    converged: bool
    nonfinite_at: int | None


def spectral_gap(sheaf: CellularSheaf) -> tuple[int, float, float]:
    """(h, lambda_plus, lambda_max) of the Laplacian via the coboundary SVD.

    lambda_plus is the smallest eigenvalue above the nullspace cutoff, 0.0
    when no positive modes exist; lambda_max is the largest eigenvalue.
    """
    s = coboundary_singular_values(sheaf)
    n0 = sheaf.dims.n0
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return n0, 0.0, 0.0
    cutoff = NULLSPACE_RTOL * smax
    nonnull = s[s > cutoff]
    h = n0 - nonnull.size
    lam_plus = float(nonnull[-1] ** 2) if nonnull.size else 0.0
    return h, lam_plus, float(smax ** 2)


def default_alpha(sheaf: CellularSheaf) -> float:
    """1 / lambda_max, the step that keeps every Euler mode contractive;
    1.0 when the Laplacian vanishes."""
    _, _, lam_max = spectral_gap(sheaf)
    return 1.0 if lam_max == 0.0 else 1.0 / lam_max


def spectral_diffuse(sheaf: CellularSheaf, x0: np.ndarray, t: float) -> np.ndarray:
    """Exact solution of x' = -Lap x at time t.

    Decomposes x0 in the right singular basis of the coboundary and
    scales mode i by exp(-t sigma_i^2).  t = 0 returns a copy of x0.
    """
    if not (t >= 0.0):
        raise PreconditionError("diffusion time must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[0] != sheaf.dims.n0:
        raise PreconditionError(
            f"signal has {x0.shape[0]} rows, expected {sheaf.dims.n0}"
        )
    if t == 0.0:
        return x0.copy()
    s, vt = coboundary_svd(sheaf)
    lam = np.zeros(vt.shape[0])
    lam[: s.size] = s ** 2
    coeffs = vt @ x0
    decay = np.exp(-t * lam)
    if coeffs.ndim > 1:
        decay = decay[:, None]
    return vt.T @ (decay * coeffs)


def euler_diffuse(
    sheaf: CellularSheaf, x0: np.ndarray, config: DiffusionConfig
) -> DiffusionReport:
    """Iterate x <- x - alpha * Lap x for ``config.layers`` steps.

    A non-finite state halts the iteration and is reported, not raised;
    the energy trace ends at the last finite state.  ``converged`` means
    the run stayed finite and did not raise the energy.
    """
    if config.mode != "euler":
        raise PreconditionError("euler_diffuse requires an euler-mode config")
    x = np.array(x0, dtype=float)
    if x.shape[0] != sheaf.dims.n0:
        raise PreconditionError(
            f"signal has {x.shape[0]} rows, expected {sheaf.dims.n0}"
        )
    lap = sheaf_laplacian(sheaf)
    trace: list[tuple[int, float]] = []
    nonfinite_at: int | None = None
    first_energy = last_energy = None
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(config.layers + 1):
            if not np.isfinite(x).all():
                nonfinite_at = step
                break
            y = lap @ x
            energy = max(float(np.sum(x * y)), 0.0)
            if not np.isfinite(energy):
                # x finite but the quadratic form overflowed
                nonfinite_at = step
                break
            if config.energy_trace:
                trace.append((step, energy))
            if first_energy is None:
                first_energy = energy
            last_energy = energy
            if step == config.layers:
                break
            x = x - config.alpha * y
    converged = (
        nonfinite_at is None
        and first_energy is not None
        and last_energy <= first_energy * (1.0 + 1e-12) + 1e-300
    )
    return DiffusionReport(
        final=x,
        energy_trace=tuple(trace),
        converged=converged,
        nonfinite_at=nonfinite_at,
    )


@dataclass(frozen=True, eq=False)
class OversmoothingReport:
    """What survives infinite diffusion and how informative it is.

    ``residual_to_constant`` is the distance from the limit to the best
    vertex-wise constant signal; it is None when vertex stalks differ in
    dimension (no shared coordinate system to be constant in).
    ``trivial_line_residual`` measures distance to the span of
    constant-coefficient signals along detected compatible lines, None
    when no line exists.
    """

    limit: np.ndarray
    h: int
    limit_norm: float
    residual_to_constant: float | None
    trivial_line_residual: float | None
    status: str


def oversmoothing_probe(sheaf: CellularSheaf, x0: np.ndarray) -> OversmoothingReport:
    """Project x0 onto the section space and classify the limit.

    status is "sections-vanish" when the section space is zero,
    "constant-limit" when the limit is (numerically) a vertex-wise
    constant signal, and "structured-limit" otherwise.
    """
    basis = kernel_basis(sheaf)
    x0 = np.asarray(x0, dtype=float)
    limit = harmonic_projection(basis, x0)
    d = sheaf.dims
    nv = len(d.d_v)

    residual_const: float | None
    if len(set(d.d_v)) == 1:
        stalks = limit.reshape(nv, d.d_v[0], -1)
        mean = stalks.mean(axis=0, keepdims=True)
        residual_const = float(np.linalg.norm(stalks - mean))
    else:
        residual_const = None

    lines = find_trivial_lines(sheaf)
    trivial_resid: float | None = None
    if lines.count > 0:
        cols = []
        for j in range(lines.count):
            w = lines.vertex_part(j)
            if np.linalg.norm(w) > 1e-12:
                cols.append(w)
        if cols:
            q, _ = np.linalg.qr(np.column_stack(cols))
            flat = limit.reshape(d.n0, -1)
            trivial_resid = float(np.linalg.norm(flat - q @ (q.T @ flat)))

    if basis.h == 0:
        status = "sections-vanish"
    elif residual_const is not None and residual_const <= 1e-8:
        status = "constant-limit"
    else:
        status = "structured-limit"
    return OversmoothingReport(
        limit=limit,
        h=basis.h,
        limit_norm=float(np.linalg.norm(limit)),
        residual_to_constant=residual_const,
        trivial_line_residual=trivial_resid,
        status=status,
    )
