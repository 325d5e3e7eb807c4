"""Executable property suites: each one hammers a theorem-shaped claim
with seeded random instances and reports failures plus the worst
residual seen.

The same suites back the ``verify`` CLI subcommand and the acceptance
tests, so there is exactly one definition of every claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .graphs import DimensionVector, uniform_dims
from .sheaves import (
    CellularSheaf,
    coboundary_matrix,
    dirichlet_energy,
    find_trivial_lines,
)
from .harmonic import (
    kernel_basis,
    harmonic_projection,
    verify_harmonic_injection,
    verify_kernel_decomposition,
)
from .stability import (
    cent_mm,
    moment_map,
    project_theta,
    stability_wall_diagnostic,
    theta_weight,
)
from .diffusion import DiffusionConfig, euler_diffuse, spectral_diffuse, spectral_gap
from .model import SheafModel
from .sampling import (
    cycle_graph,
    path_graph,
    planted_line_sheaf,
    random_connected_graph,
    random_dims,
    random_sheaf,
    summand_subrepresentation,
    _haar_orthogonal,
)

__all__ = ["SuiteReport", "ALL_SUITES", "run_suite", "run_all_suites",
           "finite_difference_grads"]


@dataclass
class SuiteReport:
    property: str
    instances: int
    failures: list[str] = field(default_factory=list)
    max_residual: float = 0.0

    def note(self, residual: float) -> None:
        if np.isfinite(residual):
            self.max_residual = max(self.max_residual, float(residual))

    def fail(self, message: str) -> None:
        self.failures.append(message)

    @property
    def ok(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            "property": self.property,
            "instances": self.instances,
            "failures": list(self.failures),
            "max_residual": self.max_residual,
        }


def suite_kernel_decomposition(seed: int = 0, instances: int = 100) -> SuiteReport:
    """Section spaces add over direct sums, as spaces, not just counts."""
    rng = np.random.default_rng(seed)
    report = SuiteReport("kernel-decomposition", instances)
    for i in range(instances):
        graph = random_connected_graph(rng, 3, 8)
        f = random_sheaf(rng, graph, random_dims(rng, graph, 3))
        g = random_sheaf(rng, graph, random_dims(rng, graph, 3))
        res = verify_kernel_decomposition(f, g)
        report.note(res.max_angle if np.isfinite(res.max_angle) else 0.0)
        if not res.ok:
            report.fail(
                f"instance {i}: h({res.h_f})+h({res.h_g}) vs h_sum={res.h_sum}, "
                f"angle={res.max_angle:.3e}"
            )
    return report


def suite_harmonic_injection(seed: int = 0, instances: int = 50) -> SuiteReport:
    """Certified subrepresentations inject their sections into the
    ambient section space: planted lines and direct-summand coordinates."""
    rng = np.random.default_rng(seed)
    report = SuiteReport("harmonic-injection", instances)
    for i in range(instances):
        graph = random_connected_graph(rng, 3, 7)
        if i % 2 == 0:
            sheaf, sub = planted_line_sheaf(rng, graph)
        else:
            f = random_sheaf(rng, graph, random_dims(rng, graph, 2))
            g = random_sheaf(rng, graph, random_dims(rng, graph, 2))
            sheaf, sub = summand_subrepresentation(f, g)
        res = verify_harmonic_injection(sheaf, sub)
        report.note(res.residual)
        if not res.ok:
            report.fail(
                f"instance {i}: residual={res.residual:.3e}, "
                f"min_sv={res.min_singular:.3e}, h_sub={res.h_sub}, h_full={res.h_full}"
            )
    return report


def suite_trivial_line_collapse(seed: int = 0, instances: int = 30) -> SuiteReport:
    """A planted compatible line is found, contributes exactly the
    one-dimensional constant-coefficient sections, and its signals have
    the collapsed energy sum((c_v - c_u)^2 |w_e|^2)."""
    rng = np.random.default_rng(seed)
    report = SuiteReport("trivial-line-collapse", instances)
    for i in range(instances):
        graph = random_connected_graph(rng, 3, 7)
        sheaf, sub = planted_line_sheaf(rng, graph)
        lines = find_trivial_lines(sheaf)
        usable = [j for j in range(lines.count) if not lines.degenerate[j]]
        if not usable:
            report.fail(f"instance {i}: planted line not detected")
            continue
        # recover the planted line among the solutions
        planted = np.concatenate(
            [w.ravel() for w in sub.w_v] + [w.ravel() for w in sub.w_e]
        )
        planted /= np.linalg.norm(planted)
        proj = lines.basis @ (lines.basis.T @ planted)
        recovery = float(np.linalg.norm(planted - proj))
        report.note(recovery)
        if recovery > 1e-8:
            report.fail(f"instance {i}: planted line missed by {recovery:.3e}")
            continue

        line_sub = lines.line_subrepresentation(usable[0])
        inj = verify_harmonic_injection(sheaf, line_sub)
        if inj.h_sub != 1 or not inj.ok:
            report.fail(
                f"instance {i}: injected section space has dim {inj.h_sub}, ok={inj.ok}"
            )
            continue
        # constant coefficients: embedded section is c * w_v with one c
        y = inj.embedded[:, 0]
        d = sheaf.dims
        coeffs = []
        off_line = 0.0
        for vtx in range(graph.n_vertices):
            w = line_sub.w_v[vtx][:, 0]
            yv = y[d.vertex_slice(vtx)]
            c = float(yv @ w) / float(w @ w)
            off_line = max(off_line, float(np.linalg.norm(yv - c * w)))
            coeffs.append(c)
        spread = float(np.ptp(coeffs))
        report.note(max(off_line, spread))
        if off_line > 1e-8 or spread > 1e-8:
            report.fail(
                f"instance {i}: not constant-coefficient "
                f"(off_line={off_line:.3e}, spread={spread:.3e})"
            )
            continue
        # collapsed energy formula for random coefficients along the line
        c = rng.standard_normal(graph.n_vertices)
        x = np.zeros(d.n0)
        for vtx in range(graph.n_vertices):
            x[d.vertex_slice(vtx)] = c[vtx] * line_sub.w_v[vtx][:, 0]
        predicted = 0.0
        for e, (u, v) in enumerate(graph.edges):
            w_e = line_sub.w_e[e][:, 0]
            predicted += (c[v] - c[u]) ** 2 * float(w_e @ w_e)
        actual = dirichlet_energy(sheaf, x)
        resid = abs(actual - predicted) / max(1.0, abs(predicted))
        report.note(resid)
        if resid > 1e-10:
            report.fail(
                f"instance {i}: energy {actual:.6e} vs collapsed formula "
                f"{predicted:.6e}"
            )
    return report


def suite_moment_identities(seed: int = 0, instances: int = 1000) -> SuiteReport:
    """Trace balance on random sheaves, exact centrality for scaled
    orthogonal maps, and the worked 2x2 oracle."""
    rng = np.random.default_rng(seed)
    report = SuiteReport("moment-identities", instances)
    for i in range(instances):
        graph = random_connected_graph(rng, 2, 6)
        sheaf = random_sheaf(rng, graph, random_dims(rng, graph, 3))
        mu = moment_map(sheaf)
        traces = mu.traces()
        total_mass = float(np.sum(np.abs(traces)))
        resid = abs(float(traces.sum())) / max(1.0, total_mass)
        report.note(resid)
        if resid > 1e-10:
            report.fail(f"instance {i}: trace balance residual {resid:.3e}")
        # per-object trace identities against the map norms
        sq = [0.0] * graph.n_vertices
        for v, e, a in sheaf.incidence_maps():
            sq[v] += float(np.sum(a * a))
        for v in range(graph.n_vertices):
            if abs(float(np.trace(mu.mu_v[v])) + sq[v]) > 1e-12 * max(1.0, sq[v]):
                report.fail(f"instance {i}: vertex {v} trace identity broken")
                break

    # scaled orthogonal maps on a uniform stalk: every block central
    for i in range(20):
        graph = random_connected_graph(rng, 2, 6)
        d = int(rng.integers(1, 4))
        dims = uniform_dims(graph, d)
        pairs = []
        for _ in graph.edges:
            pairs.append(
                tuple(
                    float(rng.uniform(0.3, 2.0)) * _haar_orthogonal(rng, d)
                    for _ in range(2)
                )
            )
        ortho = CellularSheaf(graph=graph, dims=dims, maps=tuple(pairs))
        value = cent_mm(ortho)
        report.note(value)
        if value > 1e-16:
            report.fail(f"orthogonal instance {i}: cent_mm = {value:.3e}")

    # worked single-incidence oracle
    graph = path_graph(2)
    dims = uniform_dims(graph, 2)
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    sheaf = CellularSheaf(
        graph=graph, dims=dims, maps=((a, np.zeros((2, 2))),)
    )
    mu = moment_map(sheaf)
    checks = [
        (mu.mu_v[0], -np.array([[1.0, 2.0], [2.0, 5.0]])),
        (mu.mu_v[1], np.zeros((2, 2))),
        (mu.mu_e[0], np.array([[5.0, 2.0], [2.0, 1.0]])),
    ]
    for got, want in checks:
        if not np.allclose(got, want, atol=1e-12):
            report.fail(f"2x2 oracle mismatch: {got} vs {want}")
    if abs(cent_mm(sheaf) - 32.0) > 1e-10:
        report.fail(f"2x2 oracle cent_mm {cent_mm(sheaf)} != 32")
    return report


def suite_stability_wall(seed: int = 0, instances: int = 100) -> SuiteReport:
    """Equal stalks force the all-lines weight to zero for every
    admissible theta; unequal stalks admit an escape direction."""
    rng = np.random.default_rng(seed)
    report = SuiteReport("stability-wall", instances)

    # uniform wall
    for i in range(instances):
        graph = random_connected_graph(rng, 2, 6)
        d = int(rng.integers(1, 4))
        dims = uniform_dims(graph, d)
        theta = project_theta(rng.standard_normal(dims.n_objects), dims)
        w = theta_weight(theta, np.ones(dims.n_objects, dtype=int))
        resid = abs(w) / max(1.0, float(np.linalg.norm(theta.values)))
        report.note(resid)
        if resid > 1e-12:
            report.fail(f"uniform instance {i}: trivial weight {w:.3e}")

    # rectangular escape on a 4-cycle, unit-norm theta
    dims = uniform_dims(cycle_graph(4), 3, 2)
    diag = stability_wall_diagnostic(dims, seed=seed)
    if diag.forced_trivial_weight_zero or diag.example_escape_theta is None:
        report.fail("rect dims reported as walled")
    else:
        norm = float(np.linalg.norm(diag.example_escape_theta.values))
        if abs(norm - 1.0) > 1e-12:
            report.fail(f"escape theta not unit norm: {norm}")
        if diag.escape_trivial_weight > -0.5:
            report.fail(
                f"escape weight {diag.escape_trivial_weight:.4f} above -0.5"
            )

    # projection: admissible to 1e-12 relative, idempotent to 1e-14
    worst_admis = 0.0
    worst_idem = 0.0
    for _ in range(10_000):
        graph = random_connected_graph(rng, 2, 5)
        dims = random_dims(rng, graph, 4)
        raw = rng.standard_normal(dims.n_objects) * float(rng.uniform(0.1, 10))
        theta = project_theta(raw, dims)
        dvec = dims.object_dims
        denom = max(1e-300, float(np.linalg.norm(dvec)) * float(np.linalg.norm(theta.values)))
        worst_admis = max(worst_admis, abs(float(dvec @ theta.values)) / denom)
        again = project_theta(theta.values, dims)
        scale = max(1.0, float(np.linalg.norm(theta.values)))
        worst_idem = max(
            worst_idem, float(np.linalg.norm(again.values - theta.values)) / scale
        )
    report.note(worst_admis)
    if worst_admis > 1e-12:
        report.fail(f"projection admissibility residual {worst_admis:.3e}")
    if worst_idem > 1e-14:
        report.fail(f"projection not idempotent: {worst_idem:.3e}")
    return report


def suite_diffusion_limit(seed: int = 0, instances: int = 50) -> SuiteReport:
    """Exact flow decays to the harmonic projection no slower than the
    spectral gap predicts; unit-step Euler never raises the energy."""
    rng = np.random.default_rng(seed)
    report = SuiteReport("diffusion-limit", instances)
    for i in range(instances):
        graph = random_connected_graph(rng, 3, 7)
        sheaf = random_sheaf(rng, graph, random_dims(rng, graph, 3))
        x0 = rng.standard_normal(sheaf.dims.n0)
        basis = kernel_basis(sheaf)
        limit = harmonic_projection(basis, x0)
        h, lam_plus, lam_max = spectral_gap(sheaf)
        if lam_plus > 0.0:
            t = float(rng.uniform(0.5, 12.0)) / lam_plus
        else:
            t = 1.0
        xt = spectral_diffuse(sheaf, x0, t)
        bound = np.exp(-t * lam_plus) * float(np.linalg.norm(x0)) * (1.0 + 1e-6)
        dist = float(np.linalg.norm(xt - limit))
        gap = dist - bound
        report.note(max(gap, 0.0))
        if dist > bound + 1e-13:
            report.fail(
                f"instance {i}: distance {dist:.6e} above bound {bound:.6e}"
            )
        if lam_max > 0.0:
            run = euler_diffuse(
                sheaf, x0,
                DiffusionConfig(mode="euler", alpha=1.0 / lam_max, layers=30),
            )
            energies = np.array([e for _, e in run.energy_trace])
            rises = np.diff(energies)
            worst = float(rises.max()) if rises.size else 0.0
            if worst > 1e-10 * max(1.0, energies[0]):
                report.fail(f"instance {i}: energy rose by {worst:.3e}")
    return report


def finite_difference_grads(
    model: SheafModel, features, labels, mask, step: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central finite differences of the total loss for every parameter.

    Mutates each scalar in place and restores it; the model's alpha is a
    stored constant, so this probes exactly what backward differentiates.
    """
    grads = {}
    for name, param in model.parameters().items():
        g = np.zeros_like(param)
        flat = param.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = model.loss(features, labels, mask).total
            flat[idx] = orig - step
            down = model.loss(features, labels, mask).total
            flat[idx] = orig
            gflat[idx] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def suite_gradient_check(seed: int = 0, instances: int = 50) -> SuiteReport:
    """Hand-derived reverse mode against central differences on small
    random configurations.

    Error metric: |analytic - numeric| / max(0.01, |analytic|, |numeric|),
    so near-zero gradients are compared absolutely at the 1e-7 scale the
    difference quotient can actually resolve.
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport("gradient-check", instances)
    regs = [(0.0, 0.0), (2e-3, 0.0), (0.0, 1e-4), (1e-3, 1e-4)]
    for i in range(instances):
        graph = random_connected_graph(rng, 3, 6)
        d_v = int(rng.integers(1, 4))
        dims = DimensionVector(
            d_v=(d_v,) * graph.n_vertices,
            d_e=tuple(int(rng.integers(1, 4)) for _ in range(graph.n_edges)),
        )
        lam_mu, lam_theta = regs[i % len(regs)]
        model = SheafModel.initialize(
            graph,
            dims,
            n_features=int(rng.integers(2, 4)),
            n_classes=2,
            hidden=int(rng.integers(2, 4)),
            layers=int(rng.integers(0, 4)),
            lambda_mu=lam_mu,
            lambda_theta=lam_theta,
            seed=int(rng.integers(0, 2**31)),
        )
        for param in model.parameters().values():
            param[...] = 0.1 * rng.standard_normal(param.shape)
        model.refresh_alpha()
        features = rng.standard_normal((graph.n_vertices, model.encoder.shape[0]))
        labels = rng.integers(0, 2, size=graph.n_vertices)
        n_mask = int(rng.integers(1, graph.n_vertices + 1))
        mask = rng.choice(graph.n_vertices, size=n_mask, replace=False)

        _, analytic = model.loss_and_grads(features, labels, mask)
        numeric = finite_difference_grads(model, features, labels, mask)
        worst = 0.0
        worst_name = ""
        for name in analytic:
            a = analytic[name].ravel()
            f = numeric[name].ravel()
            if a.size == 0:
                continue
            denom = np.maximum(0.01, np.maximum(np.abs(a), np.abs(f)))
            rel = float(np.max(np.abs(a - f) / denom))
            if rel > worst:
                worst, worst_name = rel, name
        report.note(worst)
        if worst > 1e-5:
            report.fail(f"instance {i}: {worst_name} rel error {worst:.3e}")
    return report


ALL_SUITES = {
    "kernel-decomposition": suite_kernel_decomposition,
    "harmonic-injection": suite_harmonic_injection,
    "trivial-line-collapse": suite_trivial_line_collapse,
    "moment-identities": suite_moment_identities,
    "stability-wall": suite_stability_wall,
    "diffusion-limit": suite_diffusion_limit,
    "gradient-check": suite_gradient_check,
}


def run_suite(name: str, seed: int = 0, instances: int | None = None) -> SuiteReport:
    if name not in ALL_SUITES:
        raise PreconditionError(
            f"unknown property {name!r}; choose from {sorted(ALL_SUITES)}"
        )
    fn = ALL_SUITES[name]
    if instances is None:
        return fn(seed=seed)
    return fn(seed=seed, instances=instances)


def run_all_suites(seed: int = 0) -> list[SuiteReport]:
    return [fn(seed=seed) for fn in ALL_SUITES.values()]
