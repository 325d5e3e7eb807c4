"""Random instances for property checks: graphs, dimension vectors,
sheaves, gauges, and constructions with planted structure.

Everything takes an explicit numpy Generator; nothing touches global
random state.
"""

from __future__ import annotations

import numpy as np

from .graphs import DimensionVector, GaugeElement, Graph, uniform_dims
from .sheaves import CellularSheaf, Subrepresentation, direct_sum

__all__ = [
    "random_connected_graph",
    "cycle_graph",
    "path_graph",
    "random_dims",
    "random_sheaf",
    "random_orthogonal_gauge",
    "random_gauge",
    "planted_line_sheaf",
    "signed_cycle_sheaf",
    "summand_subrepresentation",
]


def random_connected_graph(
    rng: np.random.Generator,
    n_min: int = 3,
    n_max: int = 8,
    extra_edge_prob: float = 0.3,
) -> Graph:
    """Random spanning tree plus independent extra edges; always connected."""
    n = int(rng.integers(n_min, n_max + 1))
    pairs = set()
    for v in range(1, n):
        u = int(rng.integers(0, v))
        pairs.add((u, v))
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in pairs and rng.random() < extra_edge_prob:
                pairs.add((u, v))
    edges = sorted(pairs)
    return Graph(
        vertices=tuple(f"v{i}" for i in range(n)),
        edges=tuple(edges),
    )


def cycle_graph(n: int) -> Graph:
    edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    return Graph(vertices=tuple(f"v{i}" for i in range(n)), edges=tuple(edges))


def path_graph(n: int) -> Graph:
    edges = [(i, i + 1) for i in range(n - 1)]
    return Graph(vertices=tuple(f"v{i}" for i in range(n)), edges=tuple(edges))


def random_dims(
    rng: np.random.Generator, graph: Graph, d_max: int = 3
) -> DimensionVector:
    return DimensionVector(
        d_v=tuple(int(rng.integers(1, d_max + 1)) for _ in range(graph.n_vertices)),
        d_e=tuple(int(rng.integers(1, d_max + 1)) for _ in range(graph.n_edges)),
    )


def random_sheaf(
    rng: np.random.Generator,
    graph: Graph,
    dims: DimensionVector,
    scale: float = 1.0,
) -> CellularSheaf:
    pairs = []
    for e, (u, v) in enumerate(graph.edges):
        a_u = scale * rng.standard_normal((dims.d_e[e], dims.d_v[u]))
        a_v = scale * rng.standard_normal((dims.d_e[e], dims.d_v[v]))
        pairs.append((a_u, a_v))
    return CellularSheaf(graph=graph, dims=dims, maps=tuple(pairs))


def _haar_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_orthogonal_gauge(
    rng: np.random.Generator, dims: DimensionVector
) -> GaugeElement:
    return GaugeElement(
        g_v=tuple(_haar_orthogonal(rng, d) for d in dims.d_v),
        g_e=tuple(_haar_orthogonal(rng, d) for d in dims.d_e),
    )


def random_gauge(
    rng: np.random.Generator,
    dims: DimensionVector,
    sv_range: tuple[float, float] = (0.5, 2.0),
) -> GaugeElement:
    """Well-conditioned random invertible blocks: Q1 diag(s) Q2 with the
    singular values drawn from ``sv_range``."""

    def block(d: int) -> np.ndarray:
        s = rng.uniform(sv_range[0], sv_range[1], size=d)
        return _haar_orthogonal(rng, d) @ (s[:, None] * _haar_orthogonal(rng, d))

    return GaugeElement(
        g_v=tuple(block(d) for d in dims.d_v),
        g_e=tuple(block(d) for d in dims.d_e),
    )


def planted_line_sheaf(
    rng: np.random.Generator,
    graph: Graph,
    dims: DimensionVector | None = None,
    noise: float = 1.0,
) -> tuple[CellularSheaf, Subrepresentation]:
    """Sheaf with a known compatible system of unit lines.

    Per object a unit vector w is drawn; each map is w_e w_v^T plus noise
    supported on the complement of w_v, so A w_v = w_e holds exactly.
    """
    if dims is None:
        dims = random_dims(rng, graph, d_max=3)

    def unit(d: int) -> np.ndarray:
        w = rng.standard_normal(d)
        n = np.linalg.norm(w)
        while n < 1e-3:
            w = rng.standard_normal(d)
            n = np.linalg.norm(w)
        return w / n

    w_v = [unit(d) for d in dims.d_v]
    w_e = [unit(d) for d in dims.d_e]
    pairs = []
    for e, (u, v) in enumerate(graph.edges):
        def planted(vi: int) -> np.ndarray:
            w = w_v[vi]
            m = noise * rng.standard_normal((dims.d_e[e], dims.d_v[vi]))
            m -= np.outer(m @ w, w)  # kill the action on the planted line
            return np.outer(w_e[e], w) + m

        pairs.append((planted(u), planted(v)))
    sheaf = CellularSheaf(graph=graph, dims=dims, maps=tuple(pairs))
    sub = Subrepresentation(
        w_v=tuple(w.reshape(-1, 1) for w in w_v),
        w_e=tuple(w.reshape(-1, 1) for w in w_e),
    )
    return sheaf, sub


def signed_cycle_sheaf(n: int, n_flips: int = 1) -> CellularSheaf:
    """Scalar sheaf on an n-cycle whose first ``n_flips`` edges carry a
    sign flip.  An odd number of flips leaves no global section."""
    graph = cycle_graph(n)
    dims = uniform_dims(graph, 1)
    pairs = []
    for e in range(graph.n_edges):
        sign = -1.0 if e < n_flips else 1.0
        pairs.append((np.array([[1.0]]), np.array([[sign]])))
    return CellularSheaf(graph=graph, dims=dims, maps=tuple(pairs))


def summand_subrepresentation(
    f: CellularSheaf, g: CellularSheaf
) -> tuple[CellularSheaf, Subrepresentation]:
    """The first summand of f (+) g as a coordinate subrepresentation of
    the sum; certified by construction."""
    total = direct_sum(f, g)
    w_v = []
    for df, dg in zip(f.dims.d_v, g.dims.d_v):
        w = np.zeros((df + dg, df))
        w[:df, :] = np.eye(df)
        w_v.append(w)
    w_e = []
    for df, dg in zip(f.dims.d_e, g.dims.d_e):
        w = np.zeros((df + dg, df))
        w[:df, :] = np.eye(df)
        w_e.append(w)
    return total, Subrepresentation(w_v=tuple(w_v), w_e=tuple(w_e))
