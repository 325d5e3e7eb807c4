"""Cellular sheaves on graphs: restriction maps, coboundary, Laplacian,
Dirichlet energy, direct sums, subrepresentations, and trivial lines.

Conventions fixed here and relied on everywhere else:

* For an edge e = {u, v} with u the lower-indexed endpoint, the coboundary
  acts as (delta x)_e = A_{v,e} x_v - A_{u,e} x_u.
* The Laplacian is the unnormalized delta^T delta, symmetrized once to
  scrub rounding asymmetry.
* All operators are dense; the intended scale is a few thousand total
  stalk coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, PreconditionError, StructuralError
from .graphs import (
    DimensionVector,
    GaugeElement,
    Graph,
    graph_from_json_obj,
    graph_to_json_obj,
)

__all__ = [
    "CellularSheaf",
    "Subrepresentation",
    "SubrepReport",
    "TrivialLineBasis",
    "build_sheaf",
    "identity_sheaf",
    "coboundary_matrix",
    "sheaf_laplacian",
    "dirichlet_energy",
    "direct_sum",
    "direct_sum_embedding_indices",
    "apply_gauge",
    "verify_subrepresentation",
    "find_trivial_lines",
    "sheaf_to_json_obj",
    "sheaf_from_json_obj",
    "load_sheaf",
    "save_sheaf",
]

# Relative singular-value cutoff for nullspace and rank decisions.
NULLSPACE_RTOL = 1e-10
# A trivial-line block below this norm counts as degenerate at its object.
DEGENERATE_BLOCK_TOL = 1e-10


def _frozen_matrix(a, shape: tuple[int, int], what: str) -> np.ndarray:
    # always copy: freezing the caller's array in place would reach back
    # into mutable state (e.g. live model parameters)
    arr = np.array(a, dtype=float, order="C")
    if arr.shape != shape:
        raise StructuralError(f"{what}: expected shape {shape}, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise StructuralError(f"{what}: non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class CellularSheaf:
    """A graph with stalk dimensions and one restriction map per incidence.

    ``maps[e]`` is the pair (A_u, A_v) for edge e, u being the
    lower-indexed endpoint; each matrix has shape (d_e, d_endpoint).
    Arrays are stored read-only.
    """

    graph: Graph
    dims: DimensionVector
    maps: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self) -> None:
        g, d = self.graph, self.dims
        if len(d.d_v) != g.n_vertices or len(d.d_e) != g.n_edges:
            raise StructuralError("dimension vector does not match the graph")
        if len(self.maps) != g.n_edges:
            raise StructuralError(
                f"expected {g.n_edges} map pairs, got {len(self.maps)}"
            )
        frozen = []
        for e, pair in enumerate(self.maps):
            if len(pair) != 2:
                raise StructuralError(f"edge {g.edge_id(e)}: need exactly two maps")
            u, v = g.edges[e]
            a_u = _frozen_matrix(
                pair[0], (d.d_e[e], d.d_v[u]),
                f"map {g.vertices[u]}|{g.edge_id(e)}",
            )
            a_v = _frozen_matrix(
                pair[1], (d.d_e[e], d.d_v[v]),
                f"map {g.vertices[v]}|{g.edge_id(e)}",
            )
            frozen.append((a_u, a_v))
        object.__setattr__(self, "maps", tuple(frozen))

    def incidence_maps(self) -> Iterable[tuple[int, int, np.ndarray]]:
        """Yield (vertex index, edge index, restriction map) per incidence."""
        for e, (u, v) in enumerate(self.graph.edges):
            a_u, a_v = self.maps[e]
            yield u, e, a_u
            yield v, e, a_v


def build_sheaf(
    graph: Graph,
    dims: DimensionVector,
    maps: Mapping[tuple[str, str], object],
) -> CellularSheaf:
    """Construct from a dict keyed by (vertex name, edge id).

    Every incidence must appear exactly once; extra keys are rejected.
    """
    wanted = set()
    for e, (u, v) in enumerate(graph.edges):
        wanted.add((graph.vertices[u], graph.edge_id(e)))
        wanted.add((graph.vertices[v], graph.edge_id(e)))
    got = set(maps.keys())
    if got != wanted:
        missing = sorted(wanted - got)
        extra = sorted(got - wanted)
        raise StructuralError(
            f"incidence maps mismatch: missing {missing}, unexpected {extra}"
        )
    pairs = []
    for e, (u, v) in enumerate(graph.edges):
        eid = graph.edge_id(e)
        pairs.append(
            (maps[(graph.vertices[u], eid)], maps[(graph.vertices[v], eid)])
        )
    return CellularSheaf(graph=graph, dims=dims, maps=tuple(pairs))


def identity_sheaf(graph: Graph, d: int = 1) -> CellularSheaf:
    """Every stalk R^d, every restriction map the identity."""
    dims = DimensionVector(d_v=(d,) * graph.n_vertices, d_e=(d,) * graph.n_edges)
    eye = np.eye(d)
    return CellularSheaf(
        graph=graph, dims=dims, maps=tuple((eye, eye) for _ in graph.edges)
    )


def coboundary_matrix(sheaf: CellularSheaf) -> np.ndarray:
    """Dense N1 x N0 coboundary.

    Row block e carries -A_u on the u columns and +A_v on the v columns,
    so (delta x)_e = A_v x_v - A_u x_u.
    """
    d = sheaf.dims
    out = np.zeros((d.n1, d.n0))
    for e, (u, v) in enumerate(sheaf.graph.edges):
        a_u, a_v = sheaf.maps[e]
        rows = d.edge_slice(e)
        out[rows, d.vertex_slice(u)] = -a_u
        out[rows, d.vertex_slice(v)] = a_v
    return out


def sheaf_laplacian(sheaf: CellularSheaf) -> np.ndarray:
    """delta^T delta, symmetrized; positive semidefinite."""
    delta = coboundary_matrix(sheaf)
    lap = delta.T @ delta
    return (lap + lap.T) / 2.0


def dirichlet_energy(sheaf: CellularSheaf, x: np.ndarray) -> float:
    """Total squared edge disagreement of a vertex signal.

    ``x`` may be a length-N0 vector or an N0 x f matrix of feature
    channels; channels add.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != sheaf.dims.n0:
        raise PreconditionError(
            f"signal has {x.shape[0]} rows, expected {sheaf.dims.n0}"
        )
    dx = coboundary_matrix(sheaf) @ x
    return float(np.sum(dx * dx))


def direct_sum(f: CellularSheaf, g: CellularSheaf) -> CellularSheaf:
    """Stalk-wise block-diagonal sum of two sheaves on the same graph."""
    if f.graph != g.graph:
        raise StructuralError("direct sum requires the same underlying graph")
    dims = DimensionVector(
        d_v=tuple(a + b for a, b in zip(f.dims.d_v, g.dims.d_v)),
        d_e=tuple(a + b for a, b in zip(f.dims.d_e, g.dims.d_e)),
    )
    pairs = []
    for e in range(f.graph.n_edges):
        blocks = []
        for a, b in zip(f.maps[e], g.maps[e]):
            m = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
            m[: a.shape[0], : a.shape[1]] = a
            m[a.shape[0] :, a.shape[1] :] = b
            blocks.append(m)
        pairs.append(tuple(blocks))
    return CellularSheaf(graph=f.graph, dims=dims, maps=tuple(pairs))


def direct_sum_embedding_indices(
    dims_f: DimensionVector, dims_g: DimensionVector
) -> tuple[np.ndarray, np.ndarray]:
    """Vertex-cochain coordinates of each summand inside the direct sum.

    Returns (idx_f, idx_g): positions such that a summand signal lands at
    those rows of the sum's vertex cochain.  Inverse of the interleaving.
    """
    idx_f, idx_g = [], []
    pos = 0
    for df, dg in zip(dims_f.d_v, dims_g.d_v):
        idx_f.extend(range(pos, pos + df))
        pos += df
        idx_g.extend(range(pos, pos + dg))
        pos += dg
    return np.asarray(idx_f, dtype=np.intp), np.asarray(idx_g, dtype=np.intp)


def apply_gauge(sheaf: CellularSheaf, g: GaugeElement) -> CellularSheaf:
    """Base change on every stalk: each map A becomes g_e A g_v^{-1}.

    Gauge blocks were already certified invertible at construction; here
    only the shapes are checked against the sheaf's dimensions.
    """
    d = sheaf.dims
    if len(g.g_v) != len(d.d_v) or len(g.g_e) != len(d.d_e):
        raise StructuralError("gauge element block count does not match the sheaf")
    for i, blk in enumerate(g.g_v):
        if blk.shape[0] != d.d_v[i]:
            raise StructuralError(
                f"vertex gauge block {i} has size {blk.shape[0]}, stalk is {d.d_v[i]}"
            )
    for e, blk in enumerate(g.g_e):
        if blk.shape[0] != d.d_e[e]:
            raise StructuralError(
                f"edge gauge block {e} has size {blk.shape[0]}, stalk is {d.d_e[e]}"
            )
    pairs = []
    for e, (u, v) in enumerate(sheaf.graph.edges):
        a_u, a_v = sheaf.maps[e]
        ge = g.g_e[e]
        # A g_v^{-1} computed as a solve against g_v^T from the right
        new_u = ge @ np.linalg.solve(g.g_v[u].T, a_u.T).T
        new_v = ge @ np.linalg.solve(g.g_v[v].T, a_v.T).T
        pairs.append((new_u, new_v))
    return CellularSheaf(graph=sheaf.graph, dims=d, maps=tuple(pairs))


# --- subrepresentations ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class Subrepresentation:
    """Candidate subspace bases, one d_i x k_i matrix per object.

    A column count of zero denotes the zero subspace at that object.
    Certification against a sheaf is a separate step; holding a
    Subrepresentation proves nothing by itself.
    """

    w_v: tuple[np.ndarray, ...]
    w_e: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        def check(w, what):
            arr = np.asarray(w, dtype=float)
            if arr.ndim != 2:
                raise StructuralError(f"{what}: basis must be a matrix")
            if not np.isfinite(arr).all():
                raise StructuralError(f"{what}: non-finite entries")
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            return arr

        object.__setattr__(
            self, "w_v", tuple(check(w, f"vertex basis {i}") for i, w in enumerate(self.w_v))
        )
        object.__setattr__(
            self, "w_e", tuple(check(w, f"edge basis {e}") for e, w in enumerate(self.w_e))
        )

    @property
    def k_v(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.w_v)

    @property
    def k_e(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.w_e)

    @classmethod
    def full(cls, dims: DimensionVector) -> "Subrepresentation":
        return cls(
            w_v=tuple(np.eye(d) for d in dims.d_v),
            w_e=tuple(np.eye(d) for d in dims.d_e),
        )

    @classmethod
    def coordinate_axes(cls, dims: DimensionVector, k: int = 1) -> "Subrepresentation":
        """The span of the first k coordinate directions at every object."""
        for d in dims.d_v + dims.d_e:
            if d < k:
                raise StructuralError(f"stalk dimension {d} is below k={k}")
        return cls(
            w_v=tuple(np.eye(d)[:, :k] for d in dims.d_v),
            w_e=tuple(np.eye(d)[:, :k] for d in dims.d_e),
        )


@dataclass(frozen=True)
class SubrepReport:
    """Outcome of a closure check of candidate subspaces under the maps."""

    certified: bool
    tol: float
    worst_residual: float
    worst_incidence: tuple[str, str] | None

    def __bool__(self) -> bool:
        return self.certified


def _orth(w: np.ndarray, what: str) -> np.ndarray:
    """Orthonormal basis of col(w); rejects rank-deficient input."""
    if w.shape[1] == 0:
        return w
    u, s, _ = np.linalg.svd(w, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= NULLSPACE_RTOL * s[0]:
        raise StructuralError(f"{what}: basis is rank-deficient")
    return u[:, : w.shape[1]]

def verify_subrepresentation(
    sheaf: CellularSheaf,
    sub: Subrepresentation,
    tol: float = 1e-8,
) -> SubrepReport:
    """Check that every restriction map sends the vertex subspace into the
    incident edge subspace.

    Per incidence the residual is the part of A W_v outside col(W_e),
    measured relative to |A W_v|; an incidence with A W_v = 0 passes
    trivially.  The report carries the worst offender.
    """
    d = sheaf.dims
    if len(sub.w_v) != len(d.d_v) or len(sub.w_e) != len(d.d_e):
        raise StructuralError("subrepresentation block count does not match sheaf")
    for i, w in enumerate(sub.w_v):
        if w.shape[0] != d.d_v[i] or w.shape[1] > d.d_v[i]:
            raise StructuralError(
                f"vertex basis {i} has shape {w.shape}, stalk dimension {d.d_v[i]}"
            )
    for e, w in enumerate(sub.w_e):
        if w.shape[0] != d.d_e[e] or w.shape[1] > d.d_e[e]:
            raise StructuralError(
                f"edge basis {e} has shape {w.shape}, stalk dimension {d.d_e[e]}"
            )
    q_v = [_orth(w, f"vertex basis {i}") for i, w in enumerate(sub.w_v)]
    q_e = [_orth(w, f"edge basis {e}") for e, w in enumerate(sub.w_e)]

    worst = 0.0
    worst_inc: tuple[str, str] | None = None
    g = sheaf.graph
    for v, e, a in sheaf.incidence_maps():
        img = a @ q_v[v]
        norm = np.linalg.norm(img)
        if norm == 0.0:
            continue
        qe = q_e[e]
        resid = img - qe @ (qe.T @ img) if qe.shape[1] else img
        rel = float(np.linalg.norm(resid) / norm)
        if rel > worst:
            worst = rel
            worst_inc = (g.vertices[v], g.edge_id(e))
    return SubrepReport(
        certified=worst <= tol,
        tol=tol,
        worst_residual=worst,
        worst_incidence=worst_inc,
    )


# --- trivial lines ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrivialLineBasis:
    """Orthonormal basis of the space of compatible per-object lines.

    Each column stacks candidate vectors (w_v per vertex, then w_e per
    edge) satisfying A_{v,e} w_v = w_e at every incidence.  A column with
    a vanishing block does not certify an embedded line at every object;
    those object indices are listed in ``degenerate``.
    """

    basis: np.ndarray
    dims: DimensionVector
    degenerate: tuple[tuple[int, ...], ...]

    @property
    def count(self) -> int:
        return self.basis.shape[1]

    def vertex_part(self, j: int) -> np.ndarray:
        return self.basis[: self.dims.n0, j]

    def edge_part(self, j: int) -> np.ndarray:
        return self.basis[self.dims.n0 :, j]

    def line_subrepresentation(self, j: int) -> Subrepresentation:
        """Column j as a one-dimensional subspace basis at every object.

        Refused when any block is degenerate: a vanishing block is not a
        line there.
        """
        if self.degenerate[j]:
            raise StructuralError(
                f"solution {j} is degenerate at objects {list(self.degenerate[j])}"
            )
        d = self.dims
        col = self.basis[:, j]
        w_v = tuple(
            col[d.vertex_slice(i)].reshape(-1, 1) for i in range(len(d.d_v))
        )
        w_e = tuple(
            col[d.n0 :][d.edge_slice(e)].reshape(-1, 1) for e in range(len(d.d_e))
        )
        return Subrepresentation(w_v=w_v, w_e=w_e)


def find_trivial_lines(sheaf: CellularSheaf) -> TrivialLineBasis:
    """Solve A_{v,e} w_v = w_e for all incidences at once.

    Unknowns are stacked (all w_v, then all w_e); the solution space is
    the numerical nullspace of the stacked constraint matrix, cut at
    NULLSPACE_RTOL relative to the largest singular value.  An empty basis
    means no compatible system of lines exists.
    """
    d = sheaf.dims
    n_unknowns = d.n0 + d.n1
    rows = 2 * d.n1  # one d_e-row block per incidence
    m = np.zeros((rows, n_unknowns))
    r = 0
    for v, e, a in sheaf.incidence_maps():
        de = d.d_e[e]
        m[r : r + de, d.vertex_slice(v)] = a
        m[r : r + de, d.n0 + d.edge_offsets[e] : d.n0 + d.edge_offsets[e + 1]] = -np.eye(de)
        r += de
    _, s, vt = np.linalg.svd(m)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        null = vt
    else:
        cutoff = NULLSPACE_RTOL * smax
        null = vt[np.concatenate([s <= cutoff, np.ones(vt.shape[0] - s.size, bool)])]
    basis = np.ascontiguousarray(null.T)

    degenerate = []
    for j in range(basis.shape[1]):
        col = basis[:, j]
        bad = []
        for i in range(len(d.d_v)):
            if np.linalg.norm(col[d.vertex_slice(i)]) < DEGENERATE_BLOCK_TOL:
                bad.append(i)
        for e in range(len(d.d_e)):
            blk = col[d.n0 :][d.edge_slice(e)]
            if np.linalg.norm(blk) < DEGENERATE_BLOCK_TOL:
                bad.append(len(d.d_v) + e)
        degenerate.append(tuple(bad))
    return TrivialLineBasis(basis=basis, dims=d, degenerate=tuple(degenerate))


# --- serialization ---------------------------------------------------------


def sheaf_to_json_obj(sheaf: CellularSheaf) -> dict:
    """Schema: graph, per-object dimensions, and row-major map entries
    keyed ``"<vertex>|<edge id>"``.  Vertex names containing ``|`` would
    make keys ambiguous and are refused."""
    g = sheaf.graph
    for name in g.vertices:
        if "|" in name:
            raise StructuralError(
                f"vertex name {name!r} contains '|'; cannot serialize maps"
            )
    d = sheaf.dims
    maps = {}
    for v, e, a in sheaf.incidence_maps():
        maps[f"{g.vertices[v]}|{g.edge_id(e)}"] = [float(x) for x in a.ravel()]
    return {
        "graph": graph_to_json_obj(g),
        "d_v": {g.vertices[i]: d.d_v[i] for i in range(g.n_vertices)},
        "d_e": {g.edge_id(e): d.d_e[e] for e in range(g.n_edges)},
        "maps": maps,
    }


def sheaf_from_json_obj(obj) -> CellularSheaf:
    if not isinstance(obj, Mapping):
        raise ParseError("sheaf JSON must be an object")
    for key in ("graph", "d_v", "d_e", "maps"):
        if key not in obj:
            raise ParseError(f'sheaf JSON missing "{key}"')
    graph = graph_from_json_obj(obj["graph"])
    try:
        d_v = tuple(int(obj["d_v"][name]) for name in graph.vertices)
    except KeyError as exc:
        raise ParseError(f'"d_v" missing entry for vertex {exc.args[0]!r}') from None
    try:
        d_e = tuple(
            int(obj["d_e"][graph.edge_id(e)]) for e in range(graph.n_edges)
        )
    except KeyError as exc:
        raise ParseError(f'"d_e" missing entry for edge {exc.args[0]!r}') from None
    dims = DimensionVector(d_v=d_v, d_e=d_e)

    raw = obj["maps"]
    if not isinstance(raw, Mapping):
        raise ParseError('"maps" must be an object')
    parsed: dict[tuple[str, str], np.ndarray] = {}
    for key, flat in raw.items():
        if "|" not in key:
            raise ParseError(f"map key {key!r} is not of the form 'vertex|edge'")
        vname, eid = key.split("|", 1)
        try:
            v = graph.vertex_index(vname)
            e = graph.edge_index(eid)
        except StructuralError as exc:
            raise ParseError(f"map key {key!r}: {exc}") from None
        shape = (dims.d_e[e], dims.d_v[v])
        arr = np.asarray(flat, dtype=float)
        if arr.ndim != 1 or arr.size != shape[0] * shape[1]:
            raise ParseError(
                f"map {key!r}: expected {shape[0] * shape[1]} row-major entries"
            )
        parsed[(vname, eid)] = arr.reshape(shape)
    return build_sheaf(graph, dims, parsed)


def load_sheaf(path) -> CellularSheaf:
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read sheaf file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return sheaf_from_json_obj(obj)


def save_sheaf(sheaf: CellularSheaf, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(sheaf_to_json_obj(sheaf), fh, indent=2)
        fh.write("\n")
