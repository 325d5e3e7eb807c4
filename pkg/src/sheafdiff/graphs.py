"""Graphs, incidence quivers, stalk dimensions, and gauge elements.

Graphs are undirected, simple, and finite, with an explicit vertex order
that fixes all downstream indexing.  Every edge is stored with its
endpoints sorted by vertex index; the lower-indexed endpoint plays the
"tail" role in the difference convention used by the coboundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConditioningError, ParseError, StructuralError

__all__ = [
    "Graph",
    "IncidenceQuiver",
    "DimensionVector",
    "GaugeElement",
    "build_incidence_quiver",
    "uniform_dims",
    "graph_to_json_obj",
    "graph_from_json_obj",
    "graph_from_tsv",
    "load_graph",
    "save_graph",
]

# Gauge blocks with reciprocal condition number below this are rejected.
GAUGE_RCOND_MIN = 1e-10


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with a canonical vertex order.

    ``edges`` holds index pairs, canonicalized so the lower index comes
    first; edge order is declaration order.
    """

    vertices: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        vertices = tuple(str(v) for v in self.vertices)
        if len(set(vertices)) != len(vertices):
            raise StructuralError("duplicate vertex identifiers")
        n = len(vertices)
        seen: set[tuple[int, int]] = set()
        canon = []
        for pair in self.edges:
            u, v = int(pair[0]), int(pair[1])
            if not (0 <= u < n and 0 <= v < n):
                raise StructuralError(f"edge endpoint index out of range: {pair!r}")
            if u == v:
                raise StructuralError(f"self-loop at vertex {vertices[u]!r}")
            if u > v:
                u, v = v, u
            if (u, v) in seen:
                raise StructuralError(
                    f"duplicate edge {vertices[u]!r}-{vertices[v]!r}"
                )
            seen.add((u, v))
            canon.append((u, v))
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "edges", tuple(canon))

    @classmethod
    def build(
        cls,
        vertices: Iterable[str],
        edge_pairs: Iterable[Sequence[str]],
    ) -> "Graph":
        """Construct from vertex names and (name, name) edge pairs."""
        vertices = tuple(str(v) for v in vertices)
        index = {v: i for i, v in enumerate(vertices)}
        if len(index) != len(vertices):
            raise StructuralError("duplicate vertex identifiers")
        edges = []
        for pair in edge_pairs:
            u, v = str(pair[0]), str(pair[1])
            for name in (u, v):
                if name not in index:
                    raise StructuralError(
                        f"edge endpoint {name!r} is not a declared vertex"
                    )
            edges.append((index[u], index[v]))
        return cls(vertices=vertices, edges=tuple(edges))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _vertex_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    def vertex_index(self, name: str) -> int:
        try:
            return self._vertex_index[name]
        except KeyError:
            raise StructuralError(f"unknown vertex {name!r}") from None

    def edge_id(self, e: int) -> str:
        """Canonical printable identifier of edge ``e``: ``"u--v"``."""
        u, v = self.edges[e]
        return f"{self.vertices[u]}--{self.vertices[v]}"

    @cached_property
    def _edge_index(self) -> dict[str, int]:
        return {self.edge_id(e): e for e in range(self.n_edges)}

    def edge_index(self, edge_id: str) -> int:
        try:
            return self._edge_index[edge_id]
        except KeyError:
            raise StructuralError(f"unknown edge {edge_id!r}") from None

    def incidences(self) -> Iterable[tuple[int, int]]:
        """All (vertex, edge) incidence pairs, lower endpoint first per edge."""
        for e, (u, v) in enumerate(self.edges):
            yield u, e
            yield v, e


@dataclass(frozen=True)
class IncidenceQuiver:
    """Bipartite quiver with one object per vertex and per edge and one
    arrow per incidence, always vertex-object -> edge-object.

    Object indexing: vertices occupy 0..n_vertices-1, edge objects follow.
    """

    n_vertices: int
    n_edges: int
    objects: tuple[str, ...]
    arrows: tuple[tuple[int, int], ...]

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def n_arrows(self) -> int:
        return len(self.arrows)


def build_incidence_quiver(graph: Graph) -> IncidenceQuiver:
    """One object per vertex and per edge; arrows u->e and v->e per edge.

    Deterministic given the graph's vertex and edge order: the two arrows
    of an edge are emitted lower endpoint first.
    """
    nv = graph.n_vertices
    objects = tuple(graph.vertices) + tuple(
        graph.edge_id(e) for e in range(graph.n_edges)
    )
    arrows = []
    for e, (u, v) in enumerate(graph.edges):
        arrows.append((u, nv + e))
        arrows.append((v, nv + e))
    return IncidenceQuiver(
        n_vertices=nv,
        n_edges=graph.n_edges,
        objects=objects,
        arrows=tuple(arrows),
    )


@dataclass(frozen=True)
class DimensionVector:
    """Stalk dimensions per vertex and per edge, aligned with graph order."""

    d_v: tuple[int, ...]
    d_e: tuple[int, ...]

    def __post_init__(self) -> None:
        d_v = tuple(int(d) for d in self.d_v)
        d_e = tuple(int(d) for d in self.d_e)
        if any(d < 1 for d in d_v) or any(d < 1 for d in d_e):
            raise StructuralError("stalk dimensions must be >= 1")
        object.__setattr__(self, "d_v", d_v)
        object.__setattr__(self, "d_e", d_e)

    @property
    def n0(self) -> int:
        """Total vertex-cochain dimension."""
        return sum(self.d_v)

    @property
    def n1(self) -> int:
        """Total edge-cochain dimension."""
        return sum(self.d_e)

    @cached_property
    def vertex_offsets(self) -> np.ndarray:
        off = np.zeros(len(self.d_v) + 1, dtype=np.intp)
        np.cumsum(self.d_v, out=off[1:])
        return off

    @cached_property
    def edge_offsets(self) -> np.ndarray:
        off = np.zeros(len(self.d_e) + 1, dtype=np.intp)
        np.cumsum(self.d_e, out=off[1:])
        return off

    def vertex_slice(self, i: int) -> slice:
        return slice(self.vertex_offsets[i], self.vertex_offsets[i + 1])

    def edge_slice(self, e: int) -> slice:
        return slice(self.edge_offsets[e], self.edge_offsets[e + 1])

    @property
    def n_objects(self) -> int:
        return len(self.d_v) + len(self.d_e)

    @cached_property
    def object_dims(self) -> np.ndarray:
        """All stalk dimensions as one vector, vertices first then edges."""
        arr = np.array(self.d_v + self.d_e, dtype=float)
        arr.flags.writeable = False
        return arr


def uniform_dims(graph: Graph, d_v: int, d_e: int | None = None) -> DimensionVector:
    """Constant stalk dimensions: d_v at every vertex, d_e at every edge."""
    if d_e is None:
        d_e = d_v
    return DimensionVector(
        d_v=(int(d_v),) * graph.n_vertices,
        d_e=(int(d_e),) * graph.n_edges,
    )


@dataclass(frozen=True, eq=False)
class GaugeElement:
    """One invertible matrix per vertex and per edge, acting by base change.

    Invertibility is enforced at construction: a block whose reciprocal
    condition number falls below GAUGE_RCOND_MIN is rejected.
    """

    g_v: tuple[np.ndarray, ...]
    g_e: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        g_v = tuple(_checked_gauge_block(g, "vertex", i) for i, g in enumerate(self.g_v))
        g_e = tuple(_checked_gauge_block(g, "edge", i) for i, g in enumerate(self.g_e))
        object.__setattr__(self, "g_v", g_v)
        object.__setattr__(self, "g_e", g_e)

    @classmethod
    def identity(cls, dims: DimensionVector) -> "GaugeElement":
        return cls(
            g_v=tuple(np.eye(d) for d in dims.d_v),
            g_e=tuple(np.eye(d) for d in dims.d_e),
        )

    def after(self, other: "GaugeElement") -> "GaugeElement":
        """Group composite: ``h.after(g)`` acts like applying g, then h."""
        if len(self.g_v) != len(other.g_v) or len(self.g_e) != len(other.g_e):
            raise StructuralError("gauge elements have different block counts")
        return GaugeElement(
            g_v=tuple(a @ b for a, b in zip(self.g_v, other.g_v)),
            g_e=tuple(a @ b for a, b in zip(self.g_e, other.g_e)),
        )


def _checked_gauge_block(block: np.ndarray, kind: str, i: int) -> np.ndarray:
    arr = np.asarray(block, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StructuralError(f"gauge block at {kind} {i} is not square: {arr.shape}")
    if not np.isfinite(arr).all():
        raise StructuralError(f"gauge block at {kind} {i} has non-finite entries")
    s = np.linalg.svd(arr, compute_uv=False)
    if s[0] == 0.0 or s[-1] / s[0] < GAUGE_RCOND_MIN:
        raise ConditioningError(
            f"gauge block at {kind} {i} is numerically singular "
            f"(rcond {0.0 if s[0] == 0.0 else s[-1] / s[0]:.2e})"
        )
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


# --- serialization ---------------------------------------------------------


def graph_to_json_obj(graph: Graph) -> dict:
    return {
        "vertices": list(graph.vertices),
        "edges": [
            [graph.vertices[u], graph.vertices[v]] for u, v in graph.edges
        ],
    }


def graph_from_json_obj(obj) -> Graph:
    if not isinstance(obj, Mapping):
        raise ParseError("graph JSON must be an object")
    if "vertices" not in obj or "edges" not in obj:
        raise ParseError('graph JSON must have "vertices" and "edges" keys')
    vertices = obj["vertices"]
    edges = obj["edges"]
    if not isinstance(vertices, list) or not all(isinstance(v, str) for v in vertices):
        raise ParseError('"vertices" must be a list of strings')
    if not isinstance(edges, list):
        raise ParseError('"edges" must be a list of vertex pairs')
    for k, pair in enumerate(edges):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(f"edge entry {k} is not a two-element list: {pair!r}")
    return Graph.build(vertices, edges)


def graph_from_tsv(text: str, source: str = "<tsv>") -> Graph:
    """Edge-list form: one ``u<TAB>v`` pair per line, vertices in
    first-appearance order.  Blank lines are skipped."""
    vertices: list[str] = []
    seen: set[str] = set()
    pairs: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise ParseError(f"{source}:{lineno}: expected two tab-separated fields")
        for name in fields:
            if name not in seen:
                seen.add(name)
                vertices.append(name)
        pairs.append((fields[0], fields[1]))
    return Graph.build(vertices, pairs)


def load_graph(path) -> Graph:
    """Read a graph file; ``.tsv`` means edge-list form, anything else JSON."""
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read graph file {path}: {exc}") from exc
    if path.endswith(".tsv"):
        return graph_from_tsv(text, source=path)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return graph_from_json_obj(obj)


def save_graph(graph: Graph, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(graph_to_json_obj(graph), fh, indent=2)
        fh.write("\n")
