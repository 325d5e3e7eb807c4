"""Node-classification data: directory loader, synthetic two-block
generator with a planted signed section, and a benchmark-shaped fixture
writer.

Directory layout: ``graph.json`` (or ``edges.tsv``), ``features.csv``
(no header, one row per node in vertex order), ``labels.csv`` (one
integer per line), optional ``splits.json`` of the form
``{"splits": [{"train": [...], "val": [...], "test": [...]}, ...]}`` and
optional ``manifest.json`` written by a generator.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParseError, StructuralError
from .graphs import Graph, graph_to_json_obj, load_graph, uniform_dims
from .sheaves import CellularSheaf

__all__ = [
    "Split",
    "DatasetBundle",
    "edge_homophily",
    "summarize",
    "random_split",
    "generate_two_block",
    "planted_signed_sheaf",
    "load_dataset",
    "write_dataset",
    "write_fixture_dataset",
]


@dataclass(frozen=True, eq=False)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self) -> None:
        for name in ("train", "val", "test"):
            arr = np.asarray(getattr(self, name), dtype=np.intp).reshape(-1)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """Graph, node features, integer labels, and named splits."""

    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    splits: tuple[Split, ...]
    n_classes: int
    manifest: dict | None = None

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels)
        n = self.graph.n_vertices
        if feats.ndim != 2 or feats.shape[0] != n:
            raise StructuralError(
                f"features must have one row per vertex; got {feats.shape} for {n}"
            )
        if not np.isfinite(feats).all():
            raise StructuralError("features contain non-finite values")
        if labels.shape != (n,):
            raise StructuralError("labels must be one integer per vertex")
        labels = labels.astype(np.intp)
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise StructuralError(
                f"label outside [0, {self.n_classes}): {int(labels.min())}..{int(labels.max())}"
            )
        for k, split in enumerate(self.splits):
            combined = np.concatenate([split.train, split.val, split.test])
            if combined.size and (combined.min() < 0 or combined.max() >= n):
                raise StructuralError(f"split {k} indexes outside the vertex range")
            if np.unique(combined).size != combined.size:
                raise StructuralError(f"split {k} has overlapping masks")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def edge_homophily(graph: Graph, labels: np.ndarray) -> float:
    """Fraction of edges whose endpoints share a label; nan when edgeless."""
    if graph.n_edges == 0:
        return float("nan")
    labels = np.asarray(labels)
    same = sum(1 for u, v in graph.edges if labels[u] == labels[v])
    return same / graph.n_edges


def summarize(bundle: DatasetBundle) -> dict:
    return {
        "n_vertices": bundle.graph.n_vertices,
        "n_edges": bundle.graph.n_edges,
        "n_features": bundle.n_features,
        "n_classes": bundle.n_classes,
        "n_splits": len(bundle.splits),
        "edge_homophily": edge_homophily(bundle.graph, bundle.labels),
    }


def random_split(
    n: int,
    rng: np.random.Generator,
    fractions: tuple[float, float, float] = (0.48, 0.32, 0.20),
) -> Split:
    """Disjoint train/val/test masks at the given fractions of n.

    Train and val sizes round to nearest; test takes the rest, so each
    piece is within one node of its exact share.
    """
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return Split(
        train=perm[:n_train],
        val=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val :],
    )


def _connected(n: int, edges: list[tuple[int, int]]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                count += 1
                stack.append(w)
    return count == n


def generate_two_block(
    n_per_block: int = 30,
    p_intra: float = 0.1,
    p_inter: float = 0.3,
    seed: int = 0,
    n_splits: int = 1,
) -> DatasetBundle:
    """Two equal communities where crossing edges are more likely than
    internal ones, so neighboring labels tend to differ.

    Features: one noisy copy of the +/-1 community indicator plus eight
    pure-noise columns.  The manifest records the planted structure: a
    one-dimensional sheaf with a sign flip on every crossing edge turns
    the indicator into an exact section (see planted_signed_sheaf).
    Retries generation up to 10 times if the graph comes out
    disconnected.
    """
    if n_per_block < 4:
        raise StructuralError("need at least 4 nodes per block")
    for name, p in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not (0.0 < p <= 1.0):
            raise StructuralError(f"{name} must be in (0, 1]")
    n = 2 * n_per_block
    labels = np.array([0] * n_per_block + [1] * n_per_block, dtype=np.intp)
    rng = np.random.default_rng(seed)

    edges: list[tuple[int, int]] = []
    attempts = 0
    for attempts in range(1, 11):
        edges = []
        for u in range(n):
            for v in range(u + 1, n):
                p = p_intra if labels[u] == labels[v] else p_inter
                if rng.random() < p:
                    edges.append((u, v))
        if edges and _connected(n, edges):
            break
    else:
        raise NumericError(
            "two-block generator produced a disconnected graph 10 times; "
            "raise the edge probabilities"
        )
    graph = Graph(
        vertices=tuple(f"n{i}" for i in range(n)), edges=tuple(edges)
    )

    chi = np.where(labels == 0, 1.0, -1.0)
    features = np.column_stack(
        [chi + 0.25 * rng.standard_normal(n), rng.standard_normal((n, 8))]
    )
    splits = tuple(random_split(n, rng) for _ in range(n_splits))
    manifest = {
        "generator": "two-block",
        "n_per_block": n_per_block,
        "p_intra": p_intra,
        "p_inter": p_inter,
        "seed": seed,
        "attempts": attempts,
        "n_vertices": n,
        "n_edges": graph.n_edges,
        "n_features": features.shape[1],
        "n_classes": 2,
        "edge_homophily": edge_homophily(graph, labels),
        "planted": {
            "kind": "signed-line",
            "description": "d=1 sheaf, sign flip on crossing edges; the "
            "community indicator is then a global section",
        },
    }
    return DatasetBundle(
        graph=graph,
        features=features,
        labels=labels,
        splits=splits,
        n_classes=2,
        manifest=manifest,
    )


def planted_signed_sheaf(graph: Graph, labels: np.ndarray) -> CellularSheaf:
    """One-dimensional sheaf whose sections carry the community signal.

    Same-label edges get (+1, +1); crossing edges get (+1, -1), so the
    +/-1 label indicator satisfies every edge constraint exactly.
    """
    labels = np.asarray(labels)
    one = np.array([[1.0]])
    pairs = []
    for u, v in graph.edges:
        pairs.append((one, one if labels[u] == labels[v] else -one))
    return CellularSheaf(
        graph=graph, dims=uniform_dims(graph, 1), maps=tuple(pairs)
    )


# --- directory IO ----------------------------------------------------------


def _read_matrix_csv(path: str) -> np.ndarray:
    rows = []
    width = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                fields = line.strip().split(",")
                if width is None:
                    width = len(fields)
                elif len(fields) != width:
                    raise ParseError(
                        f"{path}:{lineno}: expected {width} fields, got {len(fields)}"
                    )
                try:
                    rows.append([float(x) for x in fields])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _read_labels_csv(path: str, n: int) -> np.ndarray:
    labels = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    labels.append(int(line.strip()))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: label must be an integer, got {line.strip()!r}"
                    ) from None
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if len(labels) != n:
        raise ParseError(f"{path}: {len(labels)} labels for {n} vertices")
    arr = np.asarray(labels, dtype=np.intp)
    if arr.min() < 0:
        raise ParseError(f"{path}: negative label {int(arr.min())}")
    return arr


def _read_splits_json(path: str, n: int) -> tuple[Split, ...]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "splits" not in obj:
        raise ParseError(f'{path}: expected an object with a "splits" list')
    splits = []
    for k, entry in enumerate(obj["splits"]):
        if not all(key in entry for key in ("train", "val", "test")):
            raise ParseError(f'{path}: split {k} needs "train", "val", "test"')
        try:
            splits.append(
                Split(
                    train=np.asarray(entry["train"], dtype=np.intp),
                    val=np.asarray(entry["val"], dtype=np.intp),
                    test=np.asarray(entry["test"], dtype=np.intp),
                )
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}: split {k}: {exc}") from None
    return tuple(splits)


def load_dataset(directory) -> DatasetBundle:
    """Read a dataset directory; see the module docstring for the layout."""
    directory = str(directory)
    graph_json = os.path.join(directory, "graph.json")
    edges_tsv = os.path.join(directory, "edges.tsv")
    if os.path.exists(graph_json):
        graph = load_graph(graph_json)
    elif os.path.exists(edges_tsv):
        graph = load_graph(edges_tsv)
    else:
        raise ParseError(f"{directory}: neither graph.json nor edges.tsv found")

    features = _read_matrix_csv(os.path.join(directory, "features.csv"))
    if features.shape[0] != graph.n_vertices:
        raise ParseError(
            f"{directory}/features.csv: {features.shape[0]} rows for "
            f"{graph.n_vertices} vertices"
        )
    labels = _read_labels_csv(os.path.join(directory, "labels.csv"), graph.n_vertices)

    splits_path = os.path.join(directory, "splits.json")
    splits: tuple[Split, ...] = ()
    if os.path.exists(splits_path):
        splits = _read_splits_json(splits_path, graph.n_vertices)

    manifest = None
    manifest_path = os.path.join(directory, "manifest.json")
    if os.path.exists(manifest_path):
        try:
            with open(manifest_path, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"{manifest_path}: {exc}") from exc

    try:
        return DatasetBundle(
            graph=graph,
            features=features,
            labels=labels,
            splits=splits,
            n_classes=int(labels.max()) + 1,
            manifest=manifest,
        )
    except StructuralError as exc:
        raise ParseError(f"{directory}: {exc}") from exc


def write_dataset(bundle: DatasetBundle, directory) -> None:
    directory = str(directory)
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "graph.json"), "w", encoding="utf-8") as fh:
        json.dump(graph_to_json_obj(bundle.graph), fh)
        fh.write("\n")
    np.savetxt(
        os.path.join(directory, "features.csv"),
        bundle.features,
        delimiter=",",
        fmt="%.17g",
    )
    with open(os.path.join(directory, "labels.csv"), "w", encoding="utf-8") as fh:
        for label in bundle.labels:
            fh.write(f"{int(label)}\n")
    with open(os.path.join(directory, "splits.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "splits": [
                    {
                        "train": [int(i) for i in s.train],
                        "val": [int(i) for i in s.val],
                        "test": [int(i) for i in s.test],
                    }
                    for s in bundle.splits
                ]
            },
            fh,
        )
        fh.write("\n")
    if bundle.manifest is not None:
        with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(bundle.manifest, fh, indent=2)
            fh.write("\n")


def write_fixture_dataset(
    directory,
    n_vertices: int = 183,
    n_edges: int = 325,
    n_features: int = 1703,
    n_classes: int = 5,
    seed: int = 0,
    n_splits: int = 2,
) -> dict:
    """Write a random dataset with benchmark-shaped counts.

    Connected graph with exactly the requested edge count, sparse 0/1
    features, uniform random labels.  Returns the manifest.
    """
    if n_edges < n_vertices - 1:
        raise StructuralError("need at least n_vertices - 1 edges for connectivity")
    max_edges = n_vertices * (n_vertices - 1) // 2
    if n_edges > max_edges:
        raise StructuralError(f"{n_edges} edges exceed the simple-graph maximum {max_edges}")
    rng = np.random.default_rng(seed)
    pairs = set()
    for v in range(1, n_vertices):
        u = int(rng.integers(0, v))
        pairs.add((u, v))
    while len(pairs) < n_edges:
        u, v = rng.integers(0, n_vertices, size=2)
        if u == v:
            continue
        if u > v:
            u, v = v, u
        pairs.add((int(u), int(v)))
    graph = Graph(
        vertices=tuple(f"w{i}" for i in range(n_vertices)),
        edges=tuple(sorted(pairs)),
    )
    features = (rng.random((n_vertices, n_features)) < 0.02).astype(float)
    labels = rng.integers(0, n_classes, size=n_vertices).astype(np.intp)
    # every class must appear or the declared class count is a lie
    for c in range(n_classes):
        if not np.any(labels == c):
            labels[rng.integers(0, n_vertices)] = c
    splits = tuple(random_split(n_vertices, rng) for _ in range(n_splits))
    manifest = {
        "generator": "fixture",
        "seed": seed,
        "n_vertices": n_vertices,
        "n_edges": n_edges,
        "n_features": n_features,
        "n_classes": n_classes,
        "edge_homophily": edge_homophily(graph, labels),
    }
    bundle = DatasetBundle(
        graph=graph,
        features=features,
        labels=labels,
        splits=splits,
        n_classes=n_classes,
        manifest=manifest,
    )
    write_dataset(bundle, directory)
    return manifest
