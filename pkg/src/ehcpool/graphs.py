"""Attributed-graph data model: validation, adjacency indexing, JSONL datasets.

Graphs are undirected. Each unordered edge {i, j} is stored exactly once in a
2 x M index matrix; incidence structures materialize both directions where an
operation needs them. All feature arrays are float64 and immutable after
construction so graphs can be shared freely across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateEdge,
    IndexOutOfRange,
    NonFinite,
    ParseError,
    SelfLoop,
    ShapeMismatch,
)


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """An undirected graph with dense node and edge feature matrices.

    node_features: (n, d) float64
    edge_features: (M, d_e) float64, one row per stored undirected edge
    edge_list:     (2, M) int, row 0 = first endpoint, row 1 = second endpoint
    label:         optional binary class tag
    """

    node_features: np.ndarray
    edge_features: np.ndarray
    edge_list: np.ndarray
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "node_features", _frozen(self.node_features, np.float64))
        object.__setattr__(self, "edge_features", _frozen(self.edge_features, np.float64))
        object.__setattr__(self, "edge_list", _frozen(self.edge_list, np.int64))

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_list.shape[1] if self.edge_list.ndim == 2 else 0

    @property
    def node_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_dim(self) -> int:
        return self.edge_features.shape[1]

    def equals(self, other: "AttributedGraph") -> bool:
        return (
            self.label == other.label
            and self.node_features.shape == other.node_features.shape
            and self.edge_features.shape == other.edge_features.shape
            and np.array_equal(self.node_features, other.node_features)
            and np.array_equal(self.edge_features, other.edge_features)
            and np.array_equal(self.edge_list, other.edge_list)
        )


def validate_graph(g: AttributedGraph) -> None:
    """Check every structural invariant; raise a specific error naming the offending row."""
    if g.node_features.ndim != 2:
        raise ShapeMismatch(f"node features must be 2-D, got shape {g.node_features.shape}")
    if g.edge_features.ndim != 2:
        raise ShapeMismatch(f"edge features must be 2-D, got shape {g.edge_features.shape}")
    if g.edge_list.ndim != 2 or g.edge_list.shape[0] != 2:
        raise ShapeMismatch(f"edge list must have shape (2, M), got {g.edge_list.shape}")
    n = g.num_nodes
    m = g.num_edges
    if n < 1:
        raise ShapeMismatch("graph must have at least one node")
    if g.edge_features.shape[0] != m:
        raise ShapeMismatch(
            f"edge feature rows ({g.edge_features.shape[0]}) != edge count ({m})"
        )
    if not np.all(np.isfinite(g.node_features)):
        row = int(np.argwhere(~np.isfinite(g.node_features).all(axis=1))[0, 0])
        raise NonFinite(f"node feature row {row} contains NaN/Inf")
    if m and not np.all(np.isfinite(g.edge_features)):
        row = int(np.argwhere(~np.isfinite(g.edge_features).all(axis=1))[0, 0])
        raise NonFinite(f"edge feature row {row} contains NaN/Inf")
    seen: dict[tuple[int, int], int] = {}
    for e in range(m):
        i = int(g.edge_list[0, e])
        j = int(g.edge_list[1, e])
        if not (0 <= i < n and 0 <= j < n):
            raise IndexOutOfRange(f"edge row {e} endpoint ({i},{j}) outside [0,{n})")
        if i == j:
            raise SelfLoop(f"edge row {e} is a self-loop on node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdge(
                f"edge row {e} duplicates undirected pair {key} first seen at row {seen[key]}"
            )
        seen[key] = e


class NeighborIndex:
    """Per-node incidence lists: self[i] = ((j, e), ...) sorted ascending by neighbor j.

    Every undirected edge row e = {i, j} appears exactly twice, once under each
    endpoint, so sum of degrees equals 2M.
    """

    def __init__(self, neighbors: Sequence[Sequence[tuple[int, int]]]):
        self._neighbors = tuple(tuple(lst) for lst in neighbors)
        self._arrays: list[tuple[np.ndarray, np.ndarray]] | None = None

    def __len__(self) -> int:
        return len(self._neighbors)

    def __getitem__(self, i: int) -> tuple[tuple[int, int], ...]:
        return self._neighbors[i]

    def __iter__(self) -> Iterator[tuple[tuple[int, int], ...]]:
        return iter(self._neighbors)

    def degree(self, i: int) -> int:
        return len(self._neighbors[i])

    def arrays(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Node i's (neighbor ids, edge rows) as int arrays; built once, cached."""
        if self._arrays is None:
            self._arrays = [
                (np.fromiter((j for j, _ in lst), dtype=np.int64, count=len(lst)),
                 np.fromiter((e for _, e in lst), dtype=np.int64, count=len(lst)))
                for lst in self._neighbors
            ]
        return self._arrays[i]


def build_neighbor_index(g: AttributedGraph) -> NeighborIndex:
    """Materialize both directions of each stored edge, sorted for determinism."""
    lists: list[list[tuple[int, int]]] = [[] for _ in range(g.num_nodes)]
    for e in range(g.num_edges):
        i = int(g.edge_list[0, e])
        j = int(g.edge_list[1, e])
        lists[i].append((j, e))
        lists[j].append((i, e))
    for lst in lists:
        lst.sort()
    return NeighborIndex(lists)


class GraphArrays:
    """Flat incidence arrays for vectorized message passing and score sums.

    Incidences are laid out in edge-row order (edge e contributes entries 2e and
    2e+1), never re-sorted by node label: per-slot accumulation order is then
    invariant under node relabeling, which keeps aggregation bitwise equivariant.
    """

    __slots__ = ("num_nodes", "num_edges", "src", "dst", "inc_targets",
                 "inc_edges", "inv_degree", "neighbors")

    def __init__(self, g: AttributedGraph):
        n, m = g.num_nodes, g.num_edges
        src = g.edge_list[0]
        dst = g.edge_list[1]
        self.num_nodes = n
        self.num_edges = m
        self.src = np.array(src, dtype=np.int64)
        self.dst = np.array(dst, dtype=np.int64)
        self.inc_targets = np.empty(2 * m, dtype=np.int64)
        self.inc_targets[0::2] = src
        self.inc_targets[1::2] = dst
        self.inc_edges = np.repeat(np.arange(m, dtype=np.int64), 2)
        deg = np.zeros(n, dtype=np.float64)
        np.add.at(deg, self.inc_targets, 1.0)
        inv = np.ones(n, dtype=np.float64)
        nz = deg > 0
        inv[nz] = 1.0 / deg[nz]
        self.inv_degree = inv.reshape(n, 1)
        self.neighbors = build_neighbor_index(g)


@dataclass
class GraphDataset:
    """Ordered collection of graphs sharing feature dimensions."""

    graphs: list[AttributedGraph]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.graphs:
            d = self.graphs[0].node_dim
            de = self.graphs[0].edge_dim
            for k, g in enumerate(self.graphs):
                if g.node_dim != d or g.edge_dim != de:
                    raise DimensionMismatch(
                        f"graph {k} has dims (d={g.node_dim}, d_e={g.edge_dim}), "
                        f"expected (d={d}, d_e={de})"
                    )
            labeled = [g.label is not None for g in self.graphs]
            if any(labeled) and not all(labeled):
                raise ParseError("dataset mixes labeled and unlabeled graphs")

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[AttributedGraph]:
        return iter(self.graphs)

    @property
    def node_dim(self) -> int:
        return self.graphs[0].node_dim

    @property
    def edge_dim(self) -> int:
        return self.graphs[0].edge_dim

    @property
    def labeled(self) -> bool:
        return bool(self.graphs) and self.graphs[0].label is not None

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def equals(self, other: "GraphDataset") -> bool:
        return len(self) == len(other) and all(
            a.equals(b) for a, b in zip(self.graphs, other.graphs)
        )


_REQUIRED_KEYS = ("n", "d", "de", "x", "edges", "l", "label")


def _graph_to_record(g: AttributedGraph) -> dict:
    return {
        "n": g.num_nodes,
        "d": g.node_dim,
        "de": g.edge_dim,
        "x": g.node_features.tolist(),
        "edges": [[int(a), int(b)] for a, b in g.edge_list.T],
        "l": g.edge_features.tolist(),
        "label": int(g.label) if g.label is not None else None,
    }


def _record_to_graph(rec: dict, line_no: int) -> AttributedGraph:
    for key in _REQUIRED_KEYS:
        if key not in rec:
            raise ParseError(f"line {line_no}: missing key '{key}'")
    try:
        x = np.array(rec["x"], dtype=np.float64).reshape(rec["n"], rec["d"])
        l = np.array(rec["l"], dtype=np.float64).reshape(len(rec["edges"]), rec["de"])
        edges = np.array(rec["edges"], dtype=np.int64).reshape(-1, 2).T
    except (TypeError, ValueError) as exc:
        raise ParseError(f"line {line_no}: malformed arrays ({exc})") from exc
    label = rec["label"]
    if label is not None and label not in (0, 1):
        raise ParseError(f"line {line_no}: label must be 0, 1 or null, got {label!r}")
    g = AttributedGraph(x, l, edges, label=None if label is None else int(label))
    try:
        validate_graph(g)
    except Exception as exc:
        raise ParseError(f"line {line_no}: invalid graph ({exc})") from exc
    return g


def save_dataset(ds: GraphDataset, path) -> None:
    """Write one JSON record per graph; floats keep full round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for g in ds.graphs:
            fh.write(json.dumps(_graph_to_record(g)) + "\n")


def load_dataset(path) -> GraphDataset:
    """Parse a JSON-lines dataset file; errors carry the offending line number."""
    graphs: list[AttributedGraph] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: invalid JSON ({exc})") from exc
            graphs.append(_record_to_graph(rec, line_no))
    labels = [g.label is not None for g in graphs]
    if any(labels) and not all(labels):
        missing = labels.index(False) + 1
        raise ParseError(f"line {missing}: graph missing 'label' in a labeled dataset")
    if graphs:
        d, de = graphs[0].node_dim, graphs[0].edge_dim
        for k, g in enumerate(graphs):
            if g.node_dim != d or g.edge_dim != de:
                raise DimensionMismatch(
                    f"line {k + 1}: dims (d={g.node_dim}, d_e={g.edge_dim}) "
                    f"differ from (d={d}, d_e={de})"
                )
    return GraphDataset(graphs)
