"""Immutable graph, subgraph and dataset types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp

MULTICLASS = "multiclass"
MULTILABEL = "multilabel"
SPLITS = ("train", "val", "test")

Label = Union[int, tuple[int, ...]]


class GraphError(ValueError):
    """Raised for malformed graphs, subgraphs, labels or datasets."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Graph:
    """Undirected simple graph in CSR form with a dense feature matrix.

    Build through :func:`build_graph`; the constructor trusts its inputs
    unless ``validate=True``.
    """

    __slots__ = ("num_nodes", "indptr", "indices", "features", "_csr")

    def __init__(self, num_nodes: int, indptr, indices, features, *, validate: bool = False):
        self.num_nodes = int(num_nodes)
        self.indptr = _frozen(np.ascontiguousarray(indptr, dtype=np.int64))
        self.indices = _frozen(np.ascontiguousarray(indices, dtype=np.int64))
        self.features = _frozen(np.array(features, dtype=np.float64, ndmin=2))
        self._csr = None
        if validate:
            self.check()

    def check(self) -> None:
        n = self.num_nodes
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise GraphError("malformed CSR row pointer")
        if np.any(np.diff(self.indptr) < 0):
            raise GraphError("malformed CSR row pointer")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphError("neighbor id out of range")
        rows = np.repeat(np.arange(n), np.diff(self.indptr))
        if np.any(rows == self.indices):
            raise GraphError("self-loop in adjacency")
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (self.indices[1:] <= self.indices[:-1])):
            raise GraphError("neighbor lists must be strictly ascending")
        a = self.adjacency()
        if (a != a.T).nnz:
            raise GraphError("adjacency is not symmetric")
        if self.features.shape[0] != n or self.features.shape[1] < 1:
            raise GraphError(f"features must have {n} rows and at least one column")
        if not np.all(np.isfinite(self.features)):
            raise GraphError("non-finite feature value")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return len(self.indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self) -> sp.csr_matrix:
        """The adjacency as a scipy CSR matrix (cached, 0/1 int8 data)."""
        if self._csr is None:
            data = np.ones(len(self.indices), dtype=np.int8)
            self._csr = sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_nodes, self.num_nodes))
        return self._csr

    def dense_adjacency(self) -> np.ndarray:
        return self.adjacency().toarray().astype(np.int64)

    def edge_list(self) -> list[tuple[int, int]]:
        """Undirected edges as ``(u, v)`` with ``u < v``, sorted."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        keep = rows < self.indices
        return list(zip(rows[keep].tolist(), self.indices[keep].tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, feature_dim={self.feature_dim})"


def csr_from_pairs(num_nodes: int, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted, deduplicated CSR arrays for directed pairs ``rows -> cols``."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    code = np.unique(rows * num_nodes + cols)
    r, c = np.divmod(code, num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=num_nodes), out=indptr[1:])
    return indptr, c


def build_graph(num_nodes: int, edge_list: Iterable[Sequence[int]], features=None) -> Graph:
    """Validated construction from an undirected edge list.

    Duplicate and reversed edges collapse; self-loops are rejected. Missing
    features become a single all-ones column.
    """
    num_nodes = int(num_nodes)
    if num_nodes < 0:
        raise GraphError("num_nodes must be non-negative")
    edges = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if len(edges):
        if edges.min() < 0 or edges.max() >= num_nodes:
            bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
            raise GraphError(f"edge endpoint out of range: ({bad[0]}, {bad[1]}) with {num_nodes} nodes")
        loops = edges[:, 0] == edges[:, 1]
        if loops.any():
            raise GraphError(f"self-loop on node {edges[loops][0, 0]}")
    if features is None:
        features = np.ones((num_nodes, 1))
    else:
        features = np.array(features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        if features.ndim != 2 or features.shape[0] != num_nodes:
            raise GraphError(f"features must have {num_nodes} rows, got shape {features.shape}")
        if features.shape[1] < 1:
            raise GraphError("features need at least one column")
        if not np.all(np.isfinite(features)):
            raise GraphError("non-finite feature value")
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    indptr, indices = csr_from_pairs(num_nodes, rows, cols)
    return Graph(num_nodes, indptr, indices, features)


@dataclass(frozen=True)
class Subgraph:
    """Strictly ascending node ids into a parent graph; edges are induced."""

    node_ids: tuple[int, ...]

    def __post_init__(self):
        ids = tuple(int(i) for i in self.node_ids)
        if not ids:
            raise GraphError("subgraph must be non-empty")
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise GraphError("subgraph node ids must be strictly ascending")
        object.__setattr__(self, "node_ids", ids)

    @classmethod
    def of(cls, nodes: Iterable[int]) -> "Subgraph":
        """Build from any iterable of ids, sorting; duplicates are an error."""
        ids = sorted(int(i) for i in nodes)
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node id in subgraph")
        return cls(tuple(ids))

    def __len__(self) -> int:
        return len(self.node_ids)

    def ids(self) -> np.ndarray:
        return np.asarray(self.node_ids, dtype=np.int64)

    def check(self, graph: Graph) -> None:
        if self.node_ids[0] < 0 or self.node_ids[-1] >= graph.num_nodes:
            raise GraphError(f"subgraph node id out of range for graph with {graph.num_nodes} nodes")


def induced_adjacency(graph: Graph, subgraph: Subgraph) -> np.ndarray:
    subgraph.check(graph)
    ids = subgraph.ids()
    return graph.adjacency()[ids][:, ids].toarray().astype(np.int64)


def subgraph_features(graph: Graph, subgraph: Subgraph) -> np.ndarray:
    subgraph.check(graph)
    return graph.features[subgraph.ids()]


def induced_edges(a_s: np.ndarray) -> np.ndarray:
    """Canonical induced edge order: local ``(u, v)``, ``u < v``, lexicographic."""
    u, v = np.nonzero(np.triu(a_s, 1))
    return np.stack([u, v], axis=1)


@dataclass(frozen=True)
class LabelSpec:
    task_kind: str
    num_classes: int

    def __post_init__(self):
        if self.task_kind not in (MULTICLASS, MULTILABEL):
            raise GraphError(f"unknown task kind {self.task_kind!r}")
        if self.num_classes < 1:
            raise GraphError("num_classes must be positive")

    def check(self, label) -> Label:
        """Normalize and validate one label."""
        if self.task_kind == MULTICLASS:
            if isinstance(label, (list, tuple)) or not float(label).is_integer():
                raise GraphError(f"multiclass label must be an int, got {label!r}")
            label = int(label)
            if not 0 <= label < self.num_classes:
                raise GraphError(f"label {label} outside [0, {self.num_classes})")
            return label
        if not isinstance(label, (list, tuple)):
            raise GraphError(f"multilabel label must be a list, got {label!r}")
        out = tuple(sorted(set(int(c) for c in label)))
        for c in out:
            if not 0 <= c < self.num_classes:
                raise GraphError(f"label {c} outside [0, {self.num_classes})")
        return out

    def indicator(self, labels: Sequence[Label]) -> np.ndarray:
        """Labels as an ``(n, C)`` 0/1 matrix."""
        y = np.zeros((len(labels), self.num_classes))
        for i, lab in enumerate(labels):
            if self.task_kind == MULTICLASS:
                y[i, lab] = 1.0
            else:
                y[i, list(lab)] = 1.0
        return y


@dataclass(frozen=True)
class SubgraphDataset:
    graph: Graph
    subgraphs: tuple[Subgraph, ...]
    labels: tuple
    label_spec: LabelSpec
    split: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "subgraphs", tuple(self.subgraphs))
        labels = tuple(self.label_spec.check(lab) for lab in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) != len(self.subgraphs):
            raise GraphError("subgraphs and labels differ in length")
        for s in self.subgraphs:
            s.check(self.graph)
        if self.split is not None:
            split = tuple(self.split)
            if len(split) != len(self.subgraphs):
                raise GraphError("split and subgraphs differ in length")
            for name in split:
                if name not in SPLITS:
                    raise GraphError(f"unknown split {name!r}")
            object.__setattr__(self, "split", split)

    def __len__(self) -> int:
        return len(self.subgraphs)

    def indices(self, split: str) -> np.ndarray:
        if self.split is None:
            raise GraphError("dataset has no split assignment")
        return np.array([i for i, s in enumerate(self.split) if s == split], dtype=np.int64)
