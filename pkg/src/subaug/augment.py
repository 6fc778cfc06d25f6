"""Stochastic subgraph views and multi-view batch assembly.

For each subgraph in a batch, ``num_views`` perturbed clones are appended to
the base graph. With ``N`` base nodes and a clone block of size ``s`` the
assembled adjacency is::

    [ A     A_l^T  ]
    [ A_l   A_drop ]

where ``A_l`` holds the base-graph adjacency rows of the subgraph's nodes and
``A_drop`` is the induced subgraph adjacency after node and edge dropping.
Clone blocks of different views and subgraphs never connect to each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import Graph, GraphError, Subgraph, csr_from_pairs, induced_adjacency, induced_edges
from .rng import Stream

IN_PLACE_MODES = ("none", "graph", "subgraph")

# subgraph slot used for whole-graph in-place masks
WHOLE_GRAPH = 0xFFFFFFFF


@dataclass(frozen=True)
class AugmentConfig:
    num_views: int = 0
    node_drop_rate: float = 0.0
    edge_drop_rate: float = 0.0
    mask_cross_edges: bool = False
    readout_excludes_dropped: bool = True
    # "none": multi-view cloning; "graph"/"subgraph": perturb the batch
    # graph itself without clones (ablation baselines, needs num_views == 0)
    in_place: str = "none"

    def __post_init__(self):
        if self.num_views < 0:
            raise ValueError("num_views must be >= 0")
        for name in ("node_drop_rate", "edge_drop_rate"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.in_place not in IN_PLACE_MODES:
            raise ValueError(f"in_place must be one of {IN_PLACE_MODES}")
        if self.in_place != "none" and self.num_views:
            raise ValueError("in-place perturbation requires num_views == 0")


@dataclass(frozen=True)
class ViewMasks:
    node_mask: np.ndarray  # True = dropped
    edge_mask: np.ndarray  # over canonical induced edges, True = dropped


@dataclass(frozen=True)
class AugmentedBatch:
    graph: Graph
    base_num_nodes: int
    num_views: int
    clone_map: np.ndarray  # (num_clones, 3): subgraph, view, original id
    readout_sets: tuple  # [subgraph][view] -> node id array; view 0 is the original
    labeling: np.ndarray
    masks: tuple  # [subgraph][view - 1] -> ViewMasks (empty for in-place batches)

    @property
    def total_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_subgraphs(self) -> int:
        return len(self.readout_sets)

    @property
    def adjacency(self) -> sp.csr_matrix:
        return self.graph.adjacency()

    @property
    def features(self) -> np.ndarray:
        return self.graph.features

    def clone_ids(self, subgraph: int, view: int) -> np.ndarray:
        sel = (self.clone_map[:, 0] == subgraph) & (self.clone_map[:, 1] == view)
        return self.base_num_nodes + np.flatnonzero(sel)


def draw_view_masks(subgraph_size: int, induced_edge_count: int, config: AugmentConfig, stream: Stream) -> ViewMasks:
    """Node flags use the first ``subgraph_size`` uniforms, edges the next ones."""
    u = stream.uniform(subgraph_size + induced_edge_count)
    return ViewMasks(u[:subgraph_size] < config.node_drop_rate, u[subgraph_size:] < config.edge_drop_rate)


def apply_masks(a_s: np.ndarray, masks: ViewMasks) -> np.ndarray:
    a_s = np.asarray(a_s)
    n = a_s.shape[0]
    edges = induced_edges(a_s)
    if a_s.shape != (n, n) or len(masks.node_mask) != n or len(masks.edge_mask) != len(edges):
        raise GraphError("mask shapes do not match subgraph adjacency")
    out = a_s.copy()
    dropped = np.asarray(masks.node_mask, dtype=bool)
    out[dropped, :] = 0
    out[:, dropped] = 0
    u, v = edges[np.asarray(masks.edge_mask, dtype=bool)].T
    out[u, v] = 0
    out[v, u] = 0
    return out


def extract_cross_block(graph: Graph, subgraph: Subgraph) -> sp.csr_matrix:
    """Base adjacency rows of the subgraph's nodes, shape ``|V_S| x N``."""
    subgraph.check(graph)
    return graph.adjacency()[subgraph.ids()]


def _gather_rows(graph: Graph, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(local row index, neighbor id) for every adjacency entry in ``ids``' rows."""
    starts, stops = graph.indptr[ids], graph.indptr[ids + 1]
    counts = stops - starts
    local = np.repeat(np.arange(len(ids)), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    return local, graph.indices[np.repeat(starts, counts) + offsets]


def build_augmented_batch(
    graph: Graph,
    batch: Sequence[Subgraph],
    config: AugmentConfig,
    rng_root: Stream | None = None,
) -> AugmentedBatch:
    """Assemble the multi-view batch graph.

    ``rng_root`` is the per-batch stream ``(seed, epoch, batch_index)``; the
    view of subgraph ``i`` draws from ``rng_root.child(i, view)``. It may be
    omitted only when no masks are drawn.
    """
    if not batch:
        raise GraphError("batch must be non-empty")
    for s in batch:
        s.check(graph)
    if config.in_place != "none":
        return _in_place_batch(graph, batch, config, rng_root)

    n = graph.num_nodes
    drawing = config.num_views > 0 and (config.node_drop_rate > 0 or config.edge_drop_rate > 0)
    if drawing and rng_root is None:
        raise ValueError("rng_root required when drop rates are non-zero")

    base_rows = np.repeat(np.arange(n), graph.degrees())
    rows, cols = [base_rows], [graph.indices]
    feats = [graph.features]
    clone_map, readouts, all_masks = [], [], []
    offset = n
    for i, sub in enumerate(batch):
        ids = sub.ids()
        a_s = induced_adjacency(graph, sub)
        num_edges = int(np.triu(a_s, 1).sum())
        local, nbr = _gather_rows(graph, ids)
        views = [ids]
        sub_masks = []
        for v in range(1, config.num_views + 1):
            if drawing:
                masks = draw_view_masks(len(ids), num_edges, config, rng_root.child(i, v))
            else:
                masks = ViewMasks(np.zeros(len(ids), bool), np.zeros(num_edges, bool))
            sub_masks.append(masks)
            a_drop = apply_masks(a_s, masks)
            u, w = np.nonzero(a_drop)
            rows.append(offset + u)
            cols.append(offset + w)
            keep = ~masks.node_mask[local] if config.mask_cross_edges else np.ones(len(local), bool)
            rows += [offset + local[keep], nbr[keep]]
            cols += [nbr[keep], offset + local[keep]]
            feats.append(graph.features[ids])
            clone_map.append(np.stack([np.full(len(ids), i), np.full(len(ids), v), ids], axis=1))
            clones = offset + np.arange(len(ids))
            views.append(clones[~masks.node_mask] if config.readout_excludes_dropped else clones)
            offset += len(ids)
        readouts.append(tuple(views))
        all_masks.append(tuple(sub_masks))

    indptr, indices = csr_from_pairs(offset, np.concatenate(rows), np.concatenate(cols))
    labeling = np.zeros(offset, dtype=np.int64)
    labeling[n:] = 1
    labeling[np.concatenate([s.ids() for s in batch])] = 1
    cmap = np.concatenate(clone_map).astype(np.int64) if clone_map else np.zeros((0, 3), dtype=np.int64)
    return AugmentedBatch(
        graph=Graph(offset, indptr, indices, np.concatenate(feats)),
        base_num_nodes=n,
        num_views=config.num_views,
        clone_map=cmap,
        readout_sets=tuple(readouts),
        labeling=labeling,
        masks=tuple(all_masks),
    )


def _in_place_batch(graph: Graph, batch: Sequence[Subgraph], config: AugmentConfig, rng_root: Stream | None) -> AugmentedBatch:
    """Perturb the batch graph directly (no clones, no preserved original view).

    ``"subgraph"`` masks each subgraph's induced edges with the stream its
    first augmented view would use; ``"graph"`` masks every node and edge of
    the base graph with the stream at subgraph slot ``WHOLE_GRAPH``, and a
    dropped node loses all of its edges.
    """
    n = graph.num_nodes
    drawing = config.node_drop_rate > 0 or config.edge_drop_rate > 0
    if drawing and rng_root is None:
        raise ValueError("rng_root required when drop rates are non-zero")
    code_edges = []  # undirected (u < v) codes to remove
    dropped_nodes = np.zeros(n, dtype=bool)
    if drawing and config.in_place == "graph":
        edges = np.asarray(graph.edge_list(), dtype=np.int64).reshape(-1, 2)
        masks = draw_view_masks(n, len(edges), config, rng_root.child(WHOLE_GRAPH, 1))
        dropped_nodes |= masks.node_mask
        gone = masks.edge_mask | masks.node_mask[edges[:, 0]] | masks.node_mask[edges[:, 1]]
        code_edges.append(edges[gone, 0] * n + edges[gone, 1])
    elif drawing:
        for i, sub in enumerate(batch):
            ids = sub.ids()
            a_s = induced_adjacency(graph, sub)
            local_edges = induced_edges(a_s)
            masks = draw_view_masks(len(ids), len(local_edges), config, rng_root.child(i, 1))
            a_drop = apply_masks(a_s, masks)
            u, v = np.nonzero(np.triu(a_s - a_drop, 1))
            code_edges.append(ids[u] * n + ids[v])
            dropped_nodes[ids[masks.node_mask]] = True
            if config.mask_cross_edges and masks.node_mask.any():
                local, nbr = _gather_rows(graph, ids)
                hit = masks.node_mask[local]
                a, b = ids[local[hit]], nbr[hit]
                code_edges.append(np.minimum(a, b) * n + np.maximum(a, b))

    rows = np.repeat(np.arange(n), graph.degrees())
    cols = graph.indices
    if code_edges:
        remove = np.concatenate(code_edges)
        code = np.minimum(rows, cols) * n + np.maximum(rows, cols)
        keep = ~np.isin(code, remove)
        rows, cols = rows[keep], cols[keep]
    indptr, indices = csr_from_pairs(n, rows, cols)
    readouts = []
    for sub in batch:
        ids = sub.ids()
        if config.readout_excludes_dropped:
            ids = ids[~dropped_nodes[ids]]
        readouts.append((ids,))
    labeling = np.zeros(n, dtype=np.int64)
    labeling[np.concatenate([s.ids() for s in batch])] = 1
    return AugmentedBatch(
        graph=Graph(n, indptr, indices, graph.features),
        base_num_nodes=n,
        num_views=0,
        clone_map=np.zeros((0, 3), dtype=np.int64),
        readout_sets=tuple(readouts),
        labeling=labeling,
        masks=(),
    )
