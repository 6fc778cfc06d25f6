"""Dataset files, synthetic SBM tasks, splits and the ablation harness.

File formats
------------
edges     UTF-8, one ``u<TAB>v`` per line, 0-based ids, ``#`` lines ignored.
features  one node per line, whitespace-separated reals; line index = id.
subgraphs JSON Lines: ``{"nodes": [...], "label": int | [int, ...]}`` with
          an optional ``"split"`` of ``train``/``val``/``test``.

Without a feature file the node count is one past the largest id seen in
the edge and subgraph files.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .augment import AugmentConfig
from .graph import MULTICLASS, SPLITS, Graph, GraphError, LabelSpec, Subgraph, SubgraphDataset, build_graph
from .model import ModelConfig
from .rng import Stream
from .train import TrainConfig, evaluate, fit

SAMPLERS = ("bfs_ball", "random_walk")


class DatasetFormatError(GraphError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = str(path), line


# -- file I/O --------------------------------------------------------------


def read_edges(path) -> list[tuple[int, int]]:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split("\t")
            if len(parts) != 2:
                raise DatasetFormatError(path, lineno, "expected 'u<TAB>v'")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetFormatError(path, lineno, f"non-integer node id in {text!r}") from None
            if u < 0 or v < 0:
                raise DatasetFormatError(path, lineno, "negative node id")
            edges.append((u, v))
    return edges


def read_features(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                vals = [float(x) for x in line.split()]
            except ValueError:
                raise DatasetFormatError(path, lineno, "non-numeric feature value") from None
            if not vals:
                raise DatasetFormatError(path, lineno, "empty feature line")
            if rows and len(vals) != len(rows[0]):
                raise DatasetFormatError(path, lineno, f"expected {len(rows[0])} values, got {len(vals)}")
            rows.append(vals)
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)


def read_subgraphs(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetFormatError(path, lineno, f"invalid JSON: {err.msg}") from None
            if not isinstance(rec, dict) or "nodes" not in rec or "label" not in rec:
                raise DatasetFormatError(path, lineno, "expected object with 'nodes' and 'label'")
            if not isinstance(rec["nodes"], list) or not all(isinstance(x, int) for x in rec["nodes"]):
                raise DatasetFormatError(path, lineno, "'nodes' must be a list of ints")
            rec["_line"] = lineno
            records.append(rec)
    return records


def infer_label_spec(records: Sequence[dict]) -> LabelSpec:
    """Multilabel if any label is a list; classes = largest label + 1 (at least 2)."""
    multilabel = any(isinstance(r["label"], list) for r in records)
    top = 0
    for r in records:
        lab = r["label"] if isinstance(r["label"], list) else [r["label"]]
        top = max([top, *[int(c) for c in lab]])
    return LabelSpec("multilabel" if multilabel else MULTICLASS, max(top + 1, 2))


def load_dataset(graph_path, feature_path, subgraph_path, label_spec: LabelSpec | None = None) -> SubgraphDataset:
    edges = read_edges(graph_path)
    records = read_subgraphs(subgraph_path)
    if label_spec is None:
        label_spec = infer_label_spec(records)
    if feature_path is not None:
        features = read_features(feature_path)
        n = len(features)
    else:
        features = None
        ids = [x for e in edges for x in e] + [x for r in records for x in r["nodes"]]
        n = max(ids, default=-1) + 1
    for u, v in edges:
        if u >= n or v >= n:
            raise GraphError(f"{graph_path}: edge ({u}, {v}) references a node >= {n}")
    graph = build_graph(n, edges, features)

    subgraphs, labels, split = [], [], []
    for rec in records:
        line = rec["_line"]
        try:
            sub = Subgraph.of(rec["nodes"])
            sub.check(graph)
            labels.append(label_spec.check(rec["label"]))
        except GraphError as err:
            raise DatasetFormatError(subgraph_path, line, str(err)) from None
        s = rec.get("split")
        if s is not None and s not in SPLITS:
            raise DatasetFormatError(subgraph_path, line, f"unknown split {s!r}")
        subgraphs.append(sub)
        split.append(s)
    if any(s is None for s in split):
        if any(s is not None for s in split):
            raise DatasetFormatError(subgraph_path, 0, "either every subgraph has a split or none does")
        split = None
    return SubgraphDataset(graph, subgraphs, labels, label_spec, split)


def write_graph(graph: Graph, edge_path, feature_path=None) -> None:
    with open(edge_path, "w", encoding="utf-8") as fh:
        for u, v in graph.edge_list():
            fh.write(f"{u}\t{v}\n")
    if feature_path is not None:
        with open(feature_path, "w", encoding="utf-8") as fh:
            for row in graph.features.tolist():
                fh.write(" ".join(repr(x) for x in row) + "\n")


def subgraph_record(sub: Subgraph, label, split=None) -> str:
    rec = {"nodes": list(sub.node_ids), "label": list(label) if isinstance(label, tuple) else label}
    if split is not None:
        rec["split"] = split
    return json.dumps(rec)


def save_dataset(dataset: SubgraphDataset, edge_path, feature_path, subgraph_path) -> None:
    write_graph(dataset.graph, edge_path, feature_path)
    split = dataset.split or [None] * len(dataset)
    with open(subgraph_path, "w", encoding="utf-8") as fh:
        for sub, lab, s in zip(dataset.subgraphs, dataset.labels, split):
            fh.write(subgraph_record(sub, lab, s) + "\n")


def summary(dataset: SubgraphDataset) -> dict:
    return {"nodes": dataset.graph.num_nodes, "edges": dataset.graph.num_edges, "subgraphs": len(dataset)}


# -- synthetic SBM tasks ---------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    num_blocks: int = 3
    nodes_per_block: int = 100
    intra_block_edge_prob: float = 0.1
    inter_block_edge_prob: float = 0.005
    num_subgraphs: int = 60
    subgraph_size: int = 8
    sampler: str = "bfs_ball"
    seed: int = 0
    # node features: block indicator (block mod feature_dim) scaled by
    # feature_signal, plus N(0, feature_noise^2) per entry
    feature_dim: int = 8
    feature_signal: float = 1.0
    feature_noise: float = 3.0

    def __post_init__(self):
        if self.num_blocks < 1 or self.nodes_per_block < 1 or self.num_subgraphs < 0:
            raise ValueError("num_blocks, nodes_per_block must be >= 1")
        if not (0 <= self.inter_block_edge_prob < self.intra_block_edge_prob <= 1):
            raise ValueError("need 0 <= inter_block_edge_prob < intra_block_edge_prob <= 1")
        if self.subgraph_size < 2:
            raise ValueError("subgraph_size must be >= 2")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.feature_dim < 1 or self.feature_noise < 0:
            raise ValueError("feature_dim must be >= 1 and feature_noise >= 0")


def sbm_edges(config: SynthConfig) -> np.ndarray:
    """Upper-triangle pairs (row-major order) kept with their block probability."""
    n = config.num_blocks * config.nodes_per_block
    blocks = np.arange(n) // config.nodes_per_block
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(blocks[iu] == blocks[ju], config.intra_block_edge_prob, config.inter_block_edge_prob)
    keep = Stream.root(config.seed, "synth").child(0).uniform(len(iu)) < prob
    return np.stack([iu[keep], ju[keep]], axis=1)


def bfs_ball(graph: Graph, start: int, size: int) -> list[int]:
    """BFS layers from ``start``; the last layer is truncated by ascending id."""
    seen = {start}
    ball = [start]
    layer = [start]
    while layer and len(ball) < size:
        nxt = sorted({int(v) for u in layer for v in graph.neighbors(u)} - seen)
        nxt = nxt[: size - len(ball)]
        seen.update(nxt)
        ball.extend(nxt)
        layer = nxt
    return ball


def random_walk(graph: Graph, start: int, size: int, stream: Stream) -> list[int]:
    """Distinct nodes visited by a walk of at most ``10 * size`` steps."""
    u_steps = stream.uniform(10 * size)
    visited = [start]
    seen = {start}
    cur = start
    for u in u_steps:
        if len(visited) >= size:
            break
        nbrs = graph.neighbors(cur)
        if len(nbrs) == 0:
            break
        cur = int(nbrs[min(int(u * len(nbrs)), len(nbrs) - 1)])
        if cur not in seen:
            seen.add(cur)
            visited.append(cur)
    return visited


def majority_block(nodes: Sequence[int], nodes_per_block: int, num_blocks: int) -> int:
    """Most common block; ties go to the lowest block id."""
    return int(np.argmax(np.bincount(np.asarray(nodes) // nodes_per_block, minlength=num_blocks)))


def synth_dataset(config: SynthConfig, max_attempts: int = 1000) -> SubgraphDataset:
    """SBM base graph with subgraphs labeled by their majority block."""
    n = config.num_blocks * config.nodes_per_block
    root = Stream.root(config.seed, "synth")
    blocks = np.arange(n) // config.nodes_per_block
    features = config.feature_noise * root.child(1).normal(n * config.feature_dim).reshape(n, config.feature_dim)
    features[np.arange(n), blocks % config.feature_dim] += config.feature_signal
    graph = build_graph(n, sbm_edges(config), features)

    subgraphs, labels = [], []
    for s in range(config.num_subgraphs):
        for attempt in range(max_attempts):
            stream = root.child(2, s, attempt)
            start = int(stream.integers(1, n)[0])
            if config.sampler == "bfs_ball":
                nodes = bfs_ball(graph, start, config.subgraph_size)
            else:
                nodes = random_walk(graph, start, config.subgraph_size, stream.child(0))
            if len(nodes) >= 2:
                break
        else:
            raise GraphError(f"could not sample subgraph {s} with at least 2 nodes")
        subgraphs.append(Subgraph.of(nodes))
        labels.append(majority_block(nodes, config.nodes_per_block, config.num_blocks))
    spec = LabelSpec(MULTICLASS, max(config.num_blocks, 2))
    return SubgraphDataset(graph, subgraphs, labels, spec)


def split_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """Floor each share, then give the remainder to train."""
    sizes = [int(math.floor(f * n + 1e-9)) for f in fractions]
    sizes[0] += n - sum(sizes)
    return sizes


def split_dataset(dataset: SubgraphDataset, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> SubgraphDataset:
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    sizes = split_sizes(len(dataset), fractions)
    if min(sizes) < 1:
        raise GraphError(f"{len(dataset)} subgraphs are too few for split sizes {sizes}")
    order = Stream.root(seed, "split").permutation(len(dataset))
    split = [None] * len(dataset)
    names = np.repeat(np.array(SPLITS), sizes)
    for pos, i in enumerate(order):
        split[i] = str(names[pos])
    return replace(dataset, split=tuple(split))


# -- ablation --------------------------------------------------------------

# baselines first, then the unperturbed and multi-view models
STRATEGIES = ("drop_node", "drop_edge", "drop_edge_sub", "plain", "multi_view")
STRATEGY_LABELS = {
    "drop_node": "drop node (whole graph)",
    "drop_edge": "drop edge (whole graph)",
    "drop_edge_sub": "drop edge (subgraph, in place)",
    "plain": "plain",
    "multi_view": "multi-view",
}


def strategy_config(name: str, shared: AugmentConfig) -> AugmentConfig:
    """Augmentation for one ablation strategy, taking rates/views from ``shared``."""
    base = dict(mask_cross_edges=shared.mask_cross_edges, readout_excludes_dropped=shared.readout_excludes_dropped)
    if name == "plain":
        return AugmentConfig(**base)
    if name == "drop_node":
        return AugmentConfig(node_drop_rate=shared.node_drop_rate, in_place="graph", **base)
    if name == "drop_edge":
        return AugmentConfig(edge_drop_rate=shared.edge_drop_rate, in_place="graph", **base)
    if name == "drop_edge_sub":
        return AugmentConfig(edge_drop_rate=shared.edge_drop_rate, in_place="subgraph", **base)
    if name == "multi_view":
        return replace(shared, in_place="none")
    raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGIES}")


def sem(values: Sequence[float]) -> float:
    """Standard error of the mean (sample std / sqrt(n)); 0 for n < 2."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        return 0.0
    return float(v.std(ddof=1) / np.sqrt(len(v)))


@dataclass(frozen=True)
class AblationRow:
    strategy: str
    seeds: tuple
    train_f1: tuple
    val_f1: tuple
    test_f1: tuple

    def scores(self, split: str = "test") -> tuple:
        return getattr(self, f"{split}_f1")

    def mean(self, split: str = "test") -> float:
        return float(np.mean(self.scores(split)))

    def sem(self, split: str = "test") -> float:
        return sem(self.scores(split))


def run_cell(dataset, strategy, augment_config, model_config, train_config, seed) -> dict:
    """Train one (strategy, seed) cell and evaluate every split once at the end."""
    tc = replace(train_config, master_seed=seed, eval_every=max(train_config.epochs, 1))
    params, _ = fit(dataset, strategy_config(strategy, augment_config), model_config, tc, eval_splits=())
    out = {}
    for split in SPLITS:
        rec = evaluate(params, dataset, split, model_config, batch_size=tc.batch_size, seed=seed, epoch=tc.epochs - 1)
        out[split] = rec.micro_f1
    return out


def _run_cell_args(args):
    return run_cell(*args)


def ablation_table(
    dataset: SubgraphDataset,
    strategies: Sequence[str],
    augment_config: AugmentConfig,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seeds: Sequence[int],
    jobs: int = 1,
) -> list[AblationRow]:
    for s in strategies:
        strategy_config(s, augment_config)
    cells = [(dataset, s, augment_config, model_config, train_config, seed) for s in strategies for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_args, cells))
    else:
        results = [run_cell(*c) for c in cells]
    rows = []
    for k, s in enumerate(strategies):
        res = results[k * len(seeds):(k + 1) * len(seeds)]
        rows.append(AblationRow(s, tuple(seeds), *(tuple(r[sp] for r in res) for sp in SPLITS)))
    return rows


def format_table(rows: Sequence[AblationRow], split: str = "test") -> str:
    """Aligned text: one line per strategy, ``mean ± sem`` of micro-F1."""
    head = ("strategy", f"{split} micro-F1", "seeds")
    body = [(STRATEGY_LABELS.get(r.strategy, r.strategy), f"{r.mean(split):.3f} ± {r.sem(split):.3f}", str(len(r.seeds))) for r in rows]
    widths = [max(len(x[i]) for x in [head, *body]) for i in range(3)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() for line in [head, *body]]
    return "\n".join(lines) + "\n"


def format_csv(rows: Sequence[AblationRow], split: str = "test") -> str:
    lines = ["strategy,mean_micro_f1,sem,seeds"]
    lines += [f"{r.strategy},{r.mean(split):.6f},{r.sem(split):.6f},{len(r.seeds)}" for r in rows]
    return "\n".join(lines) + "\n"
