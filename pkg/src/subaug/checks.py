"""Random small instances for finite-difference gradient checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, AugmentedBatch, build_augmented_batch
from .graph import MULTICLASS, MULTILABEL, LabelSpec, Subgraph, build_graph
from .model import ModelConfig, init_params
from .rng import Stream
from .train import gradcheck


@dataclass
class GradCase:
    params: dict
    batch: AugmentedBatch
    y: np.ndarray
    model_config: ModelConfig
    label_spec: LabelSpec

    def describe(self) -> str:
        c = self.model_config
        return (f"{self.label_spec.task_kind} pool={c.view_pool} L={c.num_layers} act={c.activation} "
                f"nodes={self.batch.total_nodes} views={self.batch.num_views}")


# (task kind, view pool, layers) grid cycled through by case index
GRID = list(itertools.product((MULTICLASS, MULTILABEL), ("mean", "sum", "max"), (0, 1, 2)))


def random_case(index: int, seed: int = 0, max_nodes: int = 12, num_layers: int | None = None) -> GradCase:
    """Instance ``index``: random graph (<= max_nodes), 1-2 subgraphs, 0-2 views, float64."""
    rng = np.random.default_rng([seed, index])
    kind, pool, layers = GRID[index % len(GRID)]
    if num_layers is not None:
        layers = num_layers
    n = int(rng.integers(4, max_nodes + 1))
    d = int(rng.integers(1, 4))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.35]
    graph = build_graph(n, edges, rng.normal(size=(n, d)))
    subs = [Subgraph.of(rng.choice(n, size=int(rng.integers(2, min(5, n) + 1)), replace=False))
            for _ in range(int(rng.integers(1, 3)))]
    aug = AugmentConfig(
        num_views=int(rng.integers(0, 3)),
        node_drop_rate=float(rng.uniform(0, 0.4)),
        edge_drop_rate=float(rng.uniform(0, 0.4)),
        mask_cross_edges=bool(rng.integers(0, 2)),
    )
    batch = build_augmented_batch(graph, subs, aug, Stream.root(seed, "mask").child(index, 0))
    c = int(rng.integers(2, 4))
    spec = LabelSpec(kind, c)
    if kind == MULTICLASS:
        labels = [int(rng.integers(0, c)) for _ in subs]
    else:
        labels = [tuple(np.flatnonzero(rng.random(c) < 0.5).tolist()) for _ in subs]
    config = ModelConfig(
        input_dim=d, output_dim=c, num_layers=layers, hidden_dim=int(rng.integers(2, 5)),
        activation=("tanh", "relu")[index % 2], view_pool=pool,
        node_readout=("mean", "sum")[int(rng.integers(0, 2))],
        head_hidden_dims=tuple(int(h) for h in rng.integers(2, 4, size=int(rng.integers(0, 2)))),
        dtype="float64",
    )
    params = init_params(config, seed * 1000 + index)
    # non-zero biases so every path carries signal
    for name, p in params.items():
        p += 0.1 * rng.normal(size=p.shape)
    return GradCase(params, batch, spec.indicator(labels), config, spec)


def check_case(case: GradCase, step: float = 1e-5, corrupt: str | None = None) -> dict[str, float]:
    return gradcheck(case.params, case.batch, case.y, case.model_config, case.label_spec, step=step, corrupt=corrupt)
