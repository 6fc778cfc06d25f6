"""Multi-view subgraph augmentation for subgraph property prediction."""

from .augment import AugmentConfig, AugmentedBatch, ViewMasks, apply_masks, build_augmented_batch, draw_view_masks, extract_cross_block
from .graph import Graph, GraphError, LabelSpec, Subgraph, SubgraphDataset, build_graph, induced_adjacency, subgraph_features
from .model import ModelConfig, encode, init_params, pool_views, predict, readout
from .rng import Stream
from .train import MetricsRecord, TrainConfig, evaluate, fit, micro_f1

__version__ = "0.1.0"
