"""Label-aware message passing encoder, view pooling and prediction head.

One layer maps node states ``H`` to::

    Z_i = H_i W[g] + bW[g] + M_i U[g] + bU[g],   g = labeling[i]
    H'_i = act(Z_i)

where ``M_i`` is the mean of the neighbor states of node ``i`` (zero for
isolated nodes). View embeddings are a mean or sum over each view's readout
set, fused across views per subgraph, then fed to an MLP head producing
unnormalized logits.

The backward pass is written out by hand and mirrors :func:`forward` step by
step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .augment import AugmentedBatch
from .rng import Stream

ACTIVATIONS = ("relu", "tanh")
VIEW_POOLS = ("mean", "sum", "max")
NODE_READOUTS = ("mean", "sum")


class DivergenceError(FloatingPointError):
    """A forward or backward quantity became non-finite."""


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    output_dim: int
    num_layers: int = 2
    hidden_dim: int = 32
    activation: str = "relu"
    view_pool: str = "mean"
    node_readout: str = "mean"
    head_hidden_dims: tuple = (32,)
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "head_hidden_dims", tuple(int(h) for h in self.head_hidden_dims))
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if min(self.input_dim, self.output_dim, self.hidden_dim, *self.head_hidden_dims, 1) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.view_pool not in VIEW_POOLS:
            raise ValueError(f"view_pool must be one of {VIEW_POOLS}")
        if self.node_readout not in NODE_READOUTS:
            raise ValueError(f"node_readout must be one of {NODE_READOUTS}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def embed_dim(self) -> int:
        return self.hidden_dim if self.num_layers else self.input_dim


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    d = config.input_dim
    for layer in range(config.num_layers):
        for g in (0, 1):
            shapes[f"conv{layer}.W{g}"] = (d, config.hidden_dim)
            shapes[f"conv{layer}.bW{g}"] = (config.hidden_dim,)
            shapes[f"conv{layer}.U{g}"] = (d, config.hidden_dim)
            shapes[f"conv{layer}.bU{g}"] = (config.hidden_dim,)
        d = config.hidden_dim
    dims = [config.embed_dim, *config.head_hidden_dims, config.output_dim]
    for j, (a, b) in enumerate(zip(dims, dims[1:])):
        shapes[f"head{j}.W"] = (a, b)
        shapes[f"head{j}.b"] = (b,)
    return shapes


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases. Each weight has its own stream."""
    root = Stream.root(seed, "init")
    params = {}
    for idx, (name, shape) in enumerate(param_shapes(config).items()):
        if len(shape) == 1:
            params[name] = np.zeros(shape, dtype=config.dtype)
            continue
        s = np.sqrt(6.0 / (shape[0] + shape[1]))
        u = root.child(idx).uniform(shape[0] * shape[1])
        params[name] = ((2.0 * u - 1.0) * s).reshape(shape).astype(config.dtype)
    return params


def check_params(params: dict[str, np.ndarray], config: ModelConfig) -> None:
    shapes = param_shapes(config)
    if set(params) != set(shapes):
        raise ValueError(f"parameter names do not match config: {sorted(set(params) ^ set(shapes))}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
        if not np.all(np.isfinite(params[name])):
            raise DivergenceError(f"{name} has non-finite entries")


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(x, 0) if kind == "relu" else np.tanh(x)


def _act_grad(z: np.ndarray, out: np.ndarray, kind: str) -> np.ndarray:
    return (z > 0).astype(z.dtype) if kind == "relu" else 1.0 - out * out


def mean_aggregator(adjacency: sp.spmatrix, dtype="float64") -> sp.csr_matrix:
    """Row-normalized adjacency; isolated nodes get an all-zero row."""
    a = sp.csr_matrix(adjacency, dtype=dtype)
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.diags(inv.astype(dtype)) @ a


def readout_matrix(batch: AugmentedBatch, mode: str, dtype="float64") -> sp.csr_matrix:
    """Sparse ``(subgraphs * views, nodes)`` pooling matrix, subgraph-major."""
    rows, cols, vals = [], [], []
    r = 0
    for views in batch.readout_sets:
        for ids in views:
            if len(ids):
                rows.append(np.full(len(ids), r))
                cols.append(np.asarray(ids))
                vals.append(np.full(len(ids), 1.0 / len(ids) if mode == "mean" else 1.0))
            r += 1
    if not rows:
        return sp.csr_matrix((r, batch.total_nodes), dtype=dtype)
    return sp.csr_matrix(
        (np.concatenate(vals).astype(dtype), (np.concatenate(rows), np.concatenate(cols))),
        shape=(r, batch.total_nodes),
    )


def encode(batch: AugmentedBatch, params, config: ModelConfig, _cache: list | None = None) -> np.ndarray:
    """Node embeddings after ``num_layers`` label-conditioned layers."""
    h = batch.features.astype(config.dtype)
    if h.shape[1] != config.input_dim:
        raise ValueError(f"feature dim {h.shape[1]} != model input_dim {config.input_dim}")
    if config.num_layers == 0:
        return h
    agg = mean_aggregator(batch.adjacency, config.dtype)
    lab = batch.labeling.astype(bool)
    for layer in range(config.num_layers):
        p = lambda n: params[f"conv{layer}.{n}"]
        m = agg @ h
        z0 = h @ p("W0") + p("bW0") + m @ p("U0") + p("bU0")
        z1 = h @ p("W1") + p("bW1") + m @ p("U1") + p("bU1")
        z = np.where(lab[:, None], z1, z0)
        out = _act(z, config.activation)
        if not np.all(np.isfinite(out)):
            raise DivergenceError(f"non-finite activation in layer {layer}")
        if _cache is not None:
            _cache.append((h, m, z, out))
        h = out
    return h


def readout(node_embeddings: np.ndarray, readout_set, mode: str = "mean") -> np.ndarray:
    """Pool one view's node rows; an empty set gives the zero vector."""
    ids = np.asarray(readout_set, dtype=np.int64)
    if len(ids) == 0:
        return np.zeros(node_embeddings.shape[1], dtype=node_embeddings.dtype)
    rows = node_embeddings[ids]
    return rows.mean(axis=0) if mode == "mean" else rows.sum(axis=0)


def pool_views(view_embeddings: np.ndarray, mode: str = "mean") -> np.ndarray:
    """Fuse view embeddings along axis -2 (views)."""
    v = np.asarray(view_embeddings)
    if mode == "mean":
        return v.mean(axis=-2)
    if mode == "sum":
        return v.sum(axis=-2)
    return v.max(axis=-2)


def predict(h: np.ndarray, params, config: ModelConfig, _cache: list | None = None) -> np.ndarray:
    """MLP head; hidden layers use the model activation, the last is linear."""
    a = h
    nhead = len(config.head_hidden_dims) + 1
    for j in range(nhead):
        w, b = params[f"head{j}.W"], params[f"head{j}.b"]
        if a.shape[-1] != w.shape[0]:
            raise ValueError(f"head{j}: input dim {a.shape[-1]} != {w.shape[0]}")
        z = a @ w + b
        out = z if j == nhead - 1 else _act(z, config.activation)
        if _cache is not None:
            _cache.append((a, z, out))
        a = out
    return a


@dataclass
class ForwardCache:
    batch: AugmentedBatch
    layers: list
    head: list
    readout: sp.csr_matrix
    views: np.ndarray  # (B, V, h)
    pooled: np.ndarray
    logits: np.ndarray


def forward(params, batch: AugmentedBatch, config: ModelConfig) -> ForwardCache:
    layers: list = []
    h = encode(batch, params, config, layers)
    r = readout_matrix(batch, config.node_readout, config.dtype)
    nviews = batch.num_views + 1
    views = np.asarray(r @ h).reshape(batch.num_subgraphs, nviews, h.shape[1])
    pooled = pool_views(views, config.view_pool)
    head: list = []
    logits = predict(pooled, params, config, head)
    if not np.all(np.isfinite(logits)):
        raise DivergenceError("non-finite logits")
    return ForwardCache(batch, layers, head, r, views, pooled, logits)


def backward(cache: ForwardCache, dlogits: np.ndarray, params, config: ModelConfig) -> dict[str, np.ndarray]:
    """Gradients of ``sum(dlogits * logits)`` with respect to every parameter."""
    grads: dict[str, np.ndarray] = {}
    nhead = len(config.head_hidden_dims) + 1
    d = np.asarray(dlogits, dtype=config.dtype)
    for j in reversed(range(nhead)):
        a, z, out = cache.head[j]
        if j != nhead - 1:
            d = d * _act_grad(z, out, config.activation)
        grads[f"head{j}.W"] = a.T @ d
        grads[f"head{j}.b"] = d.sum(axis=0)
        d = d @ params[f"head{j}.W"].T

    views = cache.views
    if config.view_pool == "mean":
        dviews = np.repeat(d[:, None, :] / views.shape[1], views.shape[1], axis=1)
    elif config.view_pool == "sum":
        dviews = np.repeat(d[:, None, :], views.shape[1], axis=1)
    else:
        winner = np.argmax(views, axis=1)
        dviews = np.zeros_like(views)
        np.put_along_axis(dviews, winner[:, None, :], d[:, None, :], axis=1)
    dh = np.asarray(cache.readout.T @ dviews.reshape(-1, views.shape[2]))

    if config.num_layers:
        agg = mean_aggregator(cache.batch.adjacency, config.dtype)
        lab = cache.batch.labeling.astype(bool)
        sel = (~lab, lab)
        for layer in reversed(range(config.num_layers)):
            h, m, z, out = cache.layers[layer]
            dz = dh * _act_grad(z, out, config.activation)
            dh_new = np.zeros_like(h)
            dm = np.zeros_like(m)
            for g in (0, 1):
                rows = sel[g]
                dzg = dz[rows]
                grads[f"conv{layer}.W{g}"] = h[rows].T @ dzg
                grads[f"conv{layer}.U{g}"] = m[rows].T @ dzg
                grads[f"conv{layer}.bW{g}"] = dzg.sum(axis=0)
                grads[f"conv{layer}.bU{g}"] = dzg.sum(axis=0)
                dh_new[rows] += dzg @ params[f"conv{layer}.W{g}"].T
                dm[rows] += dzg @ params[f"conv{layer}.U{g}"].T
            dh = dh_new + np.asarray(agg.T @ dm)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
    return {name: grads[name] for name in param_shapes(config)}


# -- checkpoints -----------------------------------------------------------
#
# Layout: the ASCII line "SUBAUG-CKPT 1\n", then one line of JSON (sorted
# keys) with "model" (ModelConfig fields), "seed", "epoch", "extra" and
# "arrays" = [{"name", "dtype", "shape"}, ...], then the raw little-endian
# C-order bytes of each array in the listed order.

CKPT_MAGIC = b"SUBAUG-CKPT 1\n"


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    seed: int
    epoch: int
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    arrays = [(name, np.ascontiguousarray(ckpt.params[name])) for name in param_shapes(ckpt.config)]
    header = {
        "model": asdict(ckpt.config),
        "seed": int(ckpt.seed),
        "epoch": int(ckpt.epoch),
        "extra": ckpt.extra,
        "arrays": [{"name": n, "dtype": a.dtype.newbyteorder("<").str, "shape": list(a.shape)} for n, a in arrays],
    }
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for _, a in arrays:
            fh.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(CKPT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    nl = raw.index(b"\n", len(CKPT_MAGIC))
    header = json.loads(raw[len(CKPT_MAGIC):nl])
    config = ModelConfig(**header["model"])
    pos = nl + 1
    params = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        a = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(spec["shape"])
        params[spec["name"]] = a.astype(dt.newbyteorder("="))
        pos += count * dt.itemsize
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    check_params(params, config)
    return Checkpoint(config, params, header["seed"], header["epoch"], header.get("extra", {}))

