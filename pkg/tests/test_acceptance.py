"""Acceptance gate: seven criteria, each checked at its stated count, tolerance and time budget.

Every criterion prints one ``PASS``/``FAIL`` line; the lines are repeated in
the pytest terminal summary. Run standalone with ``python3 tests/test_acceptance.py``.
"""

import time
from pathlib import Path

import numpy as np

from conftest import random_graph
from oracles import dense_drop, expected_augmented_dense, micro_f1_bruteforce, oracle_masks, permuted_batch
from subaug.augment import AugmentConfig, ViewMasks, apply_masks, build_augmented_batch
from subaug.checks import GRID, check_case, random_case
from subaug.cli import main
from subaug.data import SynthConfig, ablation_table, split_dataset, synth_dataset
from subaug.graph import MULTICLASS, LabelSpec, Subgraph, induced_adjacency
from subaug.model import ModelConfig, forward, init_params, pool_views
from subaug.rng import Stream
from subaug.train import TrainConfig, micro_f1, predictions

RESULTS: list[str] = []


def report(number: int, ok: bool, elapsed: float, limit: float, detail: str) -> None:
    passed = ok and elapsed < limit
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail} ({elapsed:.1f}s, limit {limit:g}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line
    assert elapsed < limit, line


def random_subgraphs(rng, n, max_size, count):
    return [Subgraph.of(rng.choice(n, size=int(rng.integers(1, min(n, max_size) + 1)), replace=False))
            for _ in range(count)]


# -- 1. block structure ------------------------------------------------------


def test_criterion_1_block_structure():
    start = time.perf_counter()
    bad = 0
    for seed in range(200):
        rng = np.random.default_rng([1, seed])
        n = int(rng.integers(2, 31))
        g = random_graph(rng, n, p=float(rng.uniform(0.05, 0.5)))
        subs = random_subgraphs(rng, n, 8, int(rng.integers(1, 4)))
        cfg = AugmentConfig(num_views=int(rng.integers(1, 4)), node_drop_rate=float(rng.uniform(0, 1)),
                            edge_drop_rate=float(rng.uniform(0, 1)))
        b = build_augmented_batch(g, subs, cfg, Stream.root(seed, "mask").child(0, 0))
        dense = b.graph.dense_adjacency()
        base = g.dense_adjacency()
        nb = b.base_num_nodes
        ok = np.array_equal(dense[:nb, :nb], base)
        for i, s in enumerate(subs):
            ids = list(s.node_ids)
            a_s = induced_adjacency(g, s)
            ne = int(np.triu(a_s, 1).sum())
            for v in range(1, cfg.num_views + 1):
                nm, em = oracle_masks(len(ids), ne, cfg.node_drop_rate, cfg.edge_drop_rate, (seed, 0, 0, i, v))
                c = b.clone_ids(i, v)
                ok &= np.array_equal(dense[np.ix_(c, np.arange(nb))], base[ids, :])
                ok &= np.array_equal(dense[np.ix_(np.arange(nb), c)], base[ids, :].T)
                ok &= np.array_equal(dense[np.ix_(c, c)], dense_drop(a_s, nm, em))
        full = expected_augmented_dense(base, [list(s.node_ids) for s in subs], cfg.num_views,
                                        cfg.node_drop_rate, cfg.edge_drop_rate, (seed, 0, 0))
        ok &= np.array_equal(dense, full)
        bad += not ok
    report(1, bad == 0, time.perf_counter() - start, 10, f"block structure {200 - bad}/200 triples exact")


# -- 2. mask semantics -------------------------------------------------------


def test_criterion_2_mask_semantics():
    start = time.perf_counter()
    bad = 0
    for seed in range(500):
        rng = np.random.default_rng([2, seed])
        n = int(rng.integers(1, 13))
        a = np.triu((rng.random((n, n)) < rng.uniform(0.1, 0.9)).astype(np.int64), 1)
        a = a + a.T
        ne = int(np.triu(a, 1).sum())
        nm = rng.random(n) < rng.uniform(0, 1)
        em = rng.random(ne) < rng.uniform(0, 1)
        bad += not np.array_equal(apply_masks(a, ViewMasks(nm, em)), dense_drop(a, nm, em))
    report(2, bad == 0, time.perf_counter() - start, 5, f"apply_masks {500 - bad}/500 subgraphs exact")


# -- 3. gradient check -------------------------------------------------------


def test_criterion_3_gradients():
    start = time.perf_counter()
    count = max(20, len(GRID))
    worst, failing = 0.0, []
    for i in range(count):
        errs = check_case(random_case(i), step=1e-5)
        worst = max(worst, max(errs.values()))
        failing += [f"case {i} {k}" for k, e in errs.items() if e >= 1e-4]
    detail = f"gradcheck {count - len({f.split()[1] for f in failing})}/{count} cases, max rel err {worst:.2e} < 1e-4"
    report(3, not failing, time.perf_counter() - start, 60, detail)


# -- 4. determinism ----------------------------------------------------------


def test_criterion_4_determinism(tmp_path):
    start = time.perf_counter()
    flags = ["train", "--epochs", "20", "--views", "2", "--node-drop", "0.2", "--edge-drop", "0.2", "--seeds", "0..9"]
    codes = [main([*flags, "--out", str(tmp_path / run)]) for run in ("a", "b")]
    names = [f"metrics_seed{s}.jsonl" for s in range(10)]
    a = [(tmp_path / "a" / n).read_bytes() for n in names]
    b = [(tmp_path / "b" / n).read_bytes() for n in names]
    identical = a == b
    distinct = len(set(a))
    ok = codes == [0, 0] and identical and distinct == 10
    report(4, ok, time.perf_counter() - start, 120,
           f"reruns byte-identical={identical}, {distinct}/10 distinct seed files")


# -- 5. desk-scale protocol --------------------------------------------------


def test_criterion_5_protocol():
    start = time.perf_counter()
    ds = split_dataset(synth_dataset(SynthConfig()), (0.7, 0.15, 0.15), seed=0)
    mc = ModelConfig(input_dim=ds.graph.feature_dim, output_dim=ds.label_spec.num_classes)
    shared = AugmentConfig(num_views=2, node_drop_rate=0.2, edge_drop_rate=0.2)
    rows = ablation_table(ds, ["plain", "multi_view", "drop_edge_sub"], shared, mc, TrainConfig(epochs=200), range(10))
    plain, multi, sub = rows
    fitted = sum(f >= 0.9 for f in plain.train_f1)
    a = fitted >= 8
    b = multi.mean() >= plain.mean() - 0.05
    c = sub.mean() <= multi.mean()
    detail = (f"(a) plain train F1>=0.9 on {fitted}/10 seeds {'ok' if a else 'FAIL'}; "
              f"(b) multi-view {multi.mean():.3f}±{multi.sem():.3f} vs plain {plain.mean():.3f}±{plain.sem():.3f} "
              f"{'ok' if b else 'FAIL'}; (c) drop-edge-sub {sub.mean():.3f}±{sub.sem():.3f} "
              f"{'ok' if c else 'FAIL'}")
    report(5, a and b and c, time.perf_counter() - start, 600, detail)


# -- 6. micro-F1 -------------------------------------------------------------


def test_criterion_6_micro_f1():
    start = time.perf_counter()
    bad = 0
    spec = LabelSpec(MULTICLASS, 4)
    for seed in range(1000):
        rng = np.random.default_rng([6, seed])
        b, c = int(rng.integers(1, 11)), int(rng.integers(1, 11))
        pred, truth = rng.integers(0, 2, (b, c)), rng.integers(0, 2, (b, c))
        bad += micro_f1(pred, truth) != micro_f1_bruteforce(pred.tolist(), truth.tolist())
        logits = rng.normal(size=(b, 4))
        labels = rng.integers(0, 4, b)
        acc = sum(int(np.argmax(row) == t) for row, t in zip(logits, labels)) / b
        bad += micro_f1(predictions(logits, spec), spec.indicator(labels)) != acc
    report(6, bad == 0, time.perf_counter() - start, 5, f"micro-F1 {2000 - bad}/2000 checks exact (brute force + accuracy)")


# -- 7. invariant suite ------------------------------------------------------


def _case(seed, views=2, p_node=None, p_edge=None):
    rng = np.random.default_rng([7, seed])
    n = int(rng.integers(3, 16))
    g = random_graph(rng, n, p=float(rng.uniform(0.1, 0.5)), d=3)
    subs = random_subgraphs(rng, n, n, int(rng.integers(1, 3)))
    cfg = AugmentConfig(
        num_views=views,
        node_drop_rate=float(rng.uniform(0, 0.6)) if p_node is None else p_node,
        edge_drop_rate=float(rng.uniform(0, 0.6)) if p_edge is None else p_edge,
    )
    b = build_augmented_batch(g, subs, cfg, Stream.root(seed, "mask").child(0, 0))
    mc = ModelConfig(input_dim=3, output_dim=3, num_layers=int(rng.integers(0, 3)), hidden_dim=4,
                     view_pool=("mean", "sum", "max")[seed % 3], node_readout=("mean", "sum")[seed % 2],
                     head_hidden_dims=(3,), dtype="float64")
    return rng, g, subs, b, mc, init_params(mc, seed)


def _symmetry(seed):
    _, _, _, b, _, _ = _case(seed)
    d = b.graph.dense_adjacency()
    return np.array_equal(d, d.T) and not np.diag(d).any()


def _equivariance(seed):
    rng, _, _, b, mc, params = _case(seed)
    perm = rng.permutation(b.total_nodes)
    f1, f2 = forward(params, b, mc), forward(params, permuted_batch(b, perm), mc)
    return np.allclose(f1.views, f2.views, rtol=1e-12, atol=1e-12) and np.allclose(f1.logits, f2.logits, rtol=1e-12, atol=1e-12)


def _view_order(seed):
    rng, _, _, b, mc, params = _case(seed, views=3)
    views = forward(params, b, mc).views
    order = np.concatenate([[0], 1 + rng.permutation(3)])
    return np.allclose(pool_views(views, mc.view_pool), pool_views(views[:, order], mc.view_pool), rtol=1e-14, atol=1e-14)


def _k0_identity(seed):
    _, _, _, b, mc, params = _case(seed, views=0)
    f = forward(params, b, mc)
    return f.views.shape[1] == 1 and np.array_equal(f.pooled, f.views[:, 0])


def _zero_rate(seed):
    _, g, subs, b, _, _ = _case(seed, p_node=0.0, p_edge=0.0)
    d = b.graph.dense_adjacency()
    base = g.dense_adjacency()
    nb = b.base_num_nodes
    ok = True
    for i, s in enumerate(subs):
        for v in (1, 2):
            c = b.clone_ids(i, v)
            ok &= np.array_equal(d[np.ix_(c, c)], induced_adjacency(g, s))
            ok &= np.array_equal(d[np.ix_(c, np.arange(nb))], base[list(s.node_ids), :])
            ok &= len(b.readout_sets[i][v]) == len(s.node_ids)
    return ok


def _dropped_view(seed):
    _, _, subs, b, mc, params = _case(seed, p_node=1.0)
    f = forward(params, b, mc)
    return not f.views[:, 1:].any() and all(len(b.readout_sets[i][v]) == 0 for i in range(len(subs)) for v in (1, 2))


INVARIANTS = {
    "symmetry": _symmetry,
    "permutation equivariance": _equivariance,
    "view-order invariance": _view_order,
    "k=0 identity": _k0_identity,
    "zero-rate faithfulness": _zero_rate,
    "fully-dropped view is zero": _dropped_view,
}


def test_criterion_7_invariants():
    start = time.perf_counter()
    counts = {name: sum(bool(check(seed)) for seed in range(100)) for name, check in INVARIANTS.items()}
    detail = "; ".join(f"{name} {k}/100" for name, k in counts.items())
    report(7, all(k == 100 for k in counts.values()), time.perf_counter() - start, 60, detail)


if __name__ == "__main__":
    import sys
    import tempfile

    failures = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
