"""Command line entry point: ``subaug <command> [flags]``.

Exit codes: 0 success, 1 validation error, 2 divergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path


from . import data
from .augment import build_augmented_batch
from .checks import random_case, check_case
from .config import ConfigError, RunConfig, describe_defaults, parse_seeds
from .graph import GraphError, SubgraphDataset
from .model import Checkpoint, load_checkpoint, save_checkpoint
from .rng import Stream
from .train import TrainingDiverged, evaluate, fit

log = logging.getLogger("subaug")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

EDGES, FEATURES, SUBGRAPHS, CLONES = "edges.tsv", "features.txt", "subgraphs.jsonl", "clones.jsonl"


# -- shared helpers --------------------------------------------------------


def effective_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        name, value = item.split("=", 1)
        section, key = name.split(".", 1)
        cfg.set(section, key, value)
    flag_map = {
        "epochs": ("train", "epochs"),
        "views": ("augment", "num_views"),
        "node_drop": ("augment", "node_drop_rate"),
        "edge_drop": ("augment", "edge_drop_rate"),
    }
    for attr, (section, key) in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg.set(section, key, value)
    if getattr(args, "seed", None) is not None:
        target = ("synth", "seed") if args.command == "synth" else ("train", "master_seed")
        cfg.set(*target, args.seed)
    cfg.validate()
    return cfg


def write_config(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")


def load_data(cfg: RunConfig, data_dir: str | None) -> SubgraphDataset:
    """Dataset from ``--data DIR``, else ``[data]`` paths, else ``[synth]``; split if unsplit."""
    if data_dir:
        d = Path(data_dir)
        feats = d / FEATURES
        ds = data.load_dataset(d / EDGES, feats if feats.exists() else None, d / SUBGRAPHS, cfg.label_spec())
    elif cfg.get("data", "edges"):
        ds = data.load_dataset(
            cfg.get("data", "edges"), cfg.get("data", "features") or None, cfg.get("data", "subgraphs"), cfg.label_spec()
        )
    else:
        ds = data.synth_dataset(cfg.synth_config())
    if ds.split is None:
        ds = data.split_dataset(ds, cfg.get("data", "split"), cfg.get("data", "split_seed"))
    return ds


def model_config_for(cfg: RunConfig, ds: SubgraphDataset):
    return cfg.model_config(ds.graph.feature_dim, ds.label_spec.num_classes)


def seeds_of(args, cfg: RunConfig) -> tuple[int, ...]:
    if getattr(args, "seeds", None):
        return parse_seeds(args.seeds)
    return (cfg.get("train", "master_seed"),)


# -- commands --------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    ds = data.synth_dataset(cfg.synth_config())
    ds = data.split_dataset(ds, cfg.get("data", "split"), cfg.get("data", "split_seed"))
    write_config(cfg, out)
    data.save_dataset(ds, out / EDGES, out / FEATURES, out / SUBGRAPHS)
    s = data.summary(ds)
    print(f"nodes={s['nodes']} edges={s['edges']} subgraphs={s['subgraphs']}")
    return EXIT_OK


def cmd_augment(args, cfg: RunConfig) -> int:
    ds = load_data(cfg, args.data)
    if args.subgraphs:
        idx = [int(x) for x in args.subgraphs.split(",")]
    else:
        idx = list(range(min(cfg.get("train", "batch_size"), len(ds))))
    for i in idx:
        if not 0 <= i < len(ds):
            raise ConfigError(f"subgraph index {i} out of range")
    aug = cfg.augment_config()
    root = Stream.root(cfg.get("train", "master_seed"), "mask").child(args.epoch, args.batch)
    batch = build_augmented_batch(ds.graph, [ds.subgraphs[i] for i in idx], aug, root)
    out = Path(args.out)
    write_config(cfg, out)
    data.write_graph(batch.graph, out / EDGES, out / FEATURES)
    with open(out / SUBGRAPHS, "w", encoding="utf-8") as fh:
        for k, views in enumerate(batch.readout_sets):
            lab = ds.labels[idx[k]]
            for v, ids in enumerate(views):
                rec = {"nodes": [int(x) for x in ids], "label": list(lab) if isinstance(lab, tuple) else lab,
                       "subgraph": k, "view": v}
                fh.write(json.dumps(rec) + "\n")
    with open(out / CLONES, "w", encoding="utf-8") as fh:
        for j, (sub, view, orig) in enumerate(batch.clone_map.tolist()):
            rec = {"clone_id": batch.base_num_nodes + j, "subgraph": sub, "view": view, "original": orig}
            fh.write(json.dumps(rec) + "\n")
    (out / "labeling.txt").write_text("".join(f"{x}\n" for x in batch.labeling.tolist()), encoding="utf-8")
    print(f"total_nodes={batch.total_nodes} edges={batch.graph.num_edges} clones={len(batch.clone_map)}")
    return EXIT_OK


def _strategy_augment(args, cfg: RunConfig):
    aug = cfg.augment_config()
    if getattr(args, "strategy", None):
        names = args.strategy.split(",")
        if len(names) != 1:
            raise ConfigError("train takes a single --strategy")
        aug = data.strategy_config(names[0], aug)
    return aug


def cmd_train(args, cfg: RunConfig) -> int:
    ds = load_data(cfg, args.data)
    mc = model_config_for(cfg, ds)
    try:
        aug = _strategy_augment(args, cfg)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    out = Path(args.out)
    write_config(cfg, out)
    status = EXIT_OK
    for seed in seeds_of(args, cfg):
        tc = replace(cfg.train_config(), master_seed=seed)
        metrics_path = out / f"metrics_seed{seed}.jsonl"
        with open(metrics_path, "w", encoding="utf-8") as fh:
            def on_record(rec, fh=fh):
                fh.write(rec.to_json() + "\n")
                if rec.split == "fit":
                    fh.flush()
            try:
                params, history = fit(ds, aug, mc, tc, on_record=on_record)
            except TrainingDiverged as err:
                fh.write(json.dumps({"diverged": err.diagnostic}, sort_keys=True) + "\n")
                log.error("seed %d: %s", seed, err)
                status = EXIT_DIVERGED
                continue
        epochs_done = 1 + max((r.epoch for r in history), default=-1)
        ckpt = Checkpoint(mc, params, seed, epochs_done, extra={"config": cfg.to_ini()})
        save_checkpoint(out / f"checkpoint_seed{seed}.ckpt", ckpt)
        final = [r for r in history if r.split != "fit" and r.epoch == epochs_done - 1]
        summary = " ".join(f"{r.split}={r.micro_f1:.4f}" for r in final)
        print(f"seed={seed} epochs={epochs_done} {summary}".rstrip())
    return status


def cmd_eval(args, cfg: RunConfig) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_data(cfg, args.data)
    mc = ckpt.config
    if mc.input_dim != ds.graph.feature_dim or mc.output_dim != ds.label_spec.num_classes:
        raise ConfigError("checkpoint dimensions do not match the dataset")
    tc = cfg.train_config()
    rec = evaluate(ckpt.params, ds, args.split, mc, batch_size=tc.batch_size, seed=ckpt.seed, epoch=ckpt.epoch - 1,
                   augment_config=cfg.augment_config(), draws=tc.eval_draws)
    print(rec.to_json())
    if args.out:
        out = Path(args.out)
        write_config(cfg, out)
        with open(out / "eval.jsonl", "a", encoding="utf-8") as fh:
            fh.write(rec.to_json() + "\n")
    return EXIT_OK


def cmd_ablate(args, cfg: RunConfig) -> int:
    ds = load_data(cfg, args.data)
    mc = model_config_for(cfg, ds)
    strategies = tuple(args.strategy.split(",")) if args.strategy else cfg.get("ablate", "strategies")
    seeds = parse_seeds(args.seeds) if args.seeds else cfg.get("ablate", "seeds")
    split = cfg.get("ablate", "metric_split")
    try:
        rows = data.ablation_table(ds, strategies, cfg.augment_config(), mc, cfg.train_config(), seeds,
                                   jobs=cfg.get("ablate", "jobs"))
    except ValueError as err:
        raise ConfigError(str(err)) from None
    out = Path(args.out)
    write_config(cfg, out)
    table = data.format_table(rows, split)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    (out / "ablation.csv").write_text(data.format_csv(rows, split), encoding="utf-8")
    with open(out / "cells.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            for k, seed in enumerate(r.seeds):
                rec = {"strategy": r.strategy, "seed": seed, "train": r.train_f1[k], "val": r.val_f1[k], "test": r.test_f1[k]}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(table, end="")
    return EXIT_OK


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    n = cfg.get("gradcheck", "instances")
    tol = cfg.get("gradcheck", "tolerance")
    step = cfg.get("gradcheck", "step")
    layers = args.layers
    worst, failed, bad_cases = 0.0, [], 0
    lines = []
    for i in range(n):
        case = random_case(i, cfg.get("gradcheck", "seed"), cfg.get("gradcheck", "max_nodes"), num_layers=layers)
        corrupt = args.corrupt_gradient if args.corrupt_gradient in case.params else None
        errs = check_case(case, step=step, corrupt=corrupt)
        name = max(errs, key=errs.get)
        worst = max(worst, errs[name])
        ok = errs[name] < tol
        lines.append(f"{'PASS' if ok else 'FAIL'} case {i}: {case.describe()} max_rel_err={errs[name]:.3e} ({name})")
        if not ok:
            bad_cases += 1
            failed.extend(f"case {i}: {p} rel_err={e:.3e}" for p, e in errs.items() if e >= tol)
    lines.append(f"max relative error {worst:.3e} (tolerance {tol:g}); {n - bad_cases}/{n} cases pass")
    lines += [f"offending parameter {f}" for f in failed]
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        out = Path(args.out)
        write_config(cfg, out)
        (out / "gradcheck.txt").write_text(report, encoding="utf-8")
    return EXIT_INVALID if failed else EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subaug",
        description="Multi-view subgraph augmentation: synthesis, augmentation, training, evaluation, ablation.",
        epilog=describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", metavar="PATH", help="sectioned key = value config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config key (repeatable)")
        p.add_argument("--out", metavar="DIR", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="master seed (synth: generator seed)")
        p.formatter_class = argparse.RawDescriptionHelpFormatter
        p.epilog = describe_defaults()

    def data_flag(p):
        p.add_argument("--data", metavar="DIR", help=f"directory with {EDGES}, {FEATURES}, {SUBGRAPHS}")

    def aug_flags(p):
        p.add_argument("--views", type=int, help="augmented views per subgraph (augment.num_views)")
        p.add_argument("--node-drop", type=float, help="augment.node_drop_rate")
        p.add_argument("--edge-drop", type=float, help="augment.edge_drop_rate")

    p = sub.add_parser("synth", help="write a synthetic SBM dataset")
    common(p)

    p = sub.add_parser("augment", help="dump one assembled multi-view batch")
    common(p)
    data_flag(p)
    aug_flags(p)
    p.add_argument("--subgraphs", help="comma-separated subgraph indices (default: first batch_size)")
    p.add_argument("--epoch", type=int, default=0, help="epoch slot of the mask stream")
    p.add_argument("--batch", type=int, default=0, help="batch slot of the mask stream")

    p = sub.add_parser("train", help="train and write metrics + checkpoint per seed")
    common(p)
    data_flag(p)
    aug_flags(p)
    p.add_argument("--epochs", type=int, help="train.epochs")
    p.add_argument("--seeds", help="seed list, e.g. 0,1,2 or 0..9 (one output per seed)")
    p.add_argument("--strategy", help="apply an ablation strategy's augmentation")

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    common(p, out_required=False)
    data_flag(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))

    p = sub.add_parser("ablate", help="strategy x seed table of mean micro-F1 +- SEM")
    common(p)
    data_flag(p)
    aug_flags(p)
    p.add_argument("--epochs", type=int, help="train.epochs")
    p.add_argument("--seeds", help="seed list (default ablate.seeds)")
    p.add_argument("--strategy", help="comma-separated strategies (default ablate.strategies)")

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    common(p, out_required=False)
    p.add_argument("--layers", type=int, help="force the layer count of every case")
    p.add_argument("--corrupt-gradient", metavar="PARAM", help=argparse.SUPPRESS)
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "augment": cmd_augment,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; keep 2 reserved for divergence
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = effective_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, GraphError, ValueError, KeyError) as err:
        log.error("%s", err)
        return EXIT_INVALID
    except OSError as err:
        log.error("%s", err)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
