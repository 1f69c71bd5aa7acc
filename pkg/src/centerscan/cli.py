"""Command-line entry points.

Subcommands: scan-dump, kernel-analyze, train, eval, ablate, xval.
All take --config (JSON run config), --seed, --out; every output file
is bitwise reproducible given the same seed and config.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config, run_config_to_json
from .data import generate_dataset
from .harness import (
    METRIC_NAMES,
    cross_validate,
    evaluate_model,
    make_datasets,
    run_ablation,
    write_csv,
)
from .model import Segmenter
from .scan import PriorityParams, Strategy, build_listing, partition, serialize_paths
from .ssm import CenterScanBlock, block_effective_kernel
from .train import train_model
from .viz import render_kernel_heatmap, render_loss_curve, render_scan_figure


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    if args.config:
        return load_run_config(args.config)
    return RunConfig()


def cmd_scan_dump(args):
    cfg = _load_config(args)
    scan = cfg.scan
    grid_h, grid_w = scan.grid_h, scan.grid_w
    if args.grid:
        grid_h, grid_w = (int(v) for v in args.grid.lower().split("x"))
    region_size = args.region_size or scan.region_size
    strategy = Strategy(args.strategy or scan.strategy)
    part = partition(grid_h, grid_w, region_size)
    text = serialize_paths(part, strategy, cfg.priority)
    out = _outdir(args)
    (out / "scan_paths.txt").write_text(text)
    if args.figure:
        listing = build_listing(part, strategy, cfg.priority)
        render_scan_figure(listing, out / args.figure)
    sys.stdout.write(text)
    return 0


def cmd_kernel_analyze(args):
    cfg = _load_config(args)
    region_size = args.region_size or cfg.scan.region_size
    strategy = Strategy(args.strategy or cfg.scan.strategy)
    rng = np.random.default_rng(args.seed)
    block = CenterScanBlock(
        channels=1, state_dim=1, rng=rng, region_size=region_size,
        strategy=strategy, priority_params=cfg.priority,
        decay_logit=_logit(args.decay) if args.decay is not None else 1.0)
    kernel = block_effective_kernel(block)
    out = _outdir(args)
    rows = [
        {"row": r, "col": c, "weight": w, "scan_position": i + 1}
        for i, ((r, c), w) in enumerate(zip(kernel.cells, kernel.weights))
    ]
    write_csv(out / "kernel.csv", rows, ["row", "col", "weight", "scan_position"])
    render_kernel_heatmap(kernel.cells, kernel.weights, region_size,
                          out / "kernel.png",
                          title=f"{strategy.value} effective kernel")
    for row in rows:
        sys.stdout.write(f"({row['row']},{row['col']}) -> {row['weight']:.6f}\n")
    return 0


def _logit(p):
    if not 0.0 < p < 1.0:
        raise SystemExit(f"--decay must lie strictly inside (0, 1), got {p}")
    return float(np.log(p / (1.0 - p)))


def _loss_columns(cfg):
    cols = ["step", "total"]
    for j in range(1, cfg.encoder.num_stages + 1):
        cols += [f"dice{j}", f"focal{j}"]
    return cols


def cmd_train(args):
    cfg = _load_config(args)
    out = _outdir(args)
    train_volumes, eval_volumes = make_datasets(cfg, args.seed)
    model, loss_rows = train_model(cfg, train_volumes, args.seed)
    write_csv(out / "loss.csv", loss_rows, _loss_columns(cfg))
    render_loss_curve(loss_rows, out / "loss.png")
    save_checkpoint(out / "model.ckpt", model.checkpoint_entries())
    reports, pooled = evaluate_model(model, eval_volumes)
    _write_metrics(out / "metrics.csv", reports, pooled)
    sys.stdout.write(f"trained {cfg.train.steps} steps; eval dice {pooled.dice:.4f}\n")
    return 0


def _write_metrics(path, reports, pooled):
    rows = []
    for i, r in enumerate(reports):
        row = {"volume": str(i)}
        row.update(r.row())
        rows.append(row)
    pooled_row = {"volume": "pooled"}
    pooled_row.update(pooled.row())
    rows.append(pooled_row)
    write_csv(path, rows, ["volume", *METRIC_NAMES])


def cmd_eval(args):
    cfg = _load_config(args)
    out = _outdir(args)
    model = Segmenter(cfg, seed=args.seed)
    if args.checkpoint:
        model.load_entries(load_checkpoint(args.checkpoint))
    _, eval_volumes = make_datasets(cfg, args.seed)
    reports, pooled = evaluate_model(model, eval_volumes)
    _write_metrics(out / "metrics.csv", reports, pooled)
    if args.dump_memory:
        # Re-run the last volume to leave the stores populated, then dump.
        model.predict_volume(eval_volumes[-1].slices)
        entries = {}
        for name, arr in model.priors.memory.dump("priors.").items():
            entries[name] = (arr, False)
        for j, store in enumerate(model.decoder.stores):
            for name, arr in store.dump(f"decoder.level{j + 1}.").items():
                entries[name] = (arr, False)
        save_checkpoint(out / "memory.ckpt", entries)
    sys.stdout.write(f"eval dice {pooled.dice:.4f} over {len(reports)} volumes\n")
    return 0


def cmd_ablate(args):
    cfg = _load_config(args)
    out = _outdir(args)
    seeds = [args.seed + i for i in range(args.seeds)]
    runs, aggregate = run_ablation(cfg, seeds)
    run_cols = ["config", "seed", *METRIC_NAMES]
    agg_cols = ["config"]
    for name in METRIC_NAMES:
        agg_cols += [f"{name}_mean", f"{name}_sd"]
    write_csv(out / "ablation_runs.csv", runs, run_cols)
    write_csv(out / "ablation.csv", aggregate, agg_cols)
    for row in aggregate:
        sys.stdout.write(
            f"{row['config']:>8}: dice {row['dice_mean']:.4f} +/- {row['dice_sd']:.4f}\n")
    return 0


def cmd_xval(args):
    cfg = _load_config(args)
    out = _outdir(args)
    volumes = generate_dataset(cfg.dataset,
                               cfg.dataset.train_volumes + cfg.dataset.eval_volumes,
                               args.seed)
    fold_rows, pooled, _ = cross_validate(cfg, volumes, k=args.folds, seed=args.seed)
    write_csv(out / "xval_folds.csv", fold_rows, ["fold", "test_volumes", *METRIC_NAMES])
    pooled_row = {"volume": "pooled"}
    pooled_row.update(pooled.row())
    write_csv(out / "metrics.csv", [pooled_row], ["volume", *METRIC_NAMES])
    sys.stdout.write(f"{args.folds}-fold dice {pooled.dice:.4f}\n")
    return 0


def cmd_show_config(args):
    cfg = _load_config(args)
    sys.stdout.write(run_config_to_json(cfg))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="centerscan",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("scan-dump", help="serialize region scan paths")
    common(p)
    p.add_argument("--grid", help="HxW override, e.g. 6x6")
    p.add_argument("--region-size", type=int, dest="region_size")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--figure", help="also render an arrow diagram (svg/png filename)")
    p.set_defaults(func=cmd_scan_dump)

    p = sub.add_parser("kernel-analyze", help="measure a block's effective kernel")
    common(p)
    p.add_argument("--region-size", type=int, dest="region_size")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--decay", type=float, help="pin the decay a in (0,1)")
    p.set_defaults(func=cmd_kernel_analyze)

    p = sub.add_parser("train", help="train a model on synthetic volumes")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on held-out volumes")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint to load")
    p.add_argument("--dump-memory", action="store_true", dest="dump_memory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the module-toggle ablation grid")
    common(p)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("xval", help="subject-wise cross-validation")
    common(p)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_xval)

    p = sub.add_parser("show-config", help="print the effective run config")
    common(p)
    p.set_defaults(func=cmd_show_config)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
