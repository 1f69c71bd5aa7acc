"""Experiment drivers: evaluation, the ablation grid, and cross-validation."""

from __future__ import annotations

import csv
import dataclasses

import numpy as np

from .config import AblationConfig, RunConfig
from .data import generate_dataset
from .metrics import compute_metrics, mean_sd, pool_reports
from .model import Segmenter
from .train import train_model

_DATA_TRAIN_KEY, _DATA_EVAL_KEY = 11, 12
METRIC_NAMES = ("dice", "iou", "precision", "sensitivity")


def data_seed(seed, key):
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(key,)).generate_state(1)[0])


def make_datasets(cfg: RunConfig, seed):
    train = generate_dataset(cfg.dataset, cfg.dataset.train_volumes, data_seed(seed, _DATA_TRAIN_KEY))
    evals = generate_dataset(cfg.dataset, cfg.dataset.eval_volumes, data_seed(seed, _DATA_EVAL_KEY))
    return train, evals


def evaluate_model(model: Segmenter, volumes):
    """Per-volume reports plus the pooled (micro-average) report."""
    reports = [compute_metrics(model.predict_volume(v.slices), v.masks) for v in volumes]
    return reports, pool_reports(reports)


def train_and_evaluate(cfg: RunConfig, seed, train_volumes=None, eval_volumes=None):
    if train_volumes is None or eval_volumes is None:
        train_volumes, eval_volumes = make_datasets(cfg, seed)
    model, loss_rows = train_model(cfg, train_volumes, seed)
    reports, pooled = evaluate_model(model, eval_volumes)
    return {"model": model, "loss_rows": loss_rows, "reports": reports, "pooled": pooled}


def run_ablation(cfg: RunConfig, seeds, configs=None):
    """Train every ablation configuration identically across seeds.

    Per seed, all configurations share the same train/eval volumes and
    model seed; only the module toggles differ. Returns per-run rows and
    per-configuration aggregate rows (mean and sd of each metric).
    """
    seeds = list(seeds)
    configs = list(configs) if configs is not None else list(AblationConfig.standard_sequence())
    runs = []
    for seed in seeds:
        train_volumes, eval_volumes = make_datasets(cfg, seed)
        for ablation in configs:
            run_cfg = dataclasses.replace(cfg, ablation=ablation)
            result = train_and_evaluate(run_cfg, seed, train_volumes, eval_volumes)
            row = {"config": ablation.label, "seed": seed}
            row.update(result["pooled"].row())
            runs.append(row)
    aggregate = []
    for ablation in configs:
        rows = [r for r in runs if r["config"] == ablation.label]
        agg = {"config": ablation.label}
        for name in METRIC_NAMES:
            m, sd = mean_sd(r[name] for r in rows)
            agg[f"{name}_mean"] = m
            agg[f"{name}_sd"] = sd
        aggregate.append(agg)
    return runs, aggregate


def cross_validate(cfg: RunConfig, volumes, k=5, seed=0):
    """Subject-wise k-fold split; metrics pooled across held-out folds.

    Fold assignment is a seeded permutation of volume indices; each
    volume is tested exactly once.
    """
    volumes = list(volumes)
    if len(volumes) < k:
        raise ValueError(f"cross_validate: {len(volumes)} volumes < {k} folds")
    order = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(21,))).permutation(len(volumes))
    folds = [sorted(order[i::k].tolist()) for i in range(k)]
    fold_rows = []
    all_reports = []
    for i, held_out in enumerate(folds):
        test = [volumes[j] for j in held_out]
        train = [volumes[j] for j in range(len(volumes)) if j not in held_out]
        model, _ = train_model(cfg, train, seed)
        reports, pooled = evaluate_model(model, test)
        all_reports.extend(reports)
        row = {"fold": i, "test_volumes": len(test)}
        row.update(pooled.row())
        fold_rows.append(row)
    return fold_rows, pool_reports(all_reports), folds


# ---------------------------------------------------------------------
# CSV output (deterministic: repr round-trip floats, fixed column order)
# ---------------------------------------------------------------------

def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns])


def _format(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)
