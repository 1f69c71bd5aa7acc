"""Adam optimizer and the slice-window training loop."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .config import RunConfig
from .decoder import hierarchical_loss
from .model import Segmenter

_LOOP_KEY = 4


class Adam:
    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_step(model: Segmenter, optimizer: Adam, volume, start_slice, cfg: RunConfig):
    """One optimizer step over a window of consecutive slices.

    The model's memories are cleared at the window start, stay live
    inside the window (so memory projections receive gradient from later
    slices reading earlier writes), and are detached after the update.
    """
    window = min(cfg.train.batch_slices, volume.slices.shape[0])
    model.start_volume()
    total = None
    detail_sums = {}
    for t in range(start_slice, start_slice + window):
        image = Tensor(volume.slices[t][None, None])
        preds = model.forward_slice(image, t)
        loss, details = hierarchical_loss(preds, volume.masks[t], cfg.loss)
        total = loss if total is None else total + loss
        for k, val in details.items():
            detail_sums[k] = detail_sums.get(k, 0.0) + val
    total = total * (1.0 / window)
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    model.detach_memories()
    means = {k: val / window for k, val in detail_sums.items()}
    return total.item(), means


def train_model(cfg: RunConfig, volumes, seed):
    """Train a fresh model; returns (model, loss_rows) for the loss CSV."""
    model = Segmenter(cfg, seed=seed)
    optimizer = Adam(model.trainable().values(), lr=cfg.train.lr)
    drops = set(cfg.train.drop_steps())
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(_LOOP_KEY,)))
    rows = []
    num_levels = cfg.encoder.num_stages
    for step in range(cfg.train.steps):
        if step in drops:
            optimizer.lr *= 0.5
        volume = volumes[int(rng.integers(len(volumes)))]
        span = volume.slices.shape[0] - min(cfg.train.batch_slices, volume.slices.shape[0])
        start = int(rng.integers(0, span + 1)) if span > 0 else 0
        loss, details = train_step(model, optimizer, volume, start, cfg)
        row = {"step": step, "total": loss}
        for j in range(1, num_levels + 1):
            row[f"dice{j}"] = details.get(f"dice{j}", 0.0)
            row[f"focal{j}"] = details.get(f"focal{j}", 0.0)
        rows.append(row)
    return model, rows
