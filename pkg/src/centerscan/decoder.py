"""Progressive upsampling decoder with per-level context memory and
deep supervision.

Each level concatenates its encoder skip, doubles resolution with a
stride-2 transposed convolution, optionally refines through a per-level
prototype store (same read/write mechanism as the prior generator, one
store per level), and emits class logits. The training objective sums a
soft overlap term and a focusing term over all levels after resizing
every prediction to the ground-truth extent.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .config import AblationConfig, LossConfig
from .priors import PrototypeMemory, memory_read_rows


class DecoderLevel:
    def __init__(self, channels, out_classes, rng):
        self.up_weight = Tensor(
            rng.normal(scale=(2 * channels) ** -0.5, size=(2 * channels, channels, 2, 2)),
            requires_grad=True)
        self.up_bias = Tensor(np.zeros(channels), requires_grad=True)
        self.norm_gain = Tensor(np.ones(channels), requires_grad=True)
        self.norm_bias = Tensor(np.zeros(channels), requires_grad=True)
        self.mem_key_proj = Tensor(rng.normal(scale=channels ** -0.5, size=(channels, channels)),
                                   requires_grad=True)
        self.mem_value_proj = Tensor(rng.normal(scale=channels ** -0.5, size=(channels, channels)),
                                     requires_grad=True)
        self.head_weight = Tensor(rng.normal(scale=channels ** -0.5, size=(channels, out_classes)),
                                  requires_grad=True)
        self.head_bias = Tensor(np.zeros(out_classes), requires_grad=True)

    def named(self, prefix=""):
        names = ("up_weight up_bias norm_gain norm_bias mem_key_proj "
                 "mem_value_proj head_weight head_bias").split()
        return {prefix + n: getattr(self, n) for n in names}


class MemoryDecoder:
    """Four-level cascade; level 1 is the finest output."""

    def __init__(self, channels, out_classes, rng, num_levels=4, memory_capacity=8):
        self.channels = channels
        self.out_classes = out_classes
        self.levels = [DecoderLevel(channels, out_classes, rng) for _ in range(num_levels)]
        self.stores = [PrototypeMemory(memory_capacity) for _ in range(num_levels)]
        self.tau = float(np.sqrt(channels))

    def named(self, prefix=""):
        out = {}
        for j, level in enumerate(self.levels):
            out.update(level.named(f"{prefix}level{j + 1}."))
        return out

    def reset_memory(self):
        for store in self.stores:
            store.reset()

    def detach_memory(self):
        for store in self.stores:
            store.detach_entries()

    def _context_refine(self, x, level, store, slice_index):
        b, c, h, w = x.shape
        query = x.mean(axis=(2, 3))  # (B, C) per-level descriptor
        read = memory_read_rows(query, store, self.tau)
        x = x + (read - query).reshape(b, c, 1, 1)
        store.write_rows(query @ level.mem_key_proj, query @ level.mem_value_proj, slice_index)
        return x

    def decode(self, x, skips, ablation: AblationConfig, slice_index=0):
        """Coarse-to-fine cascade; returns [P1, ..., P4] with P1 finest.

        ``skips`` hold the encoder scales finest-first, so the cascade
        consumes them from the back.
        """
        if len(skips) != len(self.levels):
            raise ShapeError(
                f"decode: need {len(self.levels)} skip features, got {len(skips)}")
        preds = []  # coarsest first while building
        for j, level in enumerate(self.levels):
            skip = skips[len(skips) - 1 - j]
            if skip.shape != x.shape:
                raise ShapeError(
                    f"decode: skip {skip.shape} does not match features {x.shape} at level "
                    f"{len(self.levels) - j}")
            merged = ad.concat([x, skip], axis=1)
            y = ad.conv_transpose2d(merged, level.up_weight, level.up_bias, stride=2)
            b, c, h, w = y.shape
            tokens = y.reshape(b, c, h * w).transpose(0, 2, 1)
            y = ad.tanh(ad.layer_norm(tokens, level.norm_gain, level.norm_bias))
            y = y.transpose(0, 2, 1).reshape(b, c, h, w)
            if ablation.C:
                y = self._context_refine(y, level, self.stores[j], slice_index)
            logits = tokens_to_logits(y, level.head_weight, level.head_bias)
            preds.append(logits)
            x = y
        return preds[::-1]


def tokens_to_logits(features, weight, bias):
    b, c, h, w = features.shape
    tokens = features.reshape(b, c, h * w).transpose(0, 2, 1)
    logits = tokens @ weight + bias
    return logits.transpose(0, 2, 1).reshape(b, weight.shape[1], h, w)


# ---------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------

def _target_tensor(target):
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.ndim == 2:
        t = t[None]
    return t


def dice_sym(logits, target, smooth=1.0):
    """Soft overlap loss: 1 - mean over classes of the smoothed dice ratio.

    ``logits`` are (B, 1, H, W) (sigmoid foreground); ``target`` is a
    binary (B, H, W) or (H, W) mask at the same spatial extent.
    """
    g = _target_tensor(target)
    b, c, h, w = logits.shape
    if c != 1:
        raise ShapeError(f"dice_sym: expected a single foreground channel, got {c}")
    if g.shape != (b, h, w):
        raise ShapeError(f"dice_sym: target {g.shape} does not match logits {logits.shape}")
    p = ad.sigmoid(logits).reshape(b, h, w)
    gt = Tensor(g)
    inter = (p * gt).sum()
    ratio = (inter * 2.0 + smooth) / (p.sum() + gt.sum() + smooth)
    return 1.0 - ratio


def _class_weights(g, balance):
    """Per-class multipliers; inverse batch frequency normalized to mean one,
    blended toward uniform by ``1 - balance``."""
    freq_fg = float(np.clip(g.mean(), 1e-6, 1.0 - 1e-6))
    inv = np.array([1.0 / (1.0 - freq_fg), 1.0 / freq_fg])
    balanced = inv / inv.mean()
    uniform = np.ones(2)
    w = (1.0 - balance) * uniform + balance * balanced
    return float(w[1]), float(w[0])  # (foreground, background)


def focal_mod(logits, target, cfg: LossConfig):
    """Focusing loss: mean of -alpha_c (1 - p_t)^gamma log p_t.

    With ``focal_gamma = 0`` and ``class_balance = 0`` this reduces
    exactly to cross-entropy.
    """
    g = _target_tensor(target)
    b, c, h, w = logits.shape
    if c != 1:
        raise ShapeError(f"focal_mod: expected a single foreground channel, got {c}")
    if g.shape != (b, h, w):
        raise ShapeError(f"focal_mod: target {g.shape} does not match logits {logits.shape}")
    z = logits.reshape(b, h, w)
    gt = Tensor(g)
    alpha_fg, alpha_bg = _class_weights(g, cfg.class_balance)
    # For g=1: p_t = sigmoid(z), 1-p_t = sigmoid(-z), -log p_t = softplus(-z).
    pos = ad.pow_const(ad.sigmoid(-z), cfg.focal_gamma) * ad.softplus(-z)
    neg = ad.pow_const(ad.sigmoid(z), cfg.focal_gamma) * ad.softplus(z)
    per_pixel = gt * pos * alpha_fg + (1.0 - gt) * neg * alpha_bg
    return per_pixel.mean()


def hierarchical_loss(preds, target, cfg: LossConfig):
    """Deep-supervision objective over all prediction levels.

    Each level is bilinearly resized to the ground-truth extent, then
    weighted overlap and focusing terms are summed. Returns the scalar
    loss plus per-level components for logging.
    """
    g = _target_tensor(target)
    gh, gw = g.shape[-2:]
    total = None
    details = {}
    for j, logits in enumerate(preds):
        weight = cfg.level_weights[j]
        resized = ad.bilinear_resize(logits, gh, gw)
        d = dice_sym(resized, g, smooth=cfg.smooth)
        f = focal_mod(resized, g, cfg)
        details[f"dice{j + 1}"] = d.item()
        details[f"focal{j + 1}"] = f.item()
        term = (d + f) * weight
        total = term if total is None else total + term
    if total is None:
        raise ShapeError("hierarchical_loss: no prediction levels")
    return total, details
