"""Prompt-free structural prior generation with cross-slice memory.

A small bank of learnable anchors is mixed by self-attention, aligned
against the encoder's context tokens by cross-attention, refined by
reading a bounded prototype memory written by earlier slices of the
same volume, and finally used to gate the encoder features pixelwise.
The memory is FIFO-bounded and reset between volumes so no information
leaks across patients or backward in slice order.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class PrototypeMemory:
    """Bounded FIFO store of (key, value) prototype rows.

    Rows written during an optimization step stay differentiable inside
    that step's tape; ``detach_entries`` converts them to constants at
    step boundaries; ``reset`` clears the store between volumes.
    """

    def __init__(self, capacity=32):
        if capacity < 1:
            raise ValueError("memory capacity must be >= 1")
        self.capacity = capacity
        self.entries = []  # (key Tensor (D,), value Tensor (D,), slice_index)

    def __len__(self):
        return len(self.entries)

    @property
    def slice_tags(self):
        return [tag for _, _, tag in self.entries]

    def write_rows(self, keys: Tensor, values: Tensor, slice_index: int):
        n = keys.shape[0]
        for i in range(n):
            self.entries.append((keys[i, :], values[i, :], slice_index))
        overflow = len(self.entries) - self.capacity
        if overflow > 0:
            del self.entries[:overflow]

    def stacked(self):
        """(keys, values) as matrices, or None when empty."""
        if not self.entries:
            return None
        keys = ad.stack([k for k, _, _ in self.entries], axis=0)
        values = ad.stack([v for _, v, _ in self.entries], axis=0)
        return keys, values

    def detach_entries(self):
        self.entries = [(k.detach(), v.detach(), tag) for k, v, tag in self.entries]

    def reset(self):
        self.entries = []

    def dump(self, prefix="memory."):
        """Named arrays for the checkpoint container."""
        out = {}
        for i, (k, v, tag) in enumerate(self.entries):
            out[f"{prefix}key{i}.slice{tag}"] = k.data
            out[f"{prefix}value{i}.slice{tag}"] = v.data
        return out


def memory_read_rows(queries: Tensor, memory: PrototypeMemory, tau: float):
    """Residual attention read: row + softmax(row . keys / tau) @ values.

    An empty memory passes the queries through unchanged.
    """
    stacked = memory.stacked()
    if stacked is None:
        return queries
    keys, values = stacked
    scores = queries @ keys.transpose(1, 0) * (1.0 / tau)
    weights = ad.softmax(scores, axis=1)
    return queries + weights @ values


def _mlp(x, w1, b1, w2, b2):
    return ad.tanh(x @ w1 + b1) @ w2 + b2


class PriorGenerator:
    """Anchor mixing, context alignment, memory refinement, reweighting."""

    def __init__(self, dim, num_anchors, rng, tau=None, memory_capacity=32,
                 hidden=None):
        if num_anchors < 1:
            raise ValueError("need at least one anchor")
        self.dim = dim
        self.tau = float(tau) if tau is not None else float(np.sqrt(dim))
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        hidden = hidden or dim
        scale = dim ** -0.5

        def t(arr):
            return Tensor(arr, requires_grad=True)

        def linmap(rows, cols):
            return t(rng.normal(scale=rows ** -0.5, size=(rows, cols)))

        self.anchors = t(rng.normal(scale=scale, size=(num_anchors, dim)))
        self.theta_q = linmap(dim, dim)
        self.theta_k = linmap(dim, dim)
        self.theta_v = linmap(dim, dim)
        self.mlp_w1 = linmap(dim, hidden)
        self.mlp_b1 = t(np.zeros(hidden))
        self.mlp_w2 = linmap(hidden, dim)
        self.mlp_b2 = t(np.zeros(dim))
        self.norm_gain = t(np.ones(dim))
        self.norm_bias = t(np.zeros(dim))
        self.phi_q = linmap(dim, dim)
        self.phi_k = linmap(dim, dim)
        self.phi_v = linmap(dim, dim)
        self.mem_key_proj = linmap(dim, dim)
        self.mem_value_proj = linmap(dim, dim)
        self.psi_w1 = linmap(dim, hidden)
        self.psi_b1 = t(np.zeros(hidden))
        self.psi_w2 = linmap(hidden, dim)
        self.psi_b2 = t(np.zeros(dim))
        self.memory = PrototypeMemory(memory_capacity)

    def named(self, prefix=""):
        names = (
            "anchors theta_q theta_k theta_v mlp_w1 mlp_b1 mlp_w2 mlp_b2 "
            "norm_gain norm_bias phi_q phi_k phi_v mem_key_proj mem_value_proj "
            "psi_w1 psi_b1 psi_w2 psi_b2"
        ).split()
        return {prefix + n: getattr(self, n) for n in names}

    # -- the four stages ----------------------------------------------

    def intra_anchor(self):
        """Self-attention among anchors with a normed MLP residual."""
        a = self.anchors
        scores = (a @ self.theta_q) @ (a @ self.theta_k).transpose(1, 0) * (self.dim ** -0.5)
        mixed = ad.softmax(scores, axis=1) @ (a @ self.theta_v)
        return a + ad.layer_norm(_mlp(mixed, self.mlp_w1, self.mlp_b1, self.mlp_w2, self.mlp_b2),
                                 self.norm_gain, self.norm_bias)

    def align_context(self, anchors_mixed, context_tokens):
        """Cross-attend anchors over context tokens -> one row per anchor."""
        context_tokens = ad.as_tensor(context_tokens)
        scores = (anchors_mixed @ self.phi_q) @ (context_tokens @ self.phi_k).transpose(1, 0)
        weights = ad.softmax(scores * (1.0 / self.tau), axis=1)
        return (weights @ context_tokens) @ self.phi_v

    def memory_read(self, candidates):
        return memory_read_rows(candidates, self.memory, self.tau)

    def memory_write(self, candidates, slice_index):
        keys = candidates @ self.mem_key_proj
        values = candidates @ self.mem_value_proj
        self.memory.write_rows(keys, values, slice_index)

    def reweight(self, features, refined):
        """Gate features pixelwise by anchor similarity.

        Gate = max over anchors of sigmoid(<psi(row), pixel>), in (0, 1),
        broadcast over channels.
        """
        b, c, h, w = features.shape
        proto = _mlp(refined, self.psi_w1, self.psi_b1, self.psi_w2, self.psi_b2)
        pixels = features.reshape(b, c, h * w).transpose(0, 2, 1)
        logits = pixels @ proto.transpose(1, 0)  # (B, HW, N)
        gate = ad.reduce_max(ad.sigmoid(logits), axis=2)  # (B, HW)
        gate = gate.reshape(b, 1, h, w)
        return features * gate

    def forward(self, features, context_tokens, slice_index):
        """Full prior path for one slice; writes prototypes at the end."""
        mixed = self.intra_anchor()
        candidates = self.align_context(mixed, context_tokens)
        refined = self.memory_read(candidates)
        out = self.reweight(features, refined)
        self.memory_write(candidates, slice_index)
        return out

    __call__ = forward
