"""Toy image encoder: frozen conv backbone with trainable scan adapters.

The backbone (stem plus downsampling stages) is randomly initialized
and frozen; only the bottleneck adapters train. Each adapter projects
down, runs a center-priority scan block, and projects back up through a
zero-initialized map, so at initialization the adapted encoder matches
the frozen one exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .config import AblationConfig, EncoderConfig
from .scan import PriorityParams
from .ssm import CenterScanBlock


def _channel_tokens(x):
    """(B, C, H, W) -> (B, H*W, C) token view."""
    b, c, h, w = x.shape
    return x.reshape(b, c, h * w).transpose(0, 2, 1)


def _channel_grid(tokens, h, w):
    b, hw, c = tokens.shape
    return tokens.transpose(0, 2, 1).reshape(b, c, h, w)


class ConvUnit:
    """conv3x3 -> per-channel spatial norm -> tanh.

    The norm standardizes each channel over its spatial extent (per
    image), preserving the relative amplitude of small bumps inside a
    channel; a per-pixel norm would erase exactly that cue.
    """

    def __init__(self, in_channels, out_channels, rng, stride=1, trainable=False):
        flag = bool(trainable)
        scale = (in_channels * 9) ** -0.5
        self.weight = Tensor(rng.normal(scale=scale, size=(out_channels, in_channels, 3, 3)),
                             requires_grad=flag)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=flag)
        self.norm_gain = Tensor(np.ones(out_channels), requires_grad=flag)
        self.norm_bias = Tensor(np.zeros(out_channels), requires_grad=flag)
        self.stride = stride

    def named(self, prefix=""):
        return {
            prefix + "weight": self.weight,
            prefix + "bias": self.bias,
            prefix + "norm_gain": self.norm_gain,
            prefix + "norm_bias": self.norm_bias,
        }

    def __call__(self, x):
        y = ad.conv2d(x, self.weight, self.bias, stride=self.stride, padding=1)
        b, c, h, w = y.shape
        flat = y.reshape(b, c, h * w)
        mu = flat.mean(axis=2, keepdims=True)
        centered = flat - mu
        var = (centered * centered).mean(axis=2, keepdims=True)
        normed = centered / ad.pow_const(var + 1e-5, 0.5)
        normed = normed * self.norm_gain.reshape(1, c, 1) + self.norm_bias.reshape(1, c, 1)
        return ad.tanh(normed.reshape(b, c, h, w))


class Adapter:
    """Down-project, scan, up-project (zero-init), residual add."""

    def __init__(self, channels, cfg: EncoderConfig, priority_params, rng):
        dim = cfg.adapter_dim
        self.down_weight = Tensor(rng.normal(scale=channels ** -0.5, size=(channels, dim)),
                                  requires_grad=True)
        self.down_bias = Tensor(np.zeros(dim), requires_grad=True)
        self.block = CenterScanBlock(dim, cfg.state_dim, rng, region_size=cfg.region_size,
                                     priority_params=priority_params)
        self.up_weight = Tensor(np.zeros((dim, channels)), requires_grad=True)
        self.up_bias = Tensor(np.zeros(channels), requires_grad=True)

    def named(self, prefix=""):
        out = {
            prefix + "down_weight": self.down_weight,
            prefix + "down_bias": self.down_bias,
            prefix + "up_weight": self.up_weight,
            prefix + "up_bias": self.up_bias,
        }
        out.update(self.block.named(prefix + "block."))
        return out

    def __call__(self, x):
        b, c, h, w = x.shape
        low = _channel_grid(ad.tanh(_channel_tokens(x) @ self.down_weight + self.down_bias), h, w)
        scanned = self.block(low)
        delta = _channel_tokens(scanned) @ self.up_weight + self.up_bias
        return x + _channel_grid(delta, h, w)


@dataclass
class EncoderOutput:
    """Per-stage feature maps (coarsening resolution) and context tokens."""

    stages: list
    f_ctx: Tensor


class Encoder:
    def __init__(self, cfg: EncoderConfig, rng, priority_params=None):
        priority_params = priority_params or PriorityParams()
        self.cfg = cfg
        self.stem = ConvUnit(cfg.in_channels, cfg.embed_dim, rng, stride=1, trainable=False)
        self.stages = []
        for _ in range(cfg.num_stages):
            blocks = [ConvUnit(cfg.embed_dim, cfg.embed_dim, rng, stride=cfg.downsample,
                               trainable=False)]
            for _ in range(cfg.blocks_per_stage - 1):
                blocks.append(ConvUnit(cfg.embed_dim, cfg.embed_dim, rng, stride=1,
                                       trainable=False))
            self.stages.append(blocks)
        if cfg.adapter_dim > 0:
            self.adapters = [Adapter(cfg.embed_dim, cfg, priority_params, rng)
                             for _ in range(cfg.num_stages)]
        else:
            self.adapters = []

    def named(self, prefix=""):
        out = self.stem.named(prefix + "stem.")
        for s, blocks in enumerate(self.stages):
            for i, block in enumerate(blocks):
                out.update(block.named(f"{prefix}stage{s + 1}.block{i}."))
        for s, adapter in enumerate(self.adapters):
            out.update(adapter.named(f"{prefix}stage{s + 1}.adapter."))
        return out

    def encode(self, image, ablation: AblationConfig) -> EncoderOutput:
        image = ad.as_tensor(image)
        if image.ndim != 4 or image.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"encode: expected (batch, {self.cfg.in_channels}, h, w), got {image.shape}")
        min_extent = self.cfg.downsample ** self.cfg.num_stages
        if image.shape[2] < min_extent or image.shape[3] < min_extent:
            raise ShapeError(
                f"encode: spatial dims {image.shape[2:]} below minimum {min_extent}")
        x = self.stem(image)
        stages = []
        for s, blocks in enumerate(self.stages):
            for block in blocks:
                x = block(x)
            if ablation.A and self.adapters:
                x = self.adapters[s](x)
            stages.append(x)
        f_ctx = _channel_tokens(stages[-1])
        return EncoderOutput(stages=stages, f_ctx=f_ctx)

    def parameter_census(self):
        """Exact frozen/trainable parameter counts for the encoder."""
        frozen = trainable = 0
        for tensor in self.named().values():
            if tensor.requires_grad:
                trainable += tensor.size
            else:
                frozen += tensor.size
        ratio = trainable / frozen if frozen else float("inf")
        return {"frozen_count": frozen, "trainable_count": trainable, "ratio": ratio}


def parameter_census(cfg: EncoderConfig):
    """Census for a config without keeping the encoder around."""
    return Encoder(cfg, np.random.default_rng(0)).parameter_census()
