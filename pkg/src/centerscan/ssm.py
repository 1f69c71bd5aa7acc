"""Gated state-space recurrence applied along region scan paths.

The recurrence is ``h_t = a * h_{t-1} + g_t * (B x_t)`` with
``y_t = C h_t + d * x_t``, where the decay ``a`` and the per-token gate
``g_t`` are sigmoid-squashed so the state is written then geometrically
suppressed. A region's aggregate readout is ``C h_n`` at the final scan
position, so cells scanned later retain more influence; the block
therefore consumes scan orders back-to-front by default, leaving the
highest-priority cell for last.

``measure_effective_kernel`` recovers the per-cell influence profile of
a block empirically (finite differences at an all-ones reference input),
which is how the center-dominant / axis-reinforced / corner-sparse shape
of the aggregation is validated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .scan import Coord, PriorityParams, Strategy, partition, scan_order


@dataclass
class SsmParams:
    """Learnable maps of one scan block.

    decay_logits (S,), input_proj (C, S), selective_proj (C, S),
    gate_bias (S,), output_proj (S, C), skip_scale (C,).
    """

    decay_logits: Tensor
    input_proj: Tensor
    selective_proj: Tensor
    gate_bias: Tensor
    output_proj: Tensor
    skip_scale: Tensor

    @property
    def state_dim(self):
        return self.decay_logits.shape[0]

    @property
    def channels(self):
        return self.input_proj.shape[0]

    def named(self, prefix=""):
        return {
            prefix + "decay_logits": self.decay_logits,
            prefix + "input_proj": self.input_proj,
            prefix + "selective_proj": self.selective_proj,
            prefix + "gate_bias": self.gate_bias,
            prefix + "output_proj": self.output_proj,
            prefix + "skip_scale": self.skip_scale,
        }


def init_ssm_params(channels, state_dim, rng, decay_logit=1.0):
    """Fresh parameters; decay starts at sigmoid(decay_logit) in (0, 1)."""

    def t(arr):
        return Tensor(arr, requires_grad=True)

    return SsmParams(
        decay_logits=t(np.full(state_dim, float(decay_logit))),
        input_proj=t(rng.normal(scale=channels ** -0.5, size=(channels, state_dim))),
        selective_proj=t(rng.normal(scale=0.1 * channels ** -0.5, size=(channels, state_dim))),
        gate_bias=t(np.zeros(state_dim)),
        output_proj=t(rng.normal(scale=state_dim ** -0.5, size=(state_dim, channels))),
        skip_scale=t(np.ones(channels)),
    )


def _scan_batched(seq, params):
    """Run the recurrence over seq (..., L, C); returns (outputs, readout, state)."""
    length = seq.shape[-2]
    decay = ad.sigmoid(params.decay_logits)
    h = None
    ys = []
    for t in range(length):
        xt = seq[..., t, :]
        gate = ad.sigmoid(xt @ params.selective_proj + params.gate_bias)
        drive = gate * (xt @ params.input_proj)
        h = drive if h is None else decay * h + drive
        ys.append(xt * params.skip_scale + h @ params.output_proj)
    outputs = ad.stack(ys, axis=-2)
    return outputs, h @ params.output_proj, h


def ssm_scan(seq, params: SsmParams):
    """Scan one token sequence (n, channels).

    Returns per-position outputs (n, channels), the final-state readout
    (channels,) used as the region aggregate, and the final state.
    """
    seq = ad.as_tensor(seq)
    if seq.ndim != 2:
        raise ShapeError(f"ssm_scan: expected (length, channels), got {seq.shape}")
    if seq.shape[0] == 0:
        raise ShapeError("ssm_scan: empty sequence")
    if seq.shape[1] != params.channels:
        raise ShapeError(f"ssm_scan: channel width {seq.shape[1]} != params width {params.channels}")
    lifted = seq.reshape(1, seq.shape[0], seq.shape[1])
    outputs, readout, state = _scan_batched(lifted, params)
    n, c = seq.shape
    return outputs.reshape(n, c), readout.reshape(c), state.reshape(params.state_dim)


class CenterScanBlock:
    """Region-wise scan, scatter, norm, and pointwise mixing with residual.

    ``direction="reversed"`` (default) feeds each region's scan order
    back-to-front so the top-priority cell enters the state last and
    decays least. Multi-path strategies average their directions.
    """

    def __init__(self, channels, state_dim, rng, region_size=3,
                 strategy=Strategy.CENTER_PRIORITY, priority_params=None,
                 direction="reversed", decay_logit=1.0):
        if direction not in ("forward", "reversed"):
            raise ValueError(f"direction must be 'forward' or 'reversed', got {direction!r}")
        self.channels = channels
        self.region_size = region_size
        self.strategy = Strategy(strategy)
        self.priority_params = priority_params or PriorityParams()
        self.direction = direction
        self.ssm = init_ssm_params(channels, state_dim, rng, decay_logit=decay_logit)
        self.norm_gain = Tensor(np.ones(channels), requires_grad=True)
        self.norm_bias = Tensor(np.zeros(channels), requires_grad=True)
        self.mix_weight = Tensor(rng.normal(scale=channels ** -0.5, size=(channels, channels)),
                                 requires_grad=True)
        self.mix_bias = Tensor(np.zeros(channels), requires_grad=True)
        self._index_cache = {}

    def named(self, prefix=""):
        out = self.ssm.named(prefix + "ssm.")
        out[prefix + "norm_gain"] = self.norm_gain
        out[prefix + "norm_bias"] = self.norm_bias
        out[prefix + "mix_weight"] = self.mix_weight
        out[prefix + "mix_bias"] = self.mix_bias
        return out

    def time_order(self, region):
        """Cell orders as consumed by the recurrence (one per direction)."""
        path = scan_order(region, self.strategy, self.priority_params)
        if self.direction == "reversed":
            return tuple(order[::-1] for order in path.orders)
        return path.orders

    def _indices(self, h, w):
        key = (h, w)
        if key not in self._index_cache:
            part = partition(h, w, self.region_size)
            orders_per_region = [self.time_order(region) for region in part.regions]
            ndir = len(orders_per_region[0])
            directions = []
            for d in range(ndir):
                groups = {}
                for orders in orders_per_region:
                    row = np.fromiter((r * w + c for r, c in orders[d]), dtype=np.intp)
                    groups.setdefault(len(row), []).append(row)
                gidx = [(length, np.stack(rows)) for length, rows in sorted(groups.items())]
                perm = np.concatenate([m.reshape(-1) for _, m in gidx])
                inv = np.empty_like(perm)
                inv[perm] = np.arange(perm.size)
                directions.append((gidx, inv))
            self._index_cache[key] = directions
        return self._index_cache[key]

    def scan_features(self, x):
        """Per-position scan outputs scattered back to the grid (no mixing)."""
        x = ad.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"scan block: expected (batch, {self.channels}, h, w), got {x.shape}")
        b, c, h, w = x.shape
        flat = x.reshape(b, c, h * w)
        results = []
        for gidx, inv in self._indices(h, w):
            parts = []
            for length, m in gidx:
                rg = m.shape[0]
                seq = ad.take(flat, m.reshape(-1), axis=2)
                seq = seq.reshape(b, c, rg, length).transpose(0, 2, 3, 1)
                ys, _, _ = _scan_batched(seq, self.ssm)
                parts.append(ys.transpose(0, 3, 1, 2).reshape(b, c, rg * length))
            gathered = parts[0] if len(parts) == 1 else ad.concat(parts, axis=2)
            results.append(ad.take(gathered, inv, axis=2))
        scanned = results[0]
        for extra in results[1:]:
            scanned = scanned + extra
        if len(results) > 1:
            scanned = scanned * (1.0 / len(results))
        return scanned.reshape(b, c, h, w)

    def forward(self, x):
        b, c, h, w = ad.as_tensor(x).shape
        scanned = self.scan_features(x)
        tokens = scanned.reshape(b, c, h * w).transpose(0, 2, 1)
        normed = ad.layer_norm(tokens, self.norm_gain, self.norm_bias)
        mixed = normed @ self.mix_weight + self.mix_bias
        return x + mixed.transpose(0, 2, 1).reshape(b, c, h, w)

    __call__ = forward


@dataclass(frozen=True)
class EffectiveKernel:
    """Per-cell influence on a region's aggregate readout.

    ``cells`` follow the consumed time order; ``weights`` are
    nonnegative and sum to one.
    """

    cells: tuple[Coord, ...]
    weights: np.ndarray

    def by_cell(self):
        return dict(zip(self.cells, self.weights))


def measure_effective_kernel(params: SsmParams, cells, step=1e-5):
    """Empirical kernel of the final-state readout at an all-ones input.

    Per cell, the weight is the L1 norm of the readout Jacobian with
    respect to that cell's feature vector, estimated column by column
    with central differences, then normalized to sum one.
    """
    cells = tuple(cells)
    n, c = len(cells), params.channels
    ref = np.ones((n, c))

    def readout(arr):
        with ad.no_grad():
            seq = Tensor(arr.reshape(1, n, c))
            _, ro, _ = _scan_batched(seq, params)
        return ro.data.reshape(-1)

    raw = np.zeros(n)
    for i in range(n):
        for ch in range(c):
            pert = ref.copy()
            pert[i, ch] = 1.0 + step
            hi = readout(pert)
            pert[i, ch] = 1.0 - step
            lo = readout(pert)
            raw[i] += np.abs((hi - lo) / (2.0 * step)).sum()
    total = raw.sum()
    weights = raw / total if total > 0 else np.full(n, 1.0 / n)
    return EffectiveKernel(cells, weights)


def block_effective_kernel(block: CenterScanBlock, region=None):
    """Kernel of a block over one full region (primary direction)."""
    if region is None:
        k = block.region_size
        region = tuple((r, c) for r in range(k) for c in range(k))
    order = block.time_order(region)[0]
    return measure_effective_kernel(block.ssm, order)
