"""Synthetic low-contrast lesion volumes.

Each volume is a stack of textured-background slices carrying a few
small, faint, drifting lesions. A lesion is a disk footprint raised a
fixed contrast above the local background, persisting across at least
three consecutive slices with its center drifting at most ``drift``
pixels per slice per axis. The matching binary masks are the labels.
Everything is reproducible from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DatasetSpec


@dataclass
class SyntheticVolume:
    slices: np.ndarray      # (S, H, W) float64 intensities
    masks: np.ndarray       # (S, H, W) uint8 labels
    background: np.ndarray  # (H, W) noise-free background field
    seed: int
    spec: DatasetSpec


def _textured_background(rng, h, w, cutoff=0.15, amplitude=0.1, level=0.5):
    """Low-pass filtered noise field: smooth, organic-looking texture."""
    field = rng.normal(size=(h, w))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    keep = np.exp(-(fy ** 2 + fx ** 2) / (2 * cutoff ** 2))
    smooth = np.fft.irfft2(np.fft.rfft2(field) * keep, s=(h, w))
    std = smooth.std()
    if std > 0:
        smooth = smooth / std * amplitude
    return level + smooth


def generate_volume(spec: DatasetSpec, seed: int) -> SyntheticVolume:
    """Deterministic volume with drifting disk lesions on texture."""
    h, w, s = spec.height, spec.width, spec.slices
    r_lo, r_hi = spec.radius
    if r_hi >= min(h, w) / 2:
        raise ValueError(f"lesion radius bound {r_hi} exceeds grid {h}x{w}")
    if s < spec.min_persistence:
        raise ValueError(f"volume of {s} slices cannot hold {spec.min_persistence}-slice lesions")
    rng = np.random.default_rng(seed)
    background = _textured_background(rng, h, w)
    bumps = np.zeros((s, h, w))
    masks = np.zeros((s, h, w), dtype=np.uint8)
    count = int(rng.integers(spec.lesion_count[0], spec.lesion_count[1] + 1))
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(count):
        radius = rng.uniform(r_lo, r_hi)
        contrast = rng.uniform(spec.contrast[0], spec.contrast[1])
        duration = int(rng.integers(spec.min_persistence, s + 1))
        start = int(rng.integers(0, s - duration + 1))
        margin = radius + 1.0
        cy = rng.uniform(margin, h - 1 - margin)
        cx = rng.uniform(margin, w - 1 - margin)
        for t in range(start, start + duration):
            footprint = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
            bumps[t][footprint] = np.maximum(bumps[t][footprint], contrast)
            masks[t][footprint] = 1
            cy = float(np.clip(cy + rng.integers(-spec.drift, spec.drift + 1), margin, h - 1 - margin))
            cx = float(np.clip(cx + rng.integers(-spec.drift, spec.drift + 1), margin, w - 1 - margin))
    slices = background[None] + bumps
    if spec.noise_sigma > 0:
        slices = slices + rng.normal(scale=spec.noise_sigma, size=slices.shape)
    return SyntheticVolume(slices=slices, masks=masks, background=background,
                           seed=seed, spec=spec)


def generate_dataset(spec: DatasetSpec, count: int, seed: int):
    """``count`` volumes with per-volume seeds derived from ``seed``."""
    seq = np.random.SeedSequence(entropy=seed)
    return [generate_volume(spec, int(child.generate_state(1)[0]))
            for child in seq.spawn(count)]
