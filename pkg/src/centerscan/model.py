"""Full segmenter: encoder, prior generator, and memory decoder.

Slices of a volume are processed strictly in order; the prototype
stores carry information forward only. ``start_volume`` clears them,
``detach_memories`` converts live entries to constants at optimizer
step boundaries so tapes never span updates.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import RunConfig
from .decoder import MemoryDecoder
from .encoder import Encoder
from .priors import PriorGenerator

_ENCODER_KEY, _PRIORS_KEY, _DECODER_KEY = 1, 2, 3


def component_rng(seed, key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


class Segmenter:
    NUM_ANCHORS = 4

    def __init__(self, cfg: RunConfig, seed=0):
        self.cfg = cfg
        self.ablation = cfg.ablation
        dim = cfg.encoder.embed_dim
        self.encoder = Encoder(cfg.encoder, component_rng(seed, _ENCODER_KEY), cfg.priority)
        self.priors = PriorGenerator(dim, self.NUM_ANCHORS, component_rng(seed, _PRIORS_KEY))
        self.decoder = MemoryDecoder(dim, 1, component_rng(seed, _DECODER_KEY),
                                     num_levels=cfg.encoder.num_stages)

    def named(self):
        out = self.encoder.named("encoder.")
        out.update(self.priors.named("priors."))
        out.update(self.decoder.named("decoder."))
        return out

    def trainable(self):
        return {k: p for k, p in self.named().items() if p.requires_grad}

    def start_volume(self):
        self.priors.memory.reset()
        self.decoder.reset_memory()

    def detach_memories(self):
        self.priors.memory.detach_entries()
        self.decoder.detach_memory()

    def forward_slice(self, image, slice_index):
        """Predictions for one slice (batch of one); order matters.

        Returns [P1, ..., P4] logits, finest first.
        """
        image = ad.as_tensor(image)
        enc = self.encoder.encode(image, self.ablation)
        deepest = enc.stages[-1]
        if self.ablation.B:
            tokens = enc.f_ctx.reshape(enc.f_ctx.shape[1], enc.f_ctx.shape[2])
            gated = self.priors(deepest, tokens, slice_index)
        else:
            gated = deepest
        return self.decoder.decode(gated, enc.stages, self.ablation, slice_index)

    def predict_volume(self, slices, threshold=0.5):
        """Binary masks for a full volume, slices in order."""
        h, w = slices.shape[-2:]
        self.start_volume()
        out = np.zeros(slices.shape, dtype=np.uint8)
        with ad.no_grad():
            for t in range(slices.shape[0]):
                image = Tensor(slices[t][None, None])
                preds = self.forward_slice(image, t)
                prob = 1.0 / (1.0 + np.exp(-preds[0].data[0, 0]))
                out[t] = (prob > threshold).astype(np.uint8)
        return out

    def checkpoint_entries(self):
        return {name: (p.data, not p.requires_grad) for name, p in self.named().items()}

    def load_entries(self, entries):
        named = self.named()
        for name, (arr, frozen) in entries.items():
            if name not in named:
                raise KeyError(f"checkpoint entry {name!r} has no matching parameter")
            if named[name].data.shape != arr.shape:
                raise ValueError(
                    f"checkpoint entry {name!r} shape {arr.shape} != {named[name].data.shape}")
            named[name].data = arr.copy()
            named[name].requires_grad = not frozen
