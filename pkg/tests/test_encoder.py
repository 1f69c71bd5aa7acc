import numpy as np
import pytest

from centerscan.autodiff import ShapeError, Tensor
from centerscan.checkpoint import load_checkpoint, save_checkpoint
from centerscan.config import AblationConfig, EncoderConfig
from centerscan.encoder import Encoder, parameter_census

CFG = EncoderConfig()
A_ON = AblationConfig(A=True)
A_OFF = AblationConfig(A=False)


def make_encoder(seed=0, cfg=CFG):
    return Encoder(cfg, np.random.default_rng(seed))


def image(seed=0, h=32, w=32):
    return Tensor(np.random.default_rng(seed).uniform(0, 1, size=(1, 1, h, w)))


class TestEncode:
    def test_stage_extents_halve(self):
        out = make_encoder().encode(image(), A_OFF)
        assert [f.shape[2] for f in out.stages] == [16, 8, 4, 2]
        assert [f.shape[3] for f in out.stages] == [16, 8, 4, 2]

    def test_ragged_extents_ceil(self):
        out = make_encoder().encode(image(h=20, w=18), A_OFF)
        assert [f.shape[2] for f in out.stages] == [10, 5, 3, 2]
        assert [f.shape[3] for f in out.stages] == [9, 5, 3, 2]

    def test_context_tokens_from_deepest_stage(self):
        out = make_encoder().encode(image(), A_OFF)
        assert out.f_ctx.shape == (1, 4, CFG.embed_dim)

    def test_undersized_image_rejected(self):
        with pytest.raises(ShapeError):
            make_encoder().encode(Tensor(np.zeros((1, 1, 8, 8))), A_OFF)

    def test_zero_init_adapters_are_exact_identity(self):
        enc = make_encoder()
        img = image()
        off = enc.encode(img, A_OFF)
        on = enc.encode(img, A_ON)
        for a, b in zip(off.stages, on.stages):
            assert np.array_equal(a.data, b.data)

    def test_deterministic_given_seed(self):
        a = make_encoder(seed=42).encode(image(), A_ON)
        b = make_encoder(seed=42).encode(image(), A_ON)
        for fa, fb in zip(a.stages, b.stages):
            assert np.array_equal(fa.data, fb.data)


class TestFreezing:
    def test_backbone_gradient_identically_zero(self):
        enc = make_encoder()
        out = enc.encode(image(), A_ON)
        out.stages[-1].sum().backward()
        adapter_grads = 0
        for name, p in enc.named().items():
            if "adapter" in name:
                if p.grad is not None and np.any(p.grad != 0):
                    adapter_grads += 1
            else:
                assert p.grad is None, f"frozen parameter {name} received gradient"
        assert adapter_grads > 0

    def test_outputs_unchanged_by_adapter_update_when_A_off(self):
        enc = make_encoder()
        img = image()
        before = enc.encode(img, A_OFF).stages[-1].data.copy()
        # Simulate a training step on every adapter parameter.
        for name, p in enc.named().items():
            if "adapter" in name:
                p.data = p.data + 0.37
        after = enc.encode(img, A_OFF).stages[-1].data
        assert np.array_equal(before, after)


class TestCensus:
    def test_no_adapters_no_trainable(self):
        census = parameter_census(EncoderConfig(adapter_dim=0))
        assert census["trainable_count"] == 0

    def test_adapter_count_roughly_linear_in_width(self):
        small = parameter_census(EncoderConfig(adapter_dim=4))["trainable_count"]
        large = parameter_census(EncoderConfig(adapter_dim=8))["trainable_count"]
        assert 1.5 <= large / small <= 3.0

    def test_default_ratio_under_quarter(self):
        census = parameter_census(CFG)
        assert census["ratio"] < 0.25
        assert census["frozen_count"] > 0 and census["trainable_count"] > 0


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        enc = make_encoder(seed=3)
        path = tmp_path / "enc.ckpt"
        entries = {name: (p.data, not p.requires_grad) for name, p in enc.named().items()}
        save_checkpoint(path, entries)
        loaded = load_checkpoint(path)
        assert list(loaded) == list(entries)
        for name, (arr, frozen) in loaded.items():
            assert np.array_equal(arr, entries[name][0])
            assert frozen == entries[name][1]

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)
