import numpy as np
import pytest

from centerscan import autodiff as ad
from centerscan.autodiff import ShapeError, Tensor, finite_diff_grad, relative_error
from centerscan.config import AblationConfig, LossConfig
from centerscan.decoder import MemoryDecoder, dice_sym, focal_mod, hierarchical_loss

C_ON = AblationConfig(A=True, B=True, C=True)
C_OFF = AblationConfig(A=True, B=True, C=False)


def make_inputs(rng, channels=4, base=1):
    """Deepest features plus skips at doubling extents (finest first)."""
    extents = [8 * base, 4 * base, 2 * base, 1 * base]
    skips = [Tensor(rng.uniform(-1, 1, size=(1, channels, e, e))) for e in extents]
    x = Tensor(rng.uniform(-1, 1, size=(1, channels, extents[-1], extents[-1])))
    return x, skips


class TestDecode:
    def test_spatial_doubling_chain(self):
        # Analog of a 16x16 input: encoder scales 8/4/2/1, predictions
        # double 2 -> 4 -> 8 -> 16 from coarsest to finest level.
        rng = np.random.default_rng(0)
        dec = MemoryDecoder(4, 1, rng)
        x, skips = make_inputs(rng)
        preds = dec.decode(x, skips, C_OFF)
        assert [p.shape[2] for p in preds] == [16, 8, 4, 2]
        assert all(p.shape[1] == 1 for p in preds)

    def test_level_extent_doubles_previous(self):
        rng = np.random.default_rng(1)
        dec = MemoryDecoder(4, 1, rng)
        x, skips = make_inputs(rng)
        preds = dec.decode(x, skips, C_OFF)
        for finer, coarser in zip(preds, preds[1:]):
            assert finer.shape[2] == 2 * coarser.shape[2]

    def test_memory_off_means_plain_cascade(self):
        rng = np.random.default_rng(2)
        dec = MemoryDecoder(4, 1, rng)
        x, skips = make_inputs(rng)
        first = [p.data.copy() for p in dec.decode(x, skips, C_OFF, slice_index=0)]
        # Pollute the stores, decode again with C off: identical output.
        for store in dec.stores:
            store.write_rows(Tensor(np.ones((2, 4))), Tensor(np.ones((2, 4))), 0)
        second = [p.data for p in dec.decode(x, skips, C_OFF, slice_index=1)]
        for a, b in zip(first, second):
            assert np.array_equal(a, b)
        assert all(len(s) == 2 for s in dec.stores)  # C off never writes

    def test_memory_on_reads_and_writes_per_level(self):
        rng = np.random.default_rng(3)
        dec = MemoryDecoder(4, 1, rng)
        x, skips = make_inputs(rng)
        dec.decode(x, skips, C_ON, slice_index=0)
        assert all(len(s) == 1 for s in dec.stores)
        dec.decode(x, skips, C_ON, slice_index=1)
        assert all(s.slice_tags == [0, 1] for s in dec.stores)

    def test_logits_finite(self):
        rng = np.random.default_rng(4)
        dec = MemoryDecoder(4, 1, rng)
        x, skips = make_inputs(rng)
        for p in dec.decode(x, skips, C_ON):
            assert np.all(np.isfinite(p.data))

    def test_missing_skip_rejected(self):
        rng = np.random.default_rng(5)
        dec = MemoryDecoder(4, 1, rng)
        x, skips = make_inputs(rng)
        with pytest.raises(ShapeError):
            dec.decode(x, skips[:-1], C_OFF)

    def test_mismatched_skip_rejected(self):
        rng = np.random.default_rng(6)
        dec = MemoryDecoder(4, 1, rng)
        x, skips = make_inputs(rng)
        skips[-1] = Tensor(np.zeros((1, 4, 3, 3)))
        with pytest.raises(ShapeError):
            dec.decode(x, skips, C_OFF)


class TestDiceLoss:
    def test_perfect_hard_prediction_near_zero(self):
        rng = np.random.default_rng(7)
        mask = (rng.uniform(size=(1, 32, 32)) < 0.1).astype(float)
        logits = Tensor(np.where(mask, 40.0, -40.0)[:, None])
        assert dice_sym(logits, mask).item() <= 1e-3

    def test_all_empty_smooth_case(self):
        mask = np.zeros((1, 8, 8))
        logits = Tensor(np.full((1, 1, 8, 8), -40.0))
        assert dice_sym(logits, mask).item() == pytest.approx(0.0, abs=1e-9)

    def test_disjoint_masks_approach_one(self):
        mask = np.zeros((1, 64, 64))
        mask[0, :20, :20] = 1.0
        pred = np.zeros((1, 64, 64))
        pred[0, 40:, 40:] = 1.0
        logits = Tensor(np.where(pred, 40.0, -40.0)[:, None])
        n_p, n_g = pred.sum(), mask.sum()
        want = 1.0 - 1.0 / (n_p + n_g + 1.0)
        assert dice_sym(logits, mask).item() == pytest.approx(want, abs=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            dice_sym(Tensor(np.zeros((1, 1, 4, 4))), np.zeros((1, 5, 5)))


class TestFocalLoss:
    def test_confident_correct_prediction_is_zero(self):
        rng = np.random.default_rng(8)
        mask = (rng.uniform(size=(1, 16, 16)) < 0.2).astype(float)
        logits = Tensor(np.where(mask, 40.0, -40.0)[:, None])
        assert focal_mod(logits, mask, LossConfig()).item() <= 1e-12

    def test_gamma_zero_uniform_alpha_equals_cross_entropy(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(1, 1, 8, 8))
        mask = (rng.uniform(size=(1, 8, 8)) < 0.3).astype(float)
        cfg = LossConfig(focal_gamma=0.0, class_balance=0.0)
        got = focal_mod(Tensor(z), mask, cfg).item()
        # Independent cross-entropy implementation.
        g = mask[:, None]
        want = float(np.mean(g * np.logaddexp(0.0, -z) + (1 - g) * np.logaddexp(0.0, z)))
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))

    def test_nonnegative(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            z = rng.normal(scale=3.0, size=(1, 1, 6, 6))
            mask = (rng.uniform(size=(1, 6, 6)) < 0.4).astype(float)
            assert focal_mod(Tensor(z), mask, LossConfig()).item() >= 0.0


class TestHierarchicalLoss:
    def _preds(self, rng, extents=(16, 8, 4, 2)):
        return [Tensor(rng.normal(size=(1, 1, e, e))) for e in extents]

    def test_zero_weights_zero_loss(self):
        rng = np.random.default_rng(11)
        cfg = LossConfig(level_weights=(0.0, 0.0, 0.0, 0.0))
        total, _ = hierarchical_loss(self._preds(rng), np.zeros((1, 16, 16)), cfg)
        assert total.item() == 0.0

    def test_identical_levels_scale_by_four(self):
        rng = np.random.default_rng(12)
        base = rng.normal(size=(1, 1, 16, 16))
        preds = [Tensor(base.copy()) for _ in range(4)]
        mask = (rng.uniform(size=(1, 16, 16)) < 0.2).astype(float)
        cfg = LossConfig()
        total, _ = hierarchical_loss(preds, mask, cfg)
        single = (dice_sym(Tensor(base), mask, cfg.smooth) +
                  focal_mod(Tensor(base), mask, cfg)).item()
        assert total.item() == pytest.approx(4.0 * single, rel=1e-12)

    def test_linear_in_level_weights(self):
        rng = np.random.default_rng(13)
        preds = self._preds(rng)
        mask = (rng.uniform(size=(1, 16, 16)) < 0.2).astype(float)
        t1, _ = hierarchical_loss(preds, mask, LossConfig(level_weights=(1, 2, 0.5, 3)))
        t2, _ = hierarchical_loss(preds, mask, LossConfig(level_weights=(2, 4, 1.0, 6)))
        assert t2.item() == pytest.approx(2.0 * t1.item(), rel=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(14)
        z = rng.normal(size=(1, 1, 8, 8))
        mask = (rng.uniform(size=(1, 8, 8)) < 0.3).astype(float)
        perm = rng.permutation(64)
        zp = z.reshape(1, 1, -1)[:, :, perm].reshape(1, 1, 8, 8)
        mp = mask.reshape(1, -1)[:, perm].reshape(1, 8, 8)
        cfg = LossConfig()
        a = (dice_sym(Tensor(z), mask) + focal_mod(Tensor(z), mask, cfg)).item()
        b = (dice_sym(Tensor(zp), mp) + focal_mod(Tensor(zp), mp, cfg)).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_gradient_through_resize_and_terms(self):
        # 1x1x8x8 ground truth; two levels derived from one leaf.
        rng = np.random.default_rng(15)
        mask = (rng.uniform(size=(1, 8, 8)) < 0.3).astype(float)
        cfg = LossConfig()
        x0 = rng.normal(size=(1, 1, 4, 4))

        def f(t):
            preds = [t, ad.bilinear_resize(t, 2, 2)]
            cfg2 = LossConfig(level_weights=(1.0, 1.0))
            total, _ = hierarchical_loss(preds, mask, cfg2)
            return total

        xt = Tensor(x0, requires_grad=True)
        f(xt).backward()
        want = finite_diff_grad(f, Tensor(x0)).data
        assert relative_error(xt.grad, want) <= 1e-4
