"""Loss functions: hand-evaluated examples, oracle equivalence, invariances."""

import numpy as np
import pytest
from oracles import finite_difference, max_rel_error, scl_oracle

from localdeg import autodiff as ad
from localdeg.autodiff import Tensor, backward
from localdeg.errors import ContractViolationError, DimensionError
from localdeg.losses import (
    LossConfig,
    frame_supervision_loss,
    slice_consistency_loss,
    supervised_contrastive_loss,
    utterance_quality_loss,
)


def unit_rows(rng, n, d):
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class TestUtteranceQualityLoss:
    def test_exact_estimates_zero_clipped_term(self):
        cfg = LossConfig(clip_margin=0.0, pair_margin=10.0)
        y = np.array([3.0, 4.0])
        loss = utterance_quality_loss(Tensor(y.copy()), y, cfg)
        assert float(loss.data) == pytest.approx(0.0)

    def test_error_at_margin_contributes_zero(self):
        cfg = LossConfig(clip_margin=0.25, pair_margin=10.0)
        loss = utterance_quality_loss(
            Tensor(np.array([3.25, 4.25])), np.array([3.0, 4.0]), cfg
        )
        assert float(loss.data) == pytest.approx(0.0)

    def test_hand_case(self):
        # clipped term mean(0.25, 0.25) = 0.25; pair term |0 - (-1)| = 1
        cfg = LossConfig(clip_margin=0.25, pair_margin=0.0)
        loss = utterance_quality_loss(
            Tensor(np.array([3.5, 3.5])), np.array([3.0, 4.0]), cfg
        )
        assert float(loss.data) == pytest.approx(1.25)

    def test_single_item_skips_pair_term(self, caplog):
        cfg = LossConfig(clip_margin=0.0)
        with caplog.at_level("WARNING"):
            loss = utterance_quality_loss(Tensor(np.array([3.5])), np.array([3.0]), cfg)
        assert float(loss.data) == pytest.approx(0.5)
        assert any("pairwise term skipped" in m for m in caplog.messages)


class TestSliceConsistency:
    def test_identical_slices_are_zero(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((20, 4)))
        q = Tensor(rng.standard_normal(20))
        xs = Tensor(x.data[5:15].copy())
        qs = Tensor(q.data[5:15].copy())
        loss = slice_consistency_loss(x, q, xs, qs, 5)
        assert float(loss.data) == 0.0

    def test_single_frame_epsilon(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal((20, 4)))
        q = Tensor(rng.standard_normal(20))
        xs_data = x.data[5:15].copy()
        xs_data[3] += 1e-3
        loss = slice_consistency_loss(x, q, Tensor(xs_data), Tensor(q.data[5:15].copy()), 5)
        assert float(loss.data) == pytest.approx(4 * 1e-6 / 10.0)

    def test_gradient_reaches_both_branches(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal((12, 3)), requires_grad=True)
        q = Tensor(rng.standard_normal(12), requires_grad=True)
        xs = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
        qs = Tensor(rng.standard_normal(6), requires_grad=True)

        def run():
            return float(slice_consistency_loss(x, q, xs, qs, 3).data)

        backward(slice_consistency_loss(x, q, xs, qs, 3))
        fd = finite_difference(run, [x, q, xs, qs])
        assert max_rel_error([x.grad, q.grad, xs.grad, qs.grad], fd) < 1e-4

    def test_misaligned_rejected(self):
        x = Tensor(np.zeros((10, 3)))
        q = Tensor(np.zeros(10))
        with pytest.raises(DimensionError):
            slice_consistency_loss(x, q, Tensor(np.zeros((4, 2))), Tensor(np.zeros(4)), 0)


class TestFrameSupervision:
    def test_exact_match_is_zero(self):
        q = np.linspace(1, 5, 9)
        assert float(frame_supervision_loss(Tensor(q.copy()), q).data) == 0.0

    def test_constant_offset(self):
        q = np.linspace(1, 4, 7)
        loss = frame_supervision_loss(Tensor(q + 0.5), q)
        assert float(loss.data) == pytest.approx(0.5)

    def test_mixed_hand_case(self):
        loss = frame_supervision_loss(
            Tensor(np.array([4.8, 2.0])), np.array([4.0, 3.0])
        )
        assert float(loss.data) == pytest.approx(0.9)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            frame_supervision_loss(Tensor(np.zeros(3)), np.zeros(4))


def run_scl(z, labels, utt, frames, cfg):
    loss, stats = supervised_contrastive_loss(
        Tensor(z), np.asarray(labels), np.asarray(utt), np.asarray(frames), cfg
    )
    return float(loss.data), stats


class TestSupervisedContrastive:
    def test_two_identical_same_class(self):
        cfg = LossConfig(temperature=1.0, window=0)
        z = np.array([[1.0, 0.0], [1.0, 0.0]])
        loss, _ = run_scl(z, [1, 1], [0, 1], [0, 0], cfg)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_two_different_classes_no_positives(self):
        cfg = LossConfig(temperature=1.0, window=0)
        z = unit_rows(np.random.default_rng(0), 2, 4)
        loss, stats = run_scl(z, [1, 2], [0, 1], [0, 0], cfg)
        assert loss == 0.0
        assert stats["zero_positive_anchors"] == 2
        assert stats["contributing_anchors"] == 0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_double_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        b, L, k = rng.integers(1, 5), rng.integers(4, 17), rng.integers(1, 6)
        lam = int(rng.choice([0, 2, 10]))
        excluded = (int(k) + 1,) if rng.random() < 0.5 else ()
        n = int(b) * int(L)
        z = unit_rows(rng, n, 8)
        labels = rng.integers(1, k + 2, n)
        utt = np.repeat(np.arange(b), L)
        frames = np.tile(np.arange(L), b)
        cfg = LossConfig(temperature=0.1, window=lam, excluded_classes=excluded)
        loss, _ = run_scl(z, labels, utt, frames, cfg)
        expected = scl_oracle(z, labels, utt, frames, 0.1, lam, set(excluded))
        assert loss == pytest.approx(expected, abs=1e-10)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(5)
        z = unit_rows(rng, 24, 6)
        labels = rng.integers(1, 5, 24)
        utt = np.repeat(np.arange(3), 8)
        frames = np.tile(np.arange(8), 3)
        cfg = LossConfig(temperature=0.2, window=2)
        base, _ = run_scl(z, labels, utt, frames, cfg)
        relabel = {1: 4, 2: 3, 3: 1, 4: 2}
        mapped = np.array([relabel[c] for c in labels])
        again, _ = run_scl(z, mapped, utt, frames, cfg)
        assert again == pytest.approx(base, abs=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(6)
        z = unit_rows(rng, 16, 6)
        labels = rng.integers(1, 4, 16)
        utt = np.repeat(np.arange(2), 8)
        frames = np.tile(np.arange(8), 2)
        cfg = LossConfig(temperature=0.1, window=2)
        base, _ = run_scl(z, labels, utt, frames, cfg)
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        rotated, _ = run_scl(z @ q, labels, utt, frames, cfg)
        assert rotated == pytest.approx(base, abs=1e-9)

    def test_window_exclusion_matches_manual_masking(self):
        # removing a window pair by pushing the frames far apart changes the
        # loss; keeping them close must equal the oracle that drops the pair
        rng = np.random.default_rng(7)
        z = unit_rows(rng, 6, 4)
        labels = np.array([1, 1, 1, 2, 2, 2])
        utt = np.zeros(6, dtype=int)
        frames = np.array([0, 1, 10, 20, 30, 40])
        cfg = LossConfig(temperature=0.5, window=2)
        loss, _ = run_scl(z, labels, utt, frames, cfg)
        expected = scl_oracle(z, labels, utt, frames, 0.5, 2, set())
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(8)
        for seed in range(20):
            r = np.random.default_rng(seed)
            z = unit_rows(r, 12, 5)
            labels = r.integers(1, 4, 12)
            cfg = LossConfig(temperature=0.1, window=1)
            loss, _ = run_scl(z, labels, np.zeros(12, int), np.arange(12) * 5, cfg)
            assert loss >= -1e-12

    def test_non_unit_rows_rejected(self):
        cfg = LossConfig()
        with pytest.raises(ContractViolationError):
            run_scl(np.ones((3, 4)), [1, 1, 1], [0, 0, 0], [0, 5, 10], cfg)

    def test_excluded_anchor_still_in_denominators(self):
        # with exclusion, remaining anchors keep the excluded rows in their
        # denominator sums: verified against the oracle which does the same
        rng = np.random.default_rng(9)
        z = unit_rows(rng, 8, 4)
        labels = np.array([1, 1, 2, 2, 3, 3, 3, 3])
        utt = np.zeros(8, int)
        frames = np.arange(8) * 100
        cfg = LossConfig(temperature=0.3, window=1, excluded_classes=(3,))
        loss, stats = run_scl(z, labels, utt, frames, cfg)
        expected = scl_oracle(z, labels, utt, frames, 0.3, 1, {3})
        assert loss == pytest.approx(expected, abs=1e-12)
        assert stats["skipped_anchors"] == 4
        assert stats["contributing_anchors"] == 4

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(10)
        raw = Tensor(rng.standard_normal((10, 4)), requires_grad=True)
        labels = rng.integers(1, 3, 10)
        utt = np.repeat([0, 1], 5)
        frames = np.tile(np.arange(5), 2)
        cfg = LossConfig(temperature=0.2, window=1)

        def expr():
            z = ad.normalize_rows(raw)
            loss, _ = supervised_contrastive_loss(z, labels, utt, frames, cfg)
            return loss

        backward(expr())
        fd = finite_difference(lambda: float(expr().data), [raw])
        assert max_rel_error([raw.grad], fd) < 1e-4
