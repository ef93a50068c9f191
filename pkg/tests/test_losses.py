import math

import numpy as np
import pytest

from voxalign.config import desk_stage1
from voxalign.dataset import SplitSpec, SyntheticSpec, generate_synthetic, rng_from_seed, split_dataset
from voxalign.errors import PreconditionError, ValidationError
from voxalign.losses import (
    AlignConfig,
    LossValue,
    alignment_loss,
    grad_check,
    grad_check_report,
    mse_loss,
    total_loss,
)
from voxalign.model import build_model, stage2_freeze_mask, trainable_names
from voxalign.trainer import make_loss_fn


class TestMseLoss:
    def test_zero_at_equality(self):
        x = rng_from_seed(0).standard_normal((3, 4))
        assert mse_loss(x, x).value == 0.0

    def test_constant_offset(self):
        x = rng_from_seed(1).standard_normal((3, 4))
        assert mse_loss(x + 1.0, x).value == pytest.approx(1.0, abs=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = rng_from_seed(2)
        pred = rng.standard_normal((3, 4))
        target = rng.standard_normal((3, 4))
        total = 0.0
        for i in range(3):
            for j in range(4):
                total += (pred[i, j] - target[i, j]) ** 2
        assert mse_loss(pred, target).value == pytest.approx(total / 12, rel=1e-12)

    def test_gradient_formula(self):
        rng = rng_from_seed(3)
        pred = rng.standard_normal((2, 5))
        target = rng.standard_normal((2, 5))
        g = mse_loss(pred, target).gradients["pred"]
        np.testing.assert_allclose(g, 2.0 * (pred - target) / 10, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            mse_loss(np.ones((2, 3)), np.ones((3, 2)))

    def test_nonnegative(self):
        rng = rng_from_seed(4)
        for _ in range(10):
            v = mse_loss(rng.standard_normal((3, 3)), rng.standard_normal((3, 3))).value
            assert v >= 0.0


class TestAlignmentLoss:
    def test_single_sample_exactly_zero(self):
        out = alignment_loss(np.array([[0.37]]), AlignConfig(tau=0.7))
        assert out.value == 0.0

    def test_uniform_scores_give_log_b(self):
        out = alignment_loss(np.full((4, 4), 0.25), AlignConfig(tau=1.0))
        assert abs(out.value - math.log(4.0)) < 1e-12

    def test_b2_explicit_softmax_oracle(self):
        s = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = alignment_loss(s, AlignConfig(tau=1.0))
        expected = -math.log(math.exp(1.0) / (math.exp(1.0) + 1.0))
        assert out.value == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.313262, abs=1e-6)

    def test_row_shift_invariance(self):
        rng = rng_from_seed(5)
        s = rng.standard_normal((5, 5))
        cfg = AlignConfig(tau=0.1)
        base = alignment_loss(s, cfg).value
        shifted = s.copy()
        shifted[2] += 11.5
        assert abs(alignment_loss(shifted, cfg).value - base) < 1e-9

    def test_monotone_in_positive_score(self):
        rng = rng_from_seed(6)
        s = rng.standard_normal((4, 4))
        cfg = AlignConfig(tau=0.5)
        before = alignment_loss(s, cfg).value
        s2 = s.copy()
        s2[1, 1] += 0.25
        assert alignment_loss(s2, cfg).value < before

    def test_nonnegative(self):
        rng = rng_from_seed(7)
        for _ in range(20):
            b = int(rng.integers(1, 7))
            s = rng.standard_normal((b, b)) * 3
            assert alignment_loss(s, AlignConfig(tau=0.3)).value >= 0.0

    def test_gradient_is_softmax_minus_identity(self):
        rng = rng_from_seed(8)
        s = rng.standard_normal((3, 3))
        tau = 0.4
        out = alignment_loss(s, AlignConfig(tau=tau))
        scaled = s / tau
        e = np.exp(scaled - scaled.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(out.gradients["scores"], (p - np.eye(3)) / (3 * tau),
                                   atol=1e-12)

    def test_tau_validation(self):
        with pytest.raises(PreconditionError):
            AlignConfig(tau=0.0)
        with pytest.raises(PreconditionError):
            AlignConfig(tau=-1.0)

    def test_symmetric_variant(self):
        rng = rng_from_seed(9)
        s = rng.standard_normal((4, 4))
        one = alignment_loss(s, AlignConfig(tau=0.2)).value
        other = alignment_loss(s.T, AlignConfig(tau=0.2)).value
        sym = alignment_loss(s, AlignConfig(tau=0.2, symmetric=True)).value
        assert sym == pytest.approx(0.5 * (one + other), abs=1e-12)


class TestTotalLoss:
    def test_lambda_zero_equals_mse_exactly(self):
        rng = rng_from_seed(10)
        pred, target = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
        mse = mse_loss(pred, target)
        align = alignment_loss(rng.standard_normal((2, 2)), AlignConfig(tau=1.0))
        out = total_loss(mse, align, AlignConfig(tau=1.0, lambda_=0.0))
        assert out.value == mse.value
        assert set(out.gradients) == set(mse.gradients)
        assert np.array_equal(out.gradients["pred"], mse.gradients["pred"])

    def test_zero_alignment_contributes_nothing(self):
        mse = LossValue(0.42, {"pred": np.ones((1, 1))})
        align = LossValue(0.0, {"scores": np.zeros((1, 1))})
        out = total_loss(mse, align, AlignConfig(tau=1.0, lambda_=1.0))
        assert out.value == 0.42

    def test_weighted_arithmetic(self):
        mse = LossValue(0.2, {})
        align = LossValue(1.3863, {})
        out = total_loss(mse, align, AlignConfig(tau=1.0, lambda_=1e-3))
        assert out.value == pytest.approx(0.2013863, abs=1e-12)

    def test_linear_in_lambda(self):
        rng = rng_from_seed(11)
        mse = LossValue(float(rng.random()), {})
        align = LossValue(float(rng.random()), {})
        lams = (0.1, 0.5, 0.9)
        values = [total_loss(mse, align, AlignConfig(tau=1.0, lambda_=l)).value
                  for l in lams]
        # Collinearity: slope between consecutive points is constant.
        slope1 = (values[1] - values[0]) / (lams[1] - lams[0])
        slope2 = (values[2] - values[1]) / (lams[2] - lams[1])
        assert abs(slope1 - slope2) < 1e-12

    def test_gradients_combined_linearly(self):
        g_m = np.array([[1.0, 2.0]])
        g_a = np.array([[10.0, -4.0]])
        mse = LossValue(1.0, {"shared": g_m})
        align = LossValue(2.0, {"shared": g_a, "only_align": g_a.copy()})
        out = total_loss(mse, align, AlignConfig(tau=1.0, lambda_=0.5))
        np.testing.assert_allclose(out.gradients["shared"], g_m + 0.5 * g_a)
        np.testing.assert_allclose(out.gradients["only_align"], 0.5 * g_a)


class TestGradCheck:
    def test_quadratic_toy_near_exact(self):
        theta = rng_from_seed(12).standard_normal(10)

        def loss_fn(params):
            t = params["theta"]
            return LossValue(float(np.sum(t * t)), {"theta": 2.0 * t})

        err = grad_check(loss_fn, {"theta": theta}, epsilon=1e-5)
        assert err < 1e-9

    def test_full_stage2_loss_below_1e6(self):
        # Frozen well-conditioned instance of the full stage-2 loss.
        spec = SyntheticSpec(n_samples=100, latent_dim=4, d_img=12, d_text=6,
                             n_vertices=15, seed=0)
        ds, _ = generate_synthetic(spec)
        split = split_dataset(ds, SplitSpec(seed=0))
        model = build_model(ds.manifest.d_img, ds.manifest.d_text,
                            ds.voxel_targets[split[0]], desk_stage1(pca_k=6, seed=0))
        idx = split[0][:8]
        mask = stage2_freeze_mask(model, 2)
        trainable = trainable_names(mask)
        params = {n: model.named_tensors()[n] for n in trainable}
        fn = make_loss_fn(model, ds.image_features[idx], ds.text_embeddings[idx],
                          ds.voxel_targets[idx], AlignConfig(tau=0.05, lambda_=0.1),
                          trainable)
        report = grad_check_report(fn, params, epsilon=1e-5, seed=0)
        assert max(report.values()) < 1e-6

    def test_frozen_tensors_absent_from_report(self):
        spec = SyntheticSpec(n_samples=60, seed=13)
        ds, _ = generate_synthetic(spec)
        split = split_dataset(ds, SplitSpec(seed=13))
        model = build_model(ds.manifest.d_img, ds.manifest.d_text,
                            ds.voxel_targets[split[0]], desk_stage1(pca_k=4, seed=13))
        mask = stage2_freeze_mask(model, 1)
        trainable = trainable_names(mask)
        idx = split[0][:4]
        fn = make_loss_fn(model, ds.image_features[idx], ds.text_embeddings[idx],
                          ds.voxel_targets[idx], AlignConfig(tau=0.05, lambda_=0.01),
                          trainable)
        params = {n: model.named_tensors()[n] for n in trainable}
        report = grad_check_report(fn, params, epsilon=1e-5, seed=13)
        assert set(report) == set(trainable)
        assert "head.projection.weight" not in report
        assert "extractor.block0.weight" not in report

    def test_epsilon_bounds_enforced(self):
        def loss_fn(params):
            return LossValue(0.0, {"t": np.zeros(1)})

        with pytest.raises(PreconditionError):
            grad_check(loss_fn, {"t": np.zeros(1)}, epsilon=1e-3)
        with pytest.raises(PreconditionError):
            grad_check(loss_fn, {"t": np.zeros(1)}, epsilon=1e-9)

    def test_non_finite_loss_rejected(self):
        def loss_fn(params):
            return LossValue(float("nan"), {"t": np.zeros(1)})

        with pytest.raises(ValidationError):
            grad_check(loss_fn, {"t": np.zeros(1)}, epsilon=1e-5)
