"""Depth-alignment tests: each operation is checked against an independent
oracle (double-loop morphology, lstsq/grid-search regression, scalar formula
replay, 1-D harmonic closed form, dense 2-D convolution)."""

import numpy as np
import pytest

from scenefuse.alignment import (
    AlignConfig,
    AlignmentParams,
    align,
    apply_alignment,
    extract_boundary,
    inpaint_depth,
    make_weight_map,
    solve_alignment,
)
from scenefuse.errors import AlignmentFailure, ConfigError, InpaintAnchorError
from scenefuse.geometry import D_MAX, D_MIN

from oracles import boundary_oracle, dense_gaussian_blur


class TestExtractBoundary:
    def test_all_ones_has_no_boundary(self):
        assert extract_boundary(np.ones((8, 8), np.uint8), 3).sum() == 0

    def test_all_zeros_has_no_boundary(self):
        assert extract_boundary(np.zeros((8, 8), np.uint8), 3).sum() == 0

    def test_single_hole_radius_one(self):
        mask = np.ones((8, 8), np.uint8)
        mask[3, 3] = 0
        boundary = extract_boundary(mask, 1)
        expected = np.zeros((8, 8), np.uint8)
        expected[2:5, 2:5] = 1
        expected[3, 3] = 0
        assert np.array_equal(boundary, expected)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(100):
            mask = (rng.random((64, 64)) > rng.uniform(0.2, 0.8)).astype(np.uint8)
            radius = int(rng.integers(1, 8))
            assert np.array_equal(extract_boundary(mask, radius),
                                  boundary_oracle(mask, radius))


class TestSolveAlignment:
    def test_identity_when_pred_equals_rendered(self, rng):
        depth = rng.uniform(1, 10, (16, 16))
        params = solve_alignment(depth, depth, np.ones((16, 16), np.uint8))
        assert params.alpha == pytest.approx(1.0, abs=1e-12)
        assert params.beta == pytest.approx(0.0, abs=1e-12)

    def test_exact_affine_recovery(self, rng):
        rendered = rng.uniform(1, 10, (32, 32))
        boundary = np.ones((32, 32), np.uint8)
        for a, b in [(2.0, 0.01), (0.5, 0.05), (1.3, 0.0)]:
            pred = 1.0 / ((1.0 / rendered - b) / a)
            got = solve_alignment(pred, rendered, boundary)
            assert got.alpha == pytest.approx(a, abs=1e-9)
            assert got.beta == pytest.approx(b, abs=1e-9)

    def test_empty_boundary_returns_identity(self, rng):
        depth = rng.uniform(1, 10, (8, 8))
        params = solve_alignment(depth, depth * 2, np.zeros((8, 8), np.uint8))
        assert (params.alpha, params.beta) == (1.0, 0.0)

    def test_constant_disparity_uses_mean_ratio(self):
        pred = np.full((8, 8), 4.0)
        rendered = np.full((8, 8), 2.0)
        params = solve_alignment(pred, rendered, np.ones((8, 8), np.uint8))
        assert params.alpha == pytest.approx(2.0)  # mean(1/2) / mean(1/4)
        assert params.beta == 0.0

    def test_invalid_boundary_depth_rejected(self):
        from scenefuse.errors import DimensionMismatchError

        pred = np.array([[0.0, 2.0]])
        rendered = np.array([[1.0, 1.0]])
        with pytest.raises(DimensionMismatchError):
            solve_alignment(pred, rendered, np.ones((1, 2), np.uint8))

    def test_negative_scale_raises(self):
        # decreasing relationship between disparities forces alpha < 0
        pred = np.array([[1.0, 2.0, 4.0, 8.0]])
        rendered = np.array([[8.0, 4.0, 2.0, 1.0]])
        with pytest.raises(AlignmentFailure):
            solve_alignment(pred, rendered, np.ones((1, 4), np.uint8))

    def test_noisy_fit_matches_independent_oracle(self, rng):
        rendered = rng.uniform(2, 8, (40, 40))
        boundary = (rng.random((40, 40)) > 0.5).astype(np.uint8)
        a, b = 1.7, 0.02
        disp_pred = (1.0 / rendered - b) / a + rng.normal(0, 1e-3, rendered.shape)
        pred = 1.0 / disp_pred
        got = solve_alignment(pred, rendered, boundary)

        # oracle 1: dense grid search refined by lstsq on the design matrix
        x = (1.0 / pred)[boundary > 0]
        y = (1.0 / rendered)[boundary > 0]
        best = None
        for aa in np.linspace(0.5 * a, 1.5 * a, 41):
            for bb in np.linspace(-0.05, 0.05, 41):
                r = ((aa * x + bb - y) ** 2).sum()
                if best is None or r < best[0]:
                    best = (r, aa, bb)
        design = np.stack([x, np.ones_like(x)], axis=1)
        refined, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert got.alpha == pytest.approx(refined[0], abs=1e-6)
        assert got.beta == pytest.approx(refined[1], abs=1e-6)
        # grid-search winner agrees to grid resolution
        assert abs(best[1] - got.alpha) <= 0.5 * a / 40 + 1e-12
        assert abs(best[2] - got.beta) <= 0.1 / 40 + 1e-12

    def test_objective_optimality_against_perturbations(self, rng):
        rendered = rng.uniform(2, 8, (24, 24))
        pred = 1.0 / ((1.0 / rendered - 0.01) / 1.5)
        pred = 1.0 / (1.0 / pred + rng.normal(0, 5e-4, pred.shape))
        boundary = np.ones((24, 24), np.uint8)
        got = solve_alignment(pred, rendered, boundary)
        x = (1.0 / pred).ravel()
        y = (1.0 / rendered).ravel()

        def residual(a, b):
            return ((a * x + b - y) ** 2).sum()

        base = residual(got.alpha, got.beta)
        deltas = rng.uniform(-0.1, 0.1, (10_000, 2))
        for da, db in deltas:
            assert base <= residual(got.alpha + da, got.beta + db) + 1e-12


class TestApplyAlignment:
    def test_identity_params(self, rng):
        depth = rng.uniform(0.5, 100, (16, 16)).astype(np.float32)
        out, clamps = apply_alignment(depth, AlignmentParams(1.0, 0.0))
        assert np.array_equal(out, depth)
        assert clamps == 0

    def test_closed_form_halving(self):
        depth = np.full((8, 8), 4.0, np.float32)
        out, _ = apply_alignment(depth, AlignmentParams(2.0, 0.0))
        np.testing.assert_allclose(out, 2.0, atol=1e-7)

    def test_pointwise_matches_scalar_formula(self, rng):
        for _ in range(20):
            depth = rng.uniform(0.1, 50, (12, 12))
            a = rng.uniform(0.3, 3.0)
            b = rng.uniform(-0.005, 0.05)
            out, _ = apply_alignment(depth, AlignmentParams(a, b))
            expected = np.clip(1.0 / (a / depth + b), D_MIN, D_MAX)
            np.testing.assert_allclose(out, expected.astype(np.float32), rtol=1e-12)

    def test_invalid_pixels_stay_invalid(self):
        depth = np.array([[0.0, 4.0]], np.float32)
        out, _ = apply_alignment(depth, AlignmentParams(2.0, 0.0))
        assert out[0, 0] == 0.0 and out[0, 1] == pytest.approx(2.0)

    def test_nonpositive_disparity_clamps_to_dmax_and_counts(self):
        depth = np.full((2, 2), 10.0, np.float32)
        out, clamps = apply_alignment(depth, AlignmentParams(0.5, -0.06))
        # 0.5/10 - 0.06 = -0.01 <= 0 -> clamp to D_MAX
        assert (out == D_MAX).all()
        assert clamps == 4

    def test_monotone_in_depth_over_clampfree_range(self, rng):
        a, b = 1.4, 0.004
        d = np.sort(rng.uniform(0.5, 80, 64))
        out, _ = apply_alignment(d.reshape(1, -1), AlignmentParams(a, b))
        assert (np.diff(out[0]) > 0).all()


class TestInpaintDepth:
    def test_constant_boundary_fills_constant(self, rng):
        depth = np.full((16, 16), 3.0, np.float32)
        mask = np.ones((16, 16), np.uint8)
        mask[4:12, 4:12] = 0
        filled = inpaint_depth(depth, mask, AlignConfig())
        np.testing.assert_allclose(filled, 3.0, atol=1e-6)

    def test_1d_strip_linear_in_disparity(self):
        depth = np.zeros((3, 12), np.float32)
        mask = np.zeros((3, 12), np.uint8)
        depth[:, 0], depth[:, 11] = 2.0, 1.0    # disparities 0.5 and 1.0
        mask[:, 0], mask[:, 11] = 1, 1
        cfg = AlignConfig(inpaint_iters=20_000, inpaint_tol=1e-12)
        filled = inpaint_depth(depth, mask, cfg)
        expected_disp = np.linspace(0.5, 1.0, 12)
        np.testing.assert_allclose(1.0 / filled[1], expected_disp, atol=1e-4)

    def test_known_pixels_unchanged(self, rng):
        depth = rng.uniform(1, 5, (16, 16)).astype(np.float32)
        mask = (rng.random((16, 16)) > 0.5).astype(np.uint8)
        mask[0, 0] = 1
        filled = inpaint_depth(depth, mask, AlignConfig(inpaint_iters=50))
        sel = mask > 0
        assert np.array_equal(filled[sel], depth[sel])

    def test_maximum_principle_50_random_cases(self, rng):
        from scipy import ndimage

        for _ in range(50):
            depth = rng.uniform(1, 9, (24, 24)).astype(np.float32)
            mask = (rng.random((24, 24)) > rng.uniform(0.3, 0.7)).astype(np.uint8)
            if not mask.any() or mask.all():
                continue
            filled = inpaint_depth(depth, mask, AlignConfig(inpaint_iters=80))
            labels, n = ndimage.label(mask == 0)
            for comp in range(1, n + 1):
                hole = labels == comp
                ring = ndimage.binary_dilation(hole) & (mask > 0)
                if not ring.any():
                    continue
                disp = 1.0 / depth[ring].astype(np.float64)
                got = 1.0 / filled[hole].astype(np.float64)
                assert got.min() >= disp.min() - 1e-9
                assert got.max() <= disp.max() + 1e-9

    def test_all_zero_mask_raises(self):
        with pytest.raises(InpaintAnchorError):
            inpaint_depth(np.ones((4, 4), np.float32), np.zeros((4, 4), np.uint8),
                          AlignConfig())


class TestWeightMap:
    def test_all_ones_gives_all_ones(self):
        w = make_weight_map(np.ones((16, 16), np.uint8), 2.0)
        np.testing.assert_allclose(w, 1.0)

    def test_kernel_support_bound(self):
        # weight deep inside the hole is exactly 0 (truncated kernel)
        mask = np.ones((64, 64), np.uint8)
        mask[:, 32:] = 0
        sigma = 3.0
        w = make_weight_map(mask, sigma)
        radius = int(np.ceil(4 * sigma))
        assert w[32, 32 + radius + 1] < 1e-3
        assert w[32, 32 - radius - 2] > 1 - 1e-3

    def test_separable_equals_dense_convolution(self, rng):
        for sigma in (0.8, 1.5, 2.4):
            mask = (rng.random((16, 16)) > 0.5).astype(np.uint8)
            got = make_weight_map(mask, sigma)
            oracle = dense_gaussian_blur(mask, sigma)
            np.testing.assert_allclose(got, oracle, atol=1e-9)

    def test_values_in_unit_interval(self, rng):
        w = make_weight_map((rng.random((32, 32)) > 0.5).astype(np.uint8), 5.0)
        assert w.min() >= 0.0 and w.max() <= 1.0

    def test_rejects_bad_sigma(self):
        with pytest.raises(ConfigError):
            make_weight_map(np.ones((4, 4), np.uint8), 0.0)


class TestAlignComposite:
    def test_full_mask_identity(self, rng):
        depth = rng.uniform(1, 10, (32, 32)).astype(np.float32)
        res = align(depth, depth, np.ones((32, 32), np.uint8))
        assert np.array_equal(res.depth, depth)
        assert (res.params.alpha, res.params.beta) == (1.0, 0.0)
        assert not res.fallback

    def test_blend_limits(self, rng):
        # left half covered, right half hole; sigma small enough that both
        # "deep" zones exist
        n = 64
        sigma, radius = 3.0, 2
        mask = np.zeros((n, n), np.uint8)
        mask[:, : n // 2] = 1
        rendered = np.zeros((n, n), np.float32)
        rendered[:, : n // 2] = rng.uniform(4.0, 4.4, (n, n // 2))
        a, b = 1.6, 0.015
        truth = np.where(mask > 0, rendered, 4.2).astype(np.float64)
        pred = (1.0 / ((1.0 / truth - b) / a)).astype(np.float32)
        cfg = AlignConfig(dilation_radius=radius, blur_sigma=sigma,
                          inpaint_iters=4000, inpaint_tol=1e-10)
        res = align(pred, rendered, mask, cfg)
        corrected, _ = apply_alignment(pred, res.params)
        filled = inpaint_depth(rendered, mask, cfg)

        margin = int(np.ceil(4 * sigma)) + 1
        deep_in = np.zeros_like(mask, bool)
        deep_in[:, : n // 2 - margin] = True
        deep_out = np.zeros_like(mask, bool)
        deep_out[:, n // 2 + margin:] = True
        assert (np.abs(res.depth[deep_in] - filled[deep_in])
                / filled[deep_in]).max() <= 1e-3
        assert (np.abs(res.depth[deep_out] - corrected[deep_out])
                / corrected[deep_out]).max() <= 1e-3
        # pointwise convexity everywhere
        lo = np.minimum(filled, corrected) - 1e-5
        hi = np.maximum(filled, corrected) + 1e-5
        assert (res.depth >= lo).all() and (res.depth <= hi).all()

    def test_all_zero_mask_returns_corrected(self, rng):
        pred = rng.uniform(1, 5, (16, 16)).astype(np.float32)
        rendered = np.zeros((16, 16), np.float32)
        res = align(pred, rendered, np.zeros((16, 16), np.uint8))
        corrected, _ = apply_alignment(pred, AlignmentParams(1.0, 0.0))
        assert np.array_equal(res.depth, corrected)

    def test_fallback_on_alignment_failure(self):
        pred = np.tile(np.array([[1.0, 2.0, 4.0, 8.0]]), (4, 1)).astype(np.float32)
        rendered = np.tile(np.array([[8.0, 4.0, 2.0, 1.0]]), (4, 1)).astype(np.float32)
        mask = np.ones((4, 4), np.uint8)
        mask[:, 2:] = 0
        res = align(pred, rendered, mask, AlignConfig(dilation_radius=4, blur_sigma=1.0))
        assert res.fallback
        assert (res.params.alpha, res.params.beta) == (1.0, 0.0)

    def test_affine_recovery_invariant(self, rng):
        # any rendered field, any (a>0, b>=0) with positive disparities:
        # alignment on the matching perturbed prediction returns (a, b)
        for _ in range(10):
            rendered = rng.uniform(1.5, 12, (24, 24))
            a = rng.uniform(0.4, 2.5)
            b = rng.uniform(0.0, 0.05)
            pred = 1.0 / ((1.0 / rendered - b) / a)
            got = solve_alignment(pred, rendered, np.ones((24, 24), np.uint8))
            assert got.alpha == pytest.approx(a, abs=1e-6)
            assert got.beta == pytest.approx(b, abs=1e-6)
