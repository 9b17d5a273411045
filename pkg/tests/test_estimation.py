"""Tests for histogram-based mixture estimation and boundary placement."""

import numpy as np
import pytest

from flashdva.estimation import (MEAN_RANGE, SIGMA_CAP, SIGMA_FLOOR,
                                 bisect_quantile_bounds, dedupe_boundaries,
                                 empirical_quantile_means,
                                 empirical_quantiles, equal_prob_boundaries,
                                 lm_fit, predict_bin_probs,
                                 rescale_boundaries)
from flashdva.info import GaussianMixtureModel

# Standard normal quartile, frozen for boundary oracles.
Z_75 = 0.6744897501960817

FRESH = GaussianMixtureModel([2.8, 5.2, 6.4, 7.86],
                             [0.35, 0.05, 0.05, 0.05])


def sample_mixture(model, n, rng):
    levels = rng.integers(0, 4, size=n)
    return (np.asarray(model.means)[levels]
            + rng.standard_normal(n) * np.asarray(model.sigmas)[levels])


class TestEqualProbBoundaries:
    def test_quartiles_of_collapsed_mixture(self):
        # Four identical components form a single Gaussian, whose
        # quartile boundaries are known in closed form.
        model = GaussianMixtureModel([3.0] * 4, [0.7] * 4)
        bounds = equal_prob_boundaries(model, n_bins=4)
        expect = 3.0 + 0.7 * np.array([-Z_75, 0.0, Z_75])
        assert np.allclose(bounds, expect, atol=1e-4)

    def test_symmetric_mixture_median(self):
        model = GaussianMixtureModel([-3.0, -1.0, 1.0, 3.0], [0.4] * 4)
        bounds = equal_prob_boundaries(model, n_bins=2)
        assert abs(bounds[0]) < 1e-4

    def test_octiles_hit_cdf_targets(self):
        bounds = equal_prob_boundaries(FRESH, n_bins=9)
        assert bounds.shape == (8,)
        assert np.all(np.diff(bounds) > 0)
        cdf = FRESH.cdf(bounds)
        assert np.max(np.abs(cdf - np.arange(1, 9) / 9.0)) < 2e-6

    def test_mass_outside_range_rejected(self):
        far = GaussianMixtureModel([99.0, 100.0, 101.0, 102.0], [0.1] * 4)
        with pytest.raises(ValueError):
            equal_prob_boundaries(far, n_bins=9)

    def test_too_few_bins_rejected(self):
        with pytest.raises(ValueError):
            equal_prob_boundaries(FRESH, n_bins=1)


class TestBoundaryHelpers:
    def test_rescale_is_ratio(self):
        out = rescale_boundaries([2.0, 4.0], 0.5, 1.0)
        assert np.allclose(out, [1.0, 2.0])
        out = rescale_boundaries([1.0], 0.6, 0.3)
        assert np.allclose(out, [2.0])

    def test_rescale_rejects_zero_previous(self):
        with pytest.raises(ValueError):
            rescale_boundaries([1.0], 0.5, 0.0)

    def test_dedupe_sorts_and_counts_drops(self):
        out, dropped = dedupe_boundaries([5.0, 3.0, 3.0, 7.0])
        assert np.allclose(out, [3.0, 5.0, 7.0])
        assert dropped == 1
        out, dropped = dedupe_boundaries([1.0, 2.0])
        assert dropped == 0

    def test_empirical_quantiles_uniform_histogram(self):
        # 4 equal bins over boundaries 1,2,3: CDF known at the edges, the
        # octile positions interpolate linearly (outer bins closed at a
        # quarter-span margin).
        q = empirical_quantiles([10, 10, 10, 10], [1.0, 2.0, 3.0],
                                (0.125, 0.375, 0.625, 0.875))
        assert np.allclose(q, [0.75, 1.5, 2.5, 3.25])

    def test_empirical_quantile_means_octiles(self):
        q = empirical_quantile_means([10, 10, 10, 10], [1.0, 2.0, 3.0])
        assert np.allclose(q, [0.75, 1.5, 2.5, 3.25])

    def test_predict_bin_probs_sum_to_one(self):
        probs = predict_bin_probs(FRESH, np.array([3.0, 5.0, 7.0]))
        assert probs.shape == (4,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)


class TestBisectQuantileBounds:
    def test_single_bracket_midpoint(self):
        mids, widths = bisect_quantile_bounds([0.5], [0.0, 1.0], [0.2, 0.8])
        assert mids[0] == pytest.approx(0.5)
        assert widths[0] == pytest.approx(1.0)

    def test_exact_hit_closes_bracket(self):
        mids, widths = bisect_quantile_bounds([0.5], [2.0], [0.5])
        assert mids[0] == pytest.approx(2.0)
        assert widths[0] == pytest.approx(0.0)

    def test_unbracketed_target_uses_range(self):
        mids, widths = bisect_quantile_bounds([0.5], [], [],
                                              lo=-1.0, hi=3.0)
        assert mids[0] == pytest.approx(1.0)
        assert widths[0] == pytest.approx(4.0)

    def test_sweeps_localize_all_octiles(self):
        # Repeatedly measuring the exact CDF at the proposed midpoints must
        # halve every bracket per sweep, landing on the true octiles even
        # from badly misplaced starting boundaries.
        targets = np.arange(1, 9) / 9.0
        truth = equal_prob_boundaries(FRESH, 9)
        bounds = np.array([1.0, 2.0, 3.0])
        seen_x, seen_f = [], []
        widths = np.array([np.inf])
        for _ in range(16):
            seen_x.extend(bounds)
            seen_f.extend(np.asarray(FRESH.cdf(bounds), dtype=float))
            mids, widths = bisect_quantile_bounds(targets, seen_x, seen_f)
            if np.max(widths) < 1e-3:
                break
            bounds = np.unique(mids)
        assert np.max(widths) < 1e-3
        assert np.max(np.abs(mids - truth)) < 1e-3


class TestLmFit:
    def bin_counts(self, model, n, rng, boundaries):
        draws = sample_mixture(model, n, rng)
        edges = np.concatenate(([-np.inf], boundaries, [np.inf]))
        counts, _ = np.histogram(draws, edges)
        return counts

    def test_recovers_synthetic_mixture(self):
        # Every init within ±5% of the generating parameters must walk back
        # to them, whether the whole mean vector is scaled coherently or
        # each parameter is perturbed independently.
        truth = GaussianMixtureModel([2.8, 5.2, 6.4, 7.86],
                                     [0.36, 0.09, 0.09, 0.09])
        bounds = equal_prob_boundaries(truth, 9)
        for seed in range(6):
            rng = np.random.default_rng(100 + seed)
            counts = self.bin_counts(truth, 200_000, rng, bounds)
            if seed % 2 == 0:
                init = GaussianMixtureModel(np.asarray(truth.means) * 1.05,
                                            np.asarray(truth.sigmas) * 0.95)
            else:
                init = GaussianMixtureModel(
                    truth.means * (1 + rng.uniform(-0.05, 0.05, 4)),
                    truth.sigmas * (1 + rng.uniform(-0.05, 0.05, 4)))
            model, report = lm_fit(counts, bounds, init)
            mean_err = np.max(np.abs(np.asarray(model.means) - truth.means))
            sig_rel = np.max(np.abs(np.asarray(model.sigmas) - truth.sigmas)
                             / np.asarray(truth.sigmas))
            assert mean_err < 0.05, (seed, model.means)
            assert sig_rel < 0.10, (seed, model.sigmas)
            assert report.iterations <= 100

    def test_exact_init_converges_immediately(self):
        bounds = equal_prob_boundaries(FRESH, 9)
        rng = np.random.default_rng(7)
        counts = self.bin_counts(FRESH, 500_000, rng, bounds)
        model, report = lm_fit(counts, bounds, FRESH)
        assert report.flag == "converged"
        assert report.residual < 1e-4
        assert report.iterations <= 30

    def test_final_residual_never_exceeds_initial(self):
        bounds = equal_prob_boundaries(FRESH, 9)
        rng = np.random.default_rng(8)
        counts = self.bin_counts(FRESH, 100_000, rng, bounds)
        init = GaussianMixtureModel([2.0, 4.5, 6.0, 8.5],
                                    [0.3, 0.1, 0.1, 0.1])
        freq = counts / counts.sum()
        r0 = freq - predict_bin_probs(init, bounds)
        model, report = lm_fit(counts, bounds, init)
        assert report.residual <= float(r0 @ r0) + 1e-15

    def test_unordered_result_is_sorted_and_flagged(self):
        bounds = equal_prob_boundaries(FRESH, 9)
        rng = np.random.default_rng(9)
        counts = self.bin_counts(FRESH, 100_000, rng, bounds)
        init = GaussianMixtureModel([5.2, 2.8, 6.4, 7.86],
                                    [0.05, 0.35, 0.05, 0.05])
        model, report = lm_fit(counts, bounds, init, max_iter=1)
        assert report.swapped
        assert np.all(np.diff(model.means) >= 0)

    def test_single_occupied_bin_is_degenerate(self):
        counts = np.array([0, 0, 5000, 0, 0, 0, 0, 0, 0])
        bounds = np.linspace(1.0, 8.0, 8)
        model, report = lm_fit(counts, bounds, FRESH)
        assert report.flag == "degenerate"
        assert np.allclose(model.means, FRESH.means)
        assert np.isnan(report.residual)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            lm_fit([1, 2, 3], [1.0, 2.0, 3.0], FRESH)

    def test_steps_respect_physical_box(self):
        bounds = equal_prob_boundaries(FRESH, 9)
        rng = np.random.default_rng(10)
        counts = self.bin_counts(FRESH, 50_000, rng, bounds)
        wild = GaussianMixtureModel([-50.0, 5.0, 6.5, 50.0],
                                    [5.0, 0.05, 0.05, 9.0])
        model, report = lm_fit(counts, bounds, wild)
        means = np.asarray(model.means)
        sigmas = np.asarray(model.sigmas)
        assert np.all(means >= MEAN_RANGE[0] - 1e-12)
        assert np.all(means <= MEAN_RANGE[1] + 1e-12)
        assert np.all(sigmas >= SIGMA_FLOOR - 1e-15)
        assert np.all(sigmas <= SIGMA_CAP + 1e-12)
