"""Tests for the cell lattice: programming, interference, and read-back."""

import numpy as np
import pytest

from flashdva.channel import make_params
from flashdva.info import DEFAULT_GRID, C2cSampler, build_conditional_pdfs
from flashdva.lattice import (PARITIES, CellLattice, dump_measured_voltages,
                              measure_histogram, other_parity, program_cycle,
                              read_parity_voltages)


def alloc_for(params, alpha=1.0):
    thr = alpha * np.asarray(params.thresholds)
    return {p: thr for p in PARITIES}


class TestLatticeShape:
    def test_parity_helpers(self):
        assert other_parity("even") == "odd"
        assert other_parity("odd") == "even"

    def test_dimensions(self):
        lat = CellLattice(wordlines=17, cells_per_wordline=64)
        assert lat.measured_wordlines == 16
        assert lat.measured_per_parity == 16 * 32
        assert lat.stored.shape == (17, 64)

    def test_parity_slices_partition_columns(self):
        lat = CellLattice(wordlines=5, cells_per_wordline=10)
        cols = np.arange(10)
        even = cols[lat.parity_slice("even")]
        odd = cols[lat.parity_slice("odd")]
        assert np.array_equal(np.sort(np.concatenate([even, odd])), cols)
        assert np.all(even % 2 == 0) and np.all(odd % 2 == 1)

    @pytest.mark.parametrize("wl,cells", [(2, 64), (5, 5), (5, 2)])
    def test_bad_dimensions_rejected(self, wl, cells):
        with pytest.raises(ValueError):
            CellLattice(wordlines=wl, cells_per_wordline=cells)

    def test_unprogrammed_read_rejected(self):
        lat = CellLattice(wordlines=5, cells_per_wordline=8)
        p = make_params("model1")
        with pytest.raises(RuntimeError):
            read_parity_voltages(lat, p, "even", np.random.default_rng(0))


class TestProgramCycle:
    def test_deterministic_given_seed(self):
        p = make_params("model2")
        out = []
        for _ in range(2):
            lat = CellLattice(wordlines=9, cells_per_wordline=32)
            program_cycle(lat, p, alloc_for(p), True,
                          np.random.default_rng(42))
            out.append(lat.stored.copy())
        assert np.array_equal(out[0], out[1])

    def test_write_order_recorded(self):
        p = make_params("model1")
        lat = CellLattice(wordlines=5, cells_per_wordline=8)
        program_cycle(lat, p, alloc_for(p), False, np.random.default_rng(0))
        assert lat.last_first == "odd"
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(0))
        assert lat.last_first == "even"

    def test_stress_increment_matches_written_levels(self):
        # One cycle adds the mean programmed rise above the erased level.
        p = make_params("model1")
        lat = CellLattice(wordlines=17, cells_per_wordline=128)
        alpha = 0.5
        program_cycle(lat, p, alloc_for(p, alpha), True,
                      np.random.default_rng(7))
        thr = alpha * np.asarray(p.thresholds)
        for parity in PARITIES:
            cols = lat.parity_slice(parity)
            rises = thr[lat.written[:, cols]] - thr[0]
            assert lat.states[parity].v_acc == pytest.approx(
                float(np.mean(rises)), rel=1e-12)
            assert lat.states[parity].pe_count == 1

    def test_stress_increment_near_uniform_mean(self):
        # Uniform intended levels: expected rise = mean of the threshold
        # gaps = (0 + 2.4 + 3.6 + 5.06)/4 = 2.765 V at full scale.
        p = make_params("model1")
        lat = CellLattice(wordlines=33, cells_per_wordline=512)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(3))
        for parity in PARITIES:
            assert lat.states[parity].v_acc == pytest.approx(2.765, abs=0.05)

    def test_model1_written_equals_intended(self):
        p = make_params("model1")
        lat = CellLattice(wordlines=9, cells_per_wordline=32)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(1))
        assert np.array_equal(lat.written, lat.intended)

    def test_first_written_parity_more_disturbed(self):
        # The first-written parity picks up same-wordline interference on
        # top of the wordline-above terms both parities share, so its mean
        # upward shift is visibly larger (two extra aggressors per cell).
        p = make_params("model2")
        shift = {}
        lat = CellLattice(wordlines=17, cells_per_wordline=256)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(5))
        thr = np.asarray(p.thresholds)
        for parity in PARITIES:
            cols = lat.parity_slice(parity)
            resid = lat.stored[:-1, cols] - thr[lat.written[:-1, cols]]
            shift[parity] = float(np.mean(resid))
        assert shift["even"] - shift["odd"] > 0.05
        assert shift["odd"] > 0.01  # wordline-above coupling is still there

    def test_model1_has_no_interference(self):
        # Without coupling, the stored voltage is exactly the programming
        # noise around the level, identical in law for both parities.
        p = make_params("model1")
        lat = CellLattice(wordlines=17, cells_per_wordline=256)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(5))
        thr = np.asarray(p.thresholds)
        resid = lat.stored - thr[lat.written]
        written1 = lat.written >= 1
        # programmed cells: sigma_p noise + tiny fresh exponential
        assert abs(float(np.std(resid[written1])) - p.sigma_p) < 0.02


class TestReadBack:
    def test_shape_excludes_top_wordline(self):
        p = make_params("model2")
        lat = CellLattice(wordlines=9, cells_per_wordline=32)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(0))
        volts = read_parity_voltages(lat, p, "even",
                                     np.random.default_rng(1))
        assert volts.shape == (8, 16)

    def test_fresh_reads_differ_but_seeded_reads_match(self):
        p = make_params("model2")
        lat = CellLattice(wordlines=9, cells_per_wordline=32)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(0))
        rng = np.random.default_rng(9)
        a = read_parity_voltages(lat, p, "even", rng)
        b = read_parity_voltages(lat, p, "even", rng)
        c = read_parity_voltages(lat, p, "even", np.random.default_rng(9))
        assert not np.array_equal(a, b)  # fresh retention noise per read
        assert np.array_equal(a, c)      # same generator state, same read

    def test_model1_sample_matches_density(self):
        # KS distance between read-back voltages and the analytic mixture.
        p = make_params("model1")
        lat = CellLattice(wordlines=17, cells_per_wordline=512)
        thr = np.asarray(p.thresholds)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(11))
        for parity in PARITIES:
            pdfs = build_conditional_pdfs(p, lat.states[parity], thr)
            mix = pdfs.mixture_density()
            cdf = np.cumsum(mix) * DEFAULT_GRID.step
            volts = np.sort(read_parity_voltages(
                lat, p, parity, np.random.default_rng(12)).ravel())
            n = volts.size
            model_cdf = np.interp(volts, DEFAULT_GRID.points, cdf)
            emp = (np.arange(1, n + 1) - 0.5) / n
            ks = float(np.max(np.abs(emp - model_cdf)))
            assert ks < 0.035, f"{parity} KS={ks}"

    def test_model2_sample_matches_density_moments(self):
        # With interference the analytic density uses a Monte Carlo kernel;
        # compare first and second moments instead of a tight KS bound.
        p = make_params("model2")
        lat = CellLattice(wordlines=17, cells_per_wordline=512)
        thr = np.asarray(p.thresholds)
        deployed = alloc_for(p)
        program_cycle(lat, p, deployed, True, np.random.default_rng(21))
        sampler = C2cSampler(p, lat.states, np.random.default_rng(22), 4000)
        for parity, first in (("even", True), ("odd", False)):
            kern = sampler.kernel(parity, first, deployed, DEFAULT_GRID.step)
            pdfs = build_conditional_pdfs(p, lat.states[parity], thr,
                                          DEFAULT_GRID, kern)
            mix = pdfs.mixture_density()
            pts = DEFAULT_GRID.points
            m1 = float(np.trapezoid(mix * pts, pts))
            m2 = float(np.trapezoid(mix * pts ** 2, pts))
            volts = read_parity_voltages(lat, p, parity,
                                         np.random.default_rng(23)).ravel()
            sem = np.std(volts) / np.sqrt(volts.size)
            assert abs(float(np.mean(volts)) - m1) < 5 * sem + 0.01
            assert abs(float(np.std(volts)) - np.sqrt(m2 - m1 ** 2)) < 0.05


class TestMeasureHistogram:
    def setup_method(self):
        self.p = make_params("model2")
        self.lat = CellLattice(wordlines=17, cells_per_wordline=128)
        program_cycle(self.lat, self.p, alloc_for(self.p), True,
                      np.random.default_rng(31))

    def test_counts_sum_to_population(self):
        counts = measure_histogram(self.lat, self.p, [4.0, 5.8, 7.13],
                                   "even", np.random.default_rng(1))
        assert counts.shape == (4,)
        assert counts.sum() == self.lat.measured_per_parity

    def test_single_boundary_splits_in_two(self):
        counts = measure_histogram(self.lat, self.p, [5.0], "odd",
                                   np.random.default_rng(2))
        assert counts.shape == (2,)
        assert counts.sum() == self.lat.measured_per_parity

    def test_octile_boundaries_give_equal_bins(self):
        # Boundaries at the empirical octiles of an identical read must
        # split the population into nine near-equal bins.
        volts = np.sort(read_parity_voltages(
            self.lat, self.p, "even", np.random.default_rng(77)).ravel())
        n = volts.size
        octiles = [volts[int(round(k * n / 9.0)) - 1] for k in range(1, 9)]
        counts = measure_histogram(self.lat, self.p, octiles, "even",
                                   np.random.default_rng(77))
        assert counts.shape == (9,)
        assert np.max(np.abs(counts - n / 9.0)) <= 2

    @pytest.mark.parametrize("bad", [[], [5.0, 5.0], [6.0, 4.0]])
    def test_bad_boundaries_rejected(self, bad):
        with pytest.raises(ValueError):
            measure_histogram(self.lat, self.p, bad, "even",
                              np.random.default_rng(3))


class TestVoltageDump:
    def test_dump_layout(self, tmp_path):
        p = make_params("model1")
        lat = CellLattice(wordlines=5, cells_per_wordline=8)
        program_cycle(lat, p, alloc_for(p), True, np.random.default_rng(4))
        path = tmp_path / "cells.csv"
        dump_measured_voltages(lat, p, np.random.default_rng(5), str(path))
        rows = path.read_text().splitlines()
        header = rows[0].split(",")
        assert header == ["wordline", "index", "parity", "intended_level",
                          "written_level", "measured_voltage"]
        assert len(rows) - 1 == lat.measured_wordlines * lat.cells_per_wordline
        first = rows[1].split(",")
        assert first[2] == "even" and int(first[1]) == 0
        float(first[5])  # voltage column parses as a number
