"""Experiment harness: the write/degrade/estimate/control loop.

One run programs a lattice cycle by cycle; at every cadence boundary it
reads the block back, refreshes the channel estimate (estimation mode),
lets the controller pick the next scale factors and read thresholds, and
then appends an epoch record.  The record's raw BER comes from the read
step — the error rate of the state the window just ended left behind,
with read thresholds assigned at read time — while the MI, scale factor,
and wear fields describe the allocation freshly deployed for the
upcoming window at the current degradation state.  Ground-truth mutual
information is always computed from the physical densities, whatever the
controller believes.
Records serialize to a fixed-column CSV; lifetimes are interpolated from
the recorded epochs afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .channel import wearout_lambda
from .config import ExperimentConfig, config_hash
from .controller import (DvaConfig, QuantGrid, VoltageAllocation,
                         dta_boundaries, dva_scale_factor,
                         fixed_read_boundaries, quantized_write_thresholds)
from .estimation import (FitReport, bisect_quantile_bounds,
                         dedupe_boundaries, empirical_quantile_means,
                         equal_prob_boundaries, lm_fit, rescale_boundaries)
from .info import (DEFAULT_GRID, C2cSampler, GaussianMixtureModel,
                   build_conditional_pdfs, hermite_rule,
                   mutual_information_gh, mutual_information_grid, raw_ber)
from .lattice import (PARITIES, CellLattice, measure_histogram, other_parity,
                      program_cycle)

CSV_COLUMNS = ("cycle", "parity", "mi_true", "mi_assumed", "alpha", "v_acc",
               "lambda", "ber", "fit_residual", "fit_iters", "saturated")

BER_LIFETIME_LEVEL = 1e-2
# Measurement sweeps per epoch: when the bin occupancies are far from
# equal the boundaries are walked onto the empirical equal-probability
# positions by parallel bisection before fitting (reads are
# non-destructive and repeatable).  One sweep suffices once the model
# tracks the channel; a drift past the old bin edges engages extra sweeps.
_MAX_MEASURE_SWEEPS = 10
_SWEEP_TOL = 0.05
_EQUAL_FREQ_TOL = 0.03


@dataclass
class ParityRecord:
    """One parity's slice of an epoch record."""

    mi_true: float
    mi_assumed: float
    alpha: float
    v_acc: float
    lambda_w: float
    ber: float
    fit_residual: float
    fit_iters: int
    saturated: bool


@dataclass
class EpochRecord:
    cycle: int
    parities: dict


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list
    summary: dict


class _Runner:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.params = cfg.channel_params()
        self.base_t = np.asarray(self.params.thresholds)
        self.grid = DEFAULT_GRID
        self.rule = hermite_rule(cfg.gh_order)
        seq = np.random.SeedSequence(cfg.seed)
        self.rng_write, self.rng_read, self.rng_mc = (
            np.random.default_rng(s) for s in seq.spawn(3))
        self.lattice = CellLattice(cfg.wordlines, cfg.cells_per_wordline)
        self.quant = (QuantGrid(cfg.quant_levels, cfg.quant_lo, cfg.quant_hi)
                      if cfg.quant_levels else None)
        self.dva = DvaConfig(cfg.target_mi, cfg.margin_mi, cfg.alpha_min)
        self.static_sigmas = np.array(
            [self.params.sigma_e] + [self.params.sigma_p] * 3)
        self.alternating = cfg.write_policy == "dva_joint_alternating"
        self.estimating = cfg.info_mode == "estimation"
        self.interfering = (self.params.model == "model2"
                            and self.params.c2c_strength > 0)
        fixed = fixed_read_boundaries(self.base_t)
        if self.quant is not None:
            fixed = self._distinct(self.quant.snap(fixed, "nearest"))
        self.fixed_bounds = fixed
        # controller state
        self.allocs: dict[str, VoltageAllocation] = {}
        self.saturated = {p: False for p in PARITIES}
        self.fits: dict[str, GaussianMixtureModel] = {}
        self.fit_alpha = {p: 1.0 for p in PARITIES}
        self.fit_init: dict[str, GaussianMixtureModel] = {}
        self.fit_reports: dict[str, FitReport | None] = \
            {p: None for p in PARITIES}
        self.est_bounds: dict[str, np.ndarray] = {}
        self.coincident_epochs = 0
        self.records: list[EpochRecord] = []
        self.mi_crossed = {p: False for p in PARITIES}
        self.ber_crossed = {p: False for p in PARITIES}

    # -- helpers ----------------------------------------------------------

    def _distinct(self, bounds: np.ndarray) -> np.ndarray:
        """Push snapped boundaries apart so they stay strictly increasing."""
        bounds = np.array(bounds, dtype=float)
        step = self.quant.spacing if self.quant is not None else 1e-9
        for i in range(1, bounds.size):
            if bounds[i] <= bounds[i - 1]:
                bounds[i] = bounds[i - 1] + step
        return bounds

    def _sampler(self):
        if not self.interfering:
            return None
        return C2cSampler(self.params, self.lattice.states, self.rng_mc,
                          self.cfg.mc_draws)

    def _ideal_mi_fn(self, parity: str, sampler):
        """Ground-truth MI of a candidate scale, worst-case write order.

        Evaluates the parity in the first-written (most disturbed) role
        with all cells at the candidate scale, which keeps the evaluator
        monotone in alpha and self-consistent at the initial epoch.
        """
        state = self.lattice.states[parity]

        def mi(alpha: float) -> float:
            thr = alpha * self.base_t
            kern = None
            if sampler is not None:
                deploy = {p: thr for p in PARITIES}
                kern = sampler.kernel(parity, True, deploy, self.grid.step)
            pdfs = build_conditional_pdfs(self.params, state, thr,
                                          self.grid, kern)
            return mutual_information_grid(pdfs)

        return mi

    def _est_mi_fn(self, parity: str):
        """Assumed MI of a candidate scale from the relevant recent fit."""
        q = other_parity(parity) if self.alternating else parity
        model = self.fits[q]
        written_at = self.fit_alpha[q]

        def mi(alpha: float) -> float:
            return mutual_information_gh(model.scaled(alpha / written_at),
                                         self.rule)

        return mi

    # -- controller -------------------------------------------------------

    def _controller_update(self, sampler) -> None:
        policy = self.cfg.write_policy
        new_alpha = {}
        if policy == "fixed":
            for p in PARITIES:
                new_alpha[p] = 1.0
                self.saturated[p] = False
        elif policy == "dva_single_even_target":
            fn = (self._est_mi_fn("even") if self.estimating
                  else self._ideal_mi_fn("even", sampler))
            alpha, sat = dva_scale_factor(fn, self.dva)
            for p in PARITIES:
                new_alpha[p] = alpha
                self.saturated[p] = sat
        else:  # dva_joint_alternating
            for p in PARITIES:
                fn = (self._est_mi_fn(p) if self.estimating
                      else self._ideal_mi_fn(p, sampler))
                new_alpha[p], self.saturated[p] = dva_scale_factor(fn,
                                                                   self.dva)
        for p in PARITIES:
            if self.quant is not None:
                sigmas = (self.fits[p].sigmas if self.estimating
                          else self.static_sigmas)
                thr = quantized_write_thresholds(new_alpha[p], self.base_t,
                                                 self.quant, sigmas,
                                                 self.rule)
                self.allocs[p] = VoltageAllocation(new_alpha[p], thr)
            else:
                self.allocs[p] = VoltageAllocation.from_alpha(new_alpha[p],
                                                              self.base_t)

    def _prepare_next_measurement(self) -> None:
        """Choose next epoch's histogram boundaries and fit starting point.

        Boundaries split the relevant fit into equal-probability bins and
        are rescaled to the newly chosen scale factor (then snapped to the
        DAC grid, which may merge some: merged epochs are counted).  On a
        numerical failure the previous boundaries are kept and the run
        continues.
        """
        coincident = False
        for p in PARITIES:
            q = other_parity(p) if self.alternating else p
            src = self.fits[q]
            ratio = self.allocs[p].alpha / self.fit_alpha[q]
            try:
                bounds = rescale_boundaries(
                    equal_prob_boundaries(src, self.cfg.est_bins),
                    self.allocs[p].alpha, self.fit_alpha[q])
                if self.quant is not None:
                    bounds = self.quant.snap(bounds, "nearest")
                bounds, dropped = dedupe_boundaries(bounds)
                if dropped:
                    coincident = True
                self.est_bounds[p] = bounds
                self.fit_init[p] = src.scaled(ratio)
            except ValueError:
                if p not in self.est_bounds:
                    raise
        if coincident:
            self.coincident_epochs += 1

    def _fit_counts(self, counts, bounds, init):
        # Two starts: the model predicted from the last epoch, and means
        # read off the measured histogram itself.  The predicted start
        # wins while the model tracks the channel; the data-driven start
        # rescues epochs where the levels drifted further than predicted
        # (a far-off start can stall on a gradient plateau or collapse a
        # component onto the sigma floor).  Keep whichever explains the
        # counts better.
        model, report = lm_fit(counts, bounds, init)
        alt = GaussianMixtureModel(
            np.sort(empirical_quantile_means(counts, bounds)),
            init.sigmas.copy())
        alt_model, alt_report = lm_fit(counts, bounds, alt)
        if alt_report.residual < report.residual:
            model, report = alt_model, alt_report
        return model, report

    def _measure_and_fit(self, parity: str) -> None:
        bounds = self.est_bounds[parity]
        n_bins = self.cfg.est_bins
        targets = np.arange(1, n_bins) / n_bins
        counts = measure_histogram(self.lattice, self.params, bounds,
                                   parity, self.rng_read)
        # A level that drifted entirely inside one stale bin cannot be
        # localized by any fit (every mean in the bin reproduces the
        # counts).  While the occupancies are far from equal, walk the
        # boundaries onto the empirical equal-probability positions by
        # parallel bisection on the CDF points accumulated from every
        # sweep so far, re-reading at each round of midpoints.
        seen_x: list[float] = []
        seen_f: list[float] = []
        for _ in range(_MAX_MEASURE_SWEEPS - 1):
            freq = counts / counts.sum()
            if (counts.size == n_bins
                    and np.max(np.abs(freq - 1.0 / n_bins))
                    < _EQUAL_FREQ_TOL):
                break
            seen_x.extend(bounds)
            seen_f.extend(np.cumsum(freq)[:-1])
            if self.quant is not None:
                proposed, widths = bisect_quantile_bounds(
                    targets, seen_x, seen_f, self.quant.lo, self.quant.hi)
            else:
                proposed, widths = bisect_quantile_bounds(targets, seen_x,
                                                          seen_f)
            if np.max(widths) < _SWEEP_TOL:
                break
            if self.quant is not None:
                proposed = self.quant.snap(proposed, "nearest")
            proposed, _ = dedupe_boundaries(proposed)
            if (proposed.size == bounds.size
                    and np.max(np.abs(proposed - bounds)) < 1e-12):
                break
            bounds = proposed
            counts = measure_histogram(self.lattice, self.params, bounds,
                                       parity, self.rng_read)
        model, report = self._fit_counts(counts, bounds,
                                         self.fit_init[parity])
        self.fits[parity] = model
        self.fit_reports[parity] = report
        self.fit_alpha[parity] = self.allocs[parity].alpha

    def _active_read_bounds(self, parity: str) -> np.ndarray:
        """Read thresholds serving the upcoming window."""
        if self.cfg.read_policy == "fixed_mid":
            return self.fixed_bounds
        model = self.fits[parity].scaled(self.allocs[parity].alpha
                                         / self.fit_alpha[parity])
        bounds = dta_boundaries(model)
        if self.quant is not None:
            bounds = self._distinct(self.quant.snap(bounds, "nearest"))
        return bounds

    # -- epochs -----------------------------------------------------------

    def _truth_pdfs(self, sampler, first_parity: str, deployed: dict):
        out = {}
        for p in PARITIES:
            kern = None
            if sampler is not None:
                kern = sampler.kernel(p, p == first_parity, deployed,
                                      self.grid.step)
            out[p] = build_conditional_pdfs(self.params,
                                            self.lattice.states[p],
                                            deployed[p], self.grid, kern)
        return out

    def _operational_ber(self, pdfs: dict) -> dict:
        """Raw BER of the given densities under the active read bounds."""
        out = {}
        for p in PARITIES:
            try:
                out[p] = raw_ber(pdfs[p], self._active_read_bounds(p))
            except ValueError:
                out[p] = float("nan")
        return out

    def _record(self, cycle: int, pdfs: dict, ber_read: dict) -> None:
        parities = {}
        for p in PARITIES:
            mi_t = mutual_information_grid(pdfs[p])
            if self.estimating:
                model = self.fits[p].scaled(self.allocs[p].alpha
                                            / self.fit_alpha[p])
                mi_a = mutual_information_gh(model, self.rule)
                report = self.fit_reports[p]
                res = report.residual if report else float("nan")
                iters = report.iterations if report else 0
            else:
                mi_a, res, iters = float("nan"), float("nan"), 0
            ber = ber_read[p]
            state = self.lattice.states[p]
            parities[p] = ParityRecord(
                mi_true=mi_t, mi_assumed=mi_a, alpha=self.allocs[p].alpha,
                v_acc=state.v_acc,
                lambda_w=wearout_lambda(self.params, state.v_acc),
                ber=ber, fit_residual=res, fit_iters=iters,
                saturated=self.saturated[p])
            if mi_t < self.cfg.target_mi:
                self.mi_crossed[p] = True
            if ber >= BER_LIFETIME_LEVEL:
                self.ber_crossed[p] = True
        self.records.append(EpochRecord(cycle, parities))

    def _epoch_zero(self) -> None:
        sampler = self._sampler()
        if self.estimating:
            # Bootstrap belief: datasheet spreads at the unscaled levels.
            boot = GaussianMixtureModel(self.base_t.copy(),
                                        self.static_sigmas.copy())
            for p in PARITIES:
                self.fits[p] = boot
                self.fit_alpha[p] = 1.0
        self._controller_update(sampler)
        if self.estimating:
            self._prepare_next_measurement()
        deployed = {p: self.allocs[p].thresholds for p in PARITIES}
        pdfs = self._truth_pdfs(sampler, "even", deployed)
        # No window has elapsed yet, so the read-back BER is that of the
        # initial deployment itself.
        self._record(0, pdfs, self._operational_ber(pdfs))

    def _epoch(self, cycle: int) -> None:
        # Order within an epoch: read, measure, fit, control, rescale,
        # record.  The raw BER belongs to the read step: it is evaluated
        # on the state the window just ended left behind, with the read
        # thresholds assigned at read time (for adaptive reads, from the
        # fit of this very read-back, before any rescale).  After the
        # controller has rescaled, the MI fields describe the allocation
        # deployed for the upcoming window at the current degradation
        # (a fresh rewrite at the new scale).
        sampler = self._sampler()
        prev_phase = (cycle - 1) // self.cfg.cadence
        prev_even = (prev_phase % 2 == 0) if self.alternating else True
        prev_first = "even" if prev_even else "odd"
        old_deployed = {p: self.allocs[p].thresholds for p in PARITIES}
        pdfs_old = self._truth_pdfs(sampler, prev_first, old_deployed)
        if self.estimating:
            for p in PARITIES:
                self._measure_and_fit(p)
        ber_read = self._operational_ber(pdfs_old)
        self._controller_update(sampler)
        if self.estimating:
            self._prepare_next_measurement()
        deployed = {p: self.allocs[p].thresholds for p in PARITIES}
        phase = cycle // self.cfg.cadence  # phase of the upcoming window
        even_first = (phase % 2 == 0) if self.alternating else True
        first = "even" if even_first else "odd"
        if first == prev_first and all(
                np.array_equal(deployed[p], old_deployed[p])
                for p in PARITIES):
            pdfs = pdfs_old
        else:
            pdfs = self._truth_pdfs(sampler, first, deployed)
        self._record(cycle, pdfs, ber_read)

    def run(self, progress=None) -> RunResult:
        cfg = self.cfg
        self._epoch_zero()
        if progress:
            progress(self.records[-1])
        cycle = 0
        while cycle < cfg.max_cycles:
            cycle += 1
            phase = (cycle - 1) // cfg.cadence
            even_first = (phase % 2 == 0) if self.alternating else True
            deployed = {p: self.allocs[p].thresholds for p in PARITIES}
            program_cycle(self.lattice, self.params, deployed, even_first,
                          self.rng_write)
            if cycle % cfg.cadence == 0:
                self._epoch(cycle)
                if progress:
                    progress(self.records[-1])
                if cfg.stop_after_crossing \
                        and all(self.mi_crossed.values()) \
                        and all(self.ber_crossed.values()):
                    break
        return RunResult(cfg, self.records, self._summary())

    def _summary(self) -> dict:
        cfg = self.cfg
        life_mi = {p: mi_lifetime(self.records, p, cfg.target_mi)
                   for p in PARITIES}
        life_ber = {p: ber_lifetime(self.records, p) for p in PARITIES}
        for life in (life_mi, life_ber):
            crossed = [v for v in life.values() if v is not None]
            # Censor at the last recorded cycle when nothing ever crossed.
            life["overall"] = (min(crossed) if crossed
                               else float(self.records[-1].cycle))
        sat_cycle = None
        for rec in self.records:
            if any(rec.parities[p].saturated for p in PARITIES):
                sat_cycle = rec.cycle
                break
        return {
            "name": cfg.name,
            "config_hash": config_hash(cfg),
            "final_cycle": self.records[-1].cycle,
            "initial_alpha": {p: self.records[0].parities[p].alpha
                              for p in PARITIES},
            "lifetime_mi": life_mi,
            "lifetime_ber": life_ber,
            "saturation_cycle": sat_cycle,
            "coincident_boundary_epochs": self.coincident_epochs,
        }


def run_experiment(cfg: ExperimentConfig, progress=None) -> RunResult:
    """Run one configured experiment to completion."""
    return _Runner(cfg).run(progress)


# -- lifetimes -------------------------------------------------------------

def mi_lifetime(records, parity: str, target: float):
    """First (interpolated) cycle where a parity's true MI drops below
    target, or None if it never does."""
    prev = None
    for rec in records:
        cycle, mi = rec.cycle, rec.parities[parity].mi_true
        if mi < target:
            if prev is None:
                return float(cycle)
            c0, m0 = prev
            return c0 + (cycle - c0) * (m0 - target) / (m0 - mi)
        prev = (cycle, mi)
    return None


def ber_lifetime(records, parity: str, level: float = BER_LIFETIME_LEVEL):
    """First (log-interpolated) cycle where raw BER exceeds level."""
    prev = None
    for rec in records:
        cycle, ber = rec.cycle, rec.parities[parity].ber
        if math.isnan(ber):
            continue
        if ber > level:
            if prev is None:
                return float(cycle)
            c0, b0 = prev
            lb0 = math.log10(max(b0, 1e-300))
            lb1 = math.log10(ber)
            return c0 + (cycle - c0) * (math.log10(level) - lb0) / (lb1 - lb0)
        prev = (cycle, ber)
    return None


# -- CSV -------------------------------------------------------------------

def _fmt(value: float) -> str:
    return "%.9g" % value


def emit_csv(records, path: str) -> None:
    """Write epoch records with the fixed column order, two rows per epoch."""
    if not records:
        raise ValueError("no records to write")
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        for parity in PARITIES:
            r = rec.parities[parity]
            lines.append(",".join([
                str(rec.cycle), parity, _fmt(r.mi_true), _fmt(r.mi_assumed),
                _fmt(r.alpha), _fmt(r.v_acc), _fmt(r.lambda_w), _fmt(r.ber),
                _fmt(r.fit_residual), str(r.fit_iters),
                "1" if r.saturated else "0"]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str):
    """Parse a records CSV back into EpochRecord objects."""
    with open(path) as fh:
        rows = fh.read().splitlines()
    if not rows or tuple(rows[0].split(",")) != CSV_COLUMNS:
        raise ValueError("unexpected CSV header")
    by_cycle: dict[int, dict] = {}
    order = []
    for row in rows[1:]:
        if not row:
            continue
        parts = row.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ValueError("malformed CSV row")
        cycle = int(parts[0])
        record = ParityRecord(
            mi_true=float(parts[2]), mi_assumed=float(parts[3]),
            alpha=float(parts[4]), v_acc=float(parts[5]),
            lambda_w=float(parts[6]), ber=float(parts[7]),
            fit_residual=float(parts[8]), fit_iters=int(parts[9]),
            saturated=parts[10] == "1")
        if cycle not in by_cycle:
            by_cycle[cycle] = {}
            order.append(cycle)
        by_cycle[cycle][parts[1]] = record
    return [EpochRecord(c, by_cycle[c]) for c in order]
