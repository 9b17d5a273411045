"""Cell lattice: programs wordlines of cells and reads them back.

The lattice holds one block of wordlines; even and odd bitline columns form
two independently controlled populations ("parities") that are written with
their own scale factors each cycle.  Interference flows from cells written
later to cells written earlier: every cell is disturbed by the next
wordline (directly above and both diagonals), and cells of the parity that
was written first in a cycle are additionally disturbed by their same-
wordline neighbors of the other parity.  The top wordline, which has no
wordline above it, is written but never measured.
"""

from __future__ import annotations

import csv

import numpy as np

from .channel import (ChannelParams, ChannelState, degraded_params,
                      sample_written_levels, wearout_lambda)
from .info import sample_coupling_ratios

PARITIES = ("even", "odd")


def other_parity(parity: str) -> str:
    return "odd" if parity == "even" else "even"


class CellLattice:
    """One block of cells with per-parity write state."""

    def __init__(self, wordlines: int = 17, cells_per_wordline: int = 2048):
        if wordlines < 3:
            raise ValueError("need at least 3 wordlines")
        if cells_per_wordline < 4 or cells_per_wordline % 2:
            raise ValueError("cells per wordline must be even and >= 4")
        self.wordlines = wordlines
        self.cells_per_wordline = cells_per_wordline
        shape = (wordlines, cells_per_wordline)
        self.intended = np.zeros(shape, dtype=np.int8)
        self.written = np.zeros(shape, dtype=np.int8)
        self.stored = np.zeros(shape, dtype=float)
        self.states = {p: ChannelState(parity=p) for p in PARITIES}
        self.last_allocs: dict[str, np.ndarray] | None = None
        self.last_first: str = "even"

    def parity_slice(self, parity: str) -> slice:
        return slice(0, None, 2) if parity == "even" else slice(1, None, 2)

    @property
    def measured_wordlines(self) -> int:
        return self.wordlines - 1

    @property
    def measured_per_parity(self) -> int:
        return self.measured_wordlines * self.cells_per_wordline // 2

    def require_written(self) -> dict[str, np.ndarray]:
        if self.last_allocs is None:
            raise RuntimeError("lattice has not been programmed yet")
        return self.last_allocs


def program_cycle(lattice: CellLattice, params: ChannelParams,
                  allocs: dict[str, np.ndarray], even_first: bool,
                  rng: np.random.Generator) -> None:
    """Erase and reprogram the whole lattice once.

    allocs maps parity -> four write thresholds.  Updates stored voltages,
    per-parity accumulated stress (mean programmed voltage above the erased
    level) and cycle counts, and remembers the write order for read-back.
    """
    w, c = lattice.wordlines, lattice.cells_per_wordline
    order = ("even", "odd") if even_first else ("odd", "even")
    lattice.intended[:] = rng.integers(0, 4, size=(w, c), dtype=np.int8)
    pre_c2c = np.zeros((w, c))
    for parity in order:
        cols = lattice.parity_slice(parity)
        state = lattice.states[parity]
        thr = np.asarray(allocs[parity], dtype=float)
        levels = lattice.intended[:, cols]
        written = sample_written_levels(params, state, levels, rng)
        sigma = np.where(written == 0, params.sigma_e, params.sigma_p)
        lam = wearout_lambda(params, state.v_acc)
        pre = (thr[written] + rng.standard_normal(written.shape) * sigma
               + rng.exponential(lam, size=written.shape))
        lattice.written[:, cols] = written
        pre_c2c[:, cols] = pre
        state.v_acc += float(np.mean(thr[written] - thr[0]))
        state.pe_count += 1

    received = np.zeros((w, c))
    if params.model == "model2" and params.c2c_strength > 0:
        # Voltage increase each aggressor couples from: its programmed rise
        # above its own erased threshold, never negative.
        v0 = np.empty(c)
        for parity in PARITIES:
            cols = lattice.parity_slice(parity)
            v0[cols] = float(np.asarray(allocs[parity])[0])
        vinc = np.maximum(pre_c2c - v0[None, :], 0.0)
        g = sample_coupling_ratios(params, "above", (w - 1, c), rng)
        received[:-1, :] += g * vinc[1:, :]
        g = sample_coupling_ratios(params, "diag", (w - 1, c - 1), rng)
        received[:-1, 1:] += g * vinc[1:, :-1]
        g = sample_coupling_ratios(params, "diag", (w - 1, c - 1), rng)
        received[:-1, :-1] += g * vinc[1:, 1:]
        g_left = sample_coupling_ratios(params, "same", (w, c - 1), rng)
        g_right = sample_coupling_ratios(params, "same", (w, c - 1), rng)
        same = np.zeros((w, c))
        same[:, 1:] += g_left * vinc[:, :-1]
        same[:, :-1] += g_right * vinc[:, 1:]
        first_cols = lattice.parity_slice(order[0])
        received[:, first_cols] += same[:, first_cols]

    lattice.stored[:] = pre_c2c + received
    lattice.last_allocs = {p: np.asarray(allocs[p], dtype=float).copy()
                           for p in PARITIES}
    lattice.last_first = order[0]


def read_parity_voltages(lattice: CellLattice, params: ChannelParams,
                         parity: str, rng: np.random.Generator) -> np.ndarray:
    """Read one parity's measured wordlines with fresh retention noise.

    Retention drift depends on each cell's written level voltage under the
    allocation it was programmed with and on the parity's current stress.
    Returns an array of shape (measured wordlines, cells/2).
    """
    allocs = lattice.require_written()
    cols = lattice.parity_slice(parity)
    thr = allocs[parity]
    dnp = degraded_params(params, lattice.states[parity], v0=float(thr[0]))
    written = lattice.written[:-1, cols]
    v = thr[written]
    mu = dnp.mu_r(v)
    sigma = np.sqrt(dnp.sigma_r2(v))
    return lattice.stored[:-1, cols] + mu + rng.standard_normal(v.shape) * sigma


def measure_histogram(lattice: CellLattice, params: ChannelParams,
                      boundaries, parity: str,
                      rng: np.random.Generator) -> np.ndarray:
    """Bin one parity's read-back voltages at the given boundaries.

    boundaries must be strictly increasing; counts has one more entry than
    boundaries and sums to the measured cell count.
    """
    boundaries = np.asarray(boundaries, dtype=float)
    if boundaries.ndim != 1 or boundaries.size < 1 \
            or np.any(np.diff(boundaries) <= 0):
        raise ValueError("boundaries must be strictly increasing")
    volts = read_parity_voltages(lattice, params, parity, rng)
    edges = np.concatenate(([-np.inf], boundaries, [np.inf]))
    counts, _ = np.histogram(volts.ravel(), edges)
    return counts


def dump_measured_voltages(lattice: CellLattice, params: ChannelParams,
                           rng: np.random.Generator, path: str) -> None:
    """Write one read of every measured cell to a CSV file."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wordline", "index", "parity", "intended_level",
                         "written_level", "measured_voltage"])
        reads = {p: read_parity_voltages(lattice, params, p, rng)
                 for p in PARITIES}
        for wl in range(lattice.measured_wordlines):
            for idx in range(lattice.cells_per_wordline):
                parity = "even" if idx % 2 == 0 else "odd"
                volts = reads[parity]
                writer.writerow([
                    wl, idx, parity,
                    int(lattice.intended[wl, idx]),
                    int(lattice.written[wl, idx]),
                    "%.9g" % volts[wl, idx // 2],
                ])
