"""Voltage-domain densities and information metrics for the read channel.

Conditional read densities are built by convolving the write-level delta
with each noise kernel on a shared voltage grid; mutual information is then
a direct numerical integral.  A Gauss-Hermite evaluator gives the same
quantity for the idealized Gaussian-mixture view of the channel, which is
what the estimation-driven controller can actually see.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import cumulative_trapezoid
from scipy.signal import convolve as signal_convolve
from scipy.special import ndtr, ndtri

from .channel import (ChannelParams, ChannelState, degraded_params,
                      sample_written_levels, wearout_lambda)


class GridCoverageError(ValueError):
    """Raised when a density would clip probability mass at a grid edge."""


@dataclass(eq=False)
class VoltageGrid:
    """Uniform voltage grid on which densities are tabulated."""

    lo: float = -4.0
    step: float = 0.002
    n: int = 8001

    @property
    def hi(self) -> float:
        return self.lo + self.step * (self.n - 1)

    @cached_property
    def points(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.n)


DEFAULT_GRID = VoltageGrid()

# Bit labels per level (Gray mapped: adjacent levels differ in one bit) and
# the pairwise bit-distance table they induce.
GRAY_BITS = ((1, 1), (0, 1), (0, 0), (1, 0))
HAMMING = np.array([[0, 1, 2, 1],
                    [1, 0, 1, 2],
                    [2, 1, 0, 1],
                    [1, 2, 1, 0]], dtype=float)


@dataclass
class GaussianMixtureModel:
    """Equal-weight four-component Gaussian mixture (the assumed channel)."""

    means: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if self.means.shape != (4,) or self.sigmas.shape != (4,):
            raise ValueError("mixture needs 4 means and 4 sigmas")
        if np.any(self.sigmas <= 0):
            raise ValueError("sigmas must be positive")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / self.sigmas
        comp = np.exp(-0.5 * z * z) / (self.sigmas * math.sqrt(2 * math.pi))
        return comp.mean(axis=-1)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ndtr((x[..., None] - self.means) / self.sigmas).mean(axis=-1)

    def scaled(self, ratio: float) -> "GaussianMixtureModel":
        """Copy with means scaled by ratio; sigmas kept (estimation view)."""
        return GaussianMixtureModel(self.means * ratio, self.sigmas.copy())


@dataclass
class LevelPDFs:
    """Conditional read densities f(y | level) tabulated on a grid."""

    grid: VoltageGrid
    densities: np.ndarray  # shape (4, grid.n), each integrates to 1

    def mixture_density(self) -> np.ndarray:
        return self.densities.mean(axis=0)


@dataclass
class QuadratureRule:
    """Gauss-Hermite nodes/weights (weight function exp(-z^2))."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size


def hermite_rule(n: int) -> QuadratureRule:
    """Gauss-Hermite rule of order n; exact for polynomials up to 2n-1."""
    if n < 1:
        raise ValueError("order must be >= 1")
    nodes, weights = hermgauss(n)
    return QuadratureRule(nodes, weights)


# ---------------------------------------------------------------------------
# Kernel construction.  A kernel is (mass_array, origin_index): entry j holds
# the probability mass of offset (j - origin) * step.  Convolving densities
# with mass kernels keeps units and totals intact.

def _two_point_kernel(mu: float, step: float):
    j0 = math.floor(mu / step)
    frac = mu / step - j0
    if j0 >= 0:
        k = np.zeros(j0 + 2)
        k[j0], k[j0 + 1] = 1.0 - frac, frac
        return k, 0
    k = np.zeros(-j0 + 1 + 1)
    k[0], k[1] = 1.0 - frac, frac
    return k, -j0


def gauss_kernel(mu: float, sigma: float, step: float):
    """Cell-integrated Gaussian mass kernel centered at offset mu."""
    if sigma < 0.5 * step:
        return _two_point_kernel(mu, step)
    half = 8.0 * sigma
    j_lo = math.floor((mu - half) / step)
    j_hi = math.ceil((mu + half) / step)
    edges = (np.arange(j_lo, j_hi + 2) - 0.5) * step
    masses = np.diff(ndtr((edges - mu) / sigma))
    return masses, -j_lo


def exp_kernel(lam: float, step: float):
    """Cell-integrated one-sided exponential mass kernel (mean lam).

    Below one grid step the exponential is sub-cell; a two-point kernel
    that reproduces the mean exactly replaces the integrated form, which
    would otherwise bias the mean by a noticeable fraction of lam.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    if lam < step:
        return np.array([1.0 - lam / step, lam / step]), 0
    k_max = max(2, math.ceil(30.0 * lam / step))
    edges = np.maximum((np.arange(k_max + 2) - 0.5) * step, 0.0)
    masses = np.exp(-edges / lam)
    masses = masses[:-1] - masses[1:]
    masses[-1] += math.exp(-edges[-1] / lam)  # fold residual tail in
    return masses, 0


def convolve_density(f: np.ndarray, kernel) -> np.ndarray:
    """Convolve a grid density with a mass kernel, keeping grid alignment.

    Mass the kernel would carry past either grid edge is dropped; callers
    check total mass afterwards.  Short kernels convolve directly (which
    preserves exact zeros where neither operand has mass); long ones go
    through the FFT.
    """
    masses, origin = kernel
    full = signal_convolve(f, masses, method="auto")
    out = np.zeros(f.size)
    lo, hi = origin, origin + f.size
    src_lo, src_hi = max(lo, 0), min(hi, full.size)
    if src_lo < src_hi:
        out[src_lo - lo:src_lo - lo + (src_hi - src_lo)] = full[src_lo:src_hi]
    return out


def deposit_delta(grid: VoltageGrid, v: float) -> np.ndarray:
    """Unit-mass density concentrated at v (split over two grid cells)."""
    pos = (v - grid.lo) / grid.step
    i0 = math.floor(pos)
    frac = pos - i0
    if not (0 <= i0 < grid.n - 1):
        raise GridCoverageError(f"voltage {v} outside grid")
    f = np.zeros(grid.n)
    f[i0] = (1.0 - frac) / grid.step
    f[i0 + 1] = frac / grid.step
    return f


def kernel_from_samples(samples: np.ndarray, step: float):
    """Empirical mass kernel from Monte-Carlo offset samples."""
    j = np.rint(samples / step).astype(np.int64)
    j_min = int(j.min())
    counts = np.bincount(j - j_min)
    return counts / samples.size, -j_min


# ---------------------------------------------------------------------------
# Cell-to-cell interference: Monte-Carlo model of the aggregate disturbance
# a victim cell receives from neighbors written after it.

def sample_coupling_ratios(params: ChannelParams, position: str, size,
                           rng: np.random.Generator) -> np.ndarray:
    """Draw coupling ratios for one neighbor position.

    Gaussian around the position's mean ratio, hard-truncated to within
    +-20% of the mean (drawn by inverse CDF on the truncated interval,
    which realizes the same law as redrawing out-of-range samples).
    """
    mean = params.gamma_mean(position)
    if mean == 0.0:
        return np.zeros(size)
    bound = params.c2c_width_factor / params.c2c_sigma_factor
    lo, hi = ndtr(-bound), ndtr(bound)
    u = rng.random(size)
    z = ndtri(lo + u * (hi - lo))
    return mean * (1.0 + params.c2c_sigma_factor * z)


def _other(parity: str) -> str:
    return "odd" if parity == "even" else "even"


class C2cSampler:
    """Reusable interference draws for one epoch's channel state.

    A victim cell's aggregate disturbance is a sum over neighbor positions
    of gamma * V_inc, where V_inc is the neighbor's programmed rise above
    its own erased level: (thr[level] - thr[0]) + noise, clamped at zero
    for erased neighbors (whose level term vanishes).  Draws are stored
    per position as (gamma, written level) with the noise terms pooled, so
    the disturbance under any pair of deployed threshold vectors is a
    cheap recombination of one sample set: a single sampler serves the
    truth densities and every bisection candidate of an epoch.
    """

    def __init__(self, params: ChannelParams,
                 states: dict[str, ChannelState],
                 rng: np.random.Generator, n_draws: int = 10**6):
        self.params = params
        self.n_draws = n_draws
        self._groups: dict[str, dict] = {}
        for victim in ("even", "odd"):
            opp = _other(victim)
            spec = {"nw": (("above", victim), ("diag", opp), ("diag", opp)),
                    "sw": (("same", opp), ("same", opp))}
            groups = {}
            for tag, poslist in spec.items():
                positions = []
                pooled = np.zeros(n_draws)
                for position, nb_parity in poslist:
                    gamma = sample_coupling_ratios(params, position,
                                                   n_draws, rng)
                    levels = rng.integers(0, 4, n_draws)
                    if params.model == "model2":
                        levels = sample_written_levels(
                            params, states[nb_parity], levels, rng)
                    sigma = np.where(levels == 0, params.sigma_e,
                                     params.sigma_p)
                    lam = wearout_lambda(params, states[nb_parity].v_acc)
                    noise = (rng.standard_normal(n_draws) * sigma
                             + rng.exponential(lam, n_draws))
                    pooled += gamma * np.where(levels == 0,
                                               np.maximum(noise, 0.0), noise)
                    positions.append((nb_parity, gamma,
                                      levels.astype(np.int8)))
                groups[tag] = (positions, pooled)
            self._groups[victim] = groups

    def disturbance(self, victim: str, first_written: bool,
                    thresholds: dict) -> np.ndarray:
        """Aggregate disturbance samples under deployed thresholds.

        thresholds maps parity -> the four write levels its cells use.
        first_written adds the same-wordline terms the earlier-programmed
        parity suffers.
        """
        gaps = {}
        for parity, thr in thresholds.items():
            thr = np.asarray(thr, dtype=float)
            gaps[parity] = thr - thr[0]
        total = np.zeros(self.n_draws)
        for tag in (("nw", "sw") if first_written else ("nw",)):
            positions, pooled = self._groups[victim][tag]
            total += pooled
            for nb_parity, gamma, levels in positions:
                total += gamma * gaps[nb_parity][levels]
        return total

    def kernel(self, victim: str, first_written: bool, thresholds: dict,
               step: float = DEFAULT_GRID.step):
        return kernel_from_samples(
            self.disturbance(victim, first_written, thresholds), step)


# ---------------------------------------------------------------------------
# Conditional density construction and information metrics.

def build_conditional_pdfs(params: ChannelParams, state: ChannelState,
                           thresholds, grid: VoltageGrid = DEFAULT_GRID,
                           c2c_kernel=None) -> LevelPDFs:
    """Conditional read densities for one parity at one channel state.

    Per written level: delta at the scaled threshold, convolved with the
    programming Gaussian, the wear-out exponential, and the retention
    Gaussian for that level's voltage; optionally with an interference
    kernel.  Rows are then mixed by the program-error matrix so each
    intended level's density includes its error transitions.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    dnp = degraded_params(params, state, v0=float(thresholds[0]))
    wear = exp_kernel(dnp.lambda_w, grid.step)
    written = np.empty((4, grid.n))
    for y in range(4):
        f = deposit_delta(grid, float(thresholds[y]))
        sigma_p = params.sigma_e if y == 0 else params.sigma_p
        f = convolve_density(f, gauss_kernel(0.0, sigma_p, grid.step))
        f = convolve_density(f, wear)
        mu_r = float(dnp.mu_r(thresholds[y]))
        sig_r = math.sqrt(float(dnp.sigma_r2(thresholds[y])))
        if mu_r != 0.0 or sig_r > 0.0:
            f = convolve_density(f, gauss_kernel(mu_r, sig_r, grid.step))
        if c2c_kernel is not None:
            f = convolve_density(f, c2c_kernel)
        written[y] = f
    densities = dnp.pe_pmf @ written
    masses = np.trapezoid(densities, grid.points, axis=1)
    if np.any(masses < 1.0 - 1e-6):
        raise GridCoverageError(
            f"grid clips {1.0 - masses.min():.2e} of conditional mass")
    densities /= masses[:, None]
    return LevelPDFs(grid, densities)


def pdfs_from_mixture(model: GaussianMixtureModel,
                      grid: VoltageGrid = DEFAULT_GRID) -> LevelPDFs:
    """Tabulate the four mixture components as conditional densities."""
    pts = grid.points
    dens = np.empty((4, grid.n))
    for l in range(4):
        z = (pts - model.means[l]) / model.sigmas[l]
        dens[l] = np.exp(-0.5 * z * z) / (model.sigmas[l]
                                          * math.sqrt(2 * math.pi))
    masses = np.trapezoid(dens, pts, axis=1)
    if np.any(masses < 1.0 - 1e-6):
        raise GridCoverageError("mixture component clipped by grid")
    dens /= masses[:, None]
    return LevelPDFs(grid, dens)


def _entropy(density: np.ndarray, points: np.ndarray) -> float:
    term = np.where(density > 0.0,
                    density * np.log2(np.maximum(density, 1e-300)), 0.0)
    return -float(np.trapezoid(term, points))


def mutual_information_grid(pdfs: LevelPDFs) -> float:
    """I(X;Y) in bits for equiprobable levels, by grid integration."""
    pts = pdfs.grid.points
    h_y = _entropy(pdfs.mixture_density(), pts)
    h_y_x = sum(_entropy(pdfs.densities[l], pts) for l in range(4)) / 4.0
    return h_y - h_y_x


def mutual_information_gh(model: GaussianMixtureModel,
                          rule: QuadratureRule) -> float:
    """I(X;Y) in bits for the Gaussian-mixture channel via Gauss-Hermite.

    The conditional expectation of the log mixture posterior reduces to a
    weighted sum over quadrature nodes; exponents are clipped to avoid
    overflow for extreme node values.
    """
    x = model.means[:, None, None]               # (4, 1, 1)
    s = model.sigmas[:, None, None]
    xj = model.means[None, :, None]              # (1, 4, 1)
    sj = model.sigmas[None, :, None]
    # exponent e[i, j, k] = z_k^2 - (sqrt(2) s_i z_k + x_i - x_j)^2 / (2 s_j^2)
    zz = rule.nodes[None, None, :]
    arg = math.sqrt(2.0) * s * zz + x - xj
    expo = zz ** 2 - arg ** 2 / (2.0 * sj ** 2)
    expo = np.clip(expo, -745.0, 700.0)
    ratio = s / (4.0 * sj)
    terms = ratio * np.exp(expo)
    off_diag = 1.0 - np.eye(4)[:, :, None]
    g = 0.25 + (terms * off_diag).sum(axis=1)    # (4, n)
    total = (rule.weights[None, :] * np.log2(g)).sum()
    return float(-total / (4.0 * math.sqrt(math.pi)))


def raw_ber(pdfs: LevelPDFs, boundaries) -> float:
    """Raw bit error rate for hard reads at the given three boundaries.

    Each level's density mass per decision region is weighted by the bit
    distance of the Gray labels; equiprobable levels, two bits per cell.
    """
    boundaries = np.asarray(boundaries, dtype=float)
    if boundaries.shape != (3,) or np.any(np.diff(boundaries) <= 0):
        raise ValueError("need three strictly increasing boundaries")
    pts = pdfs.grid.points
    err = 0.0
    for l in range(4):
        cdf = cumulative_trapezoid(pdfs.densities[l], pts, initial=0.0)
        cdf /= cdf[-1]
        at = np.interp(boundaries, pts, cdf)
        region = np.diff(np.concatenate(([0.0], at, [1.0])))
        err += region @ HAMMING[l]
    return err / 4.0 / 2.0
