"""Noise and degradation laws for a four-level flash read channel.

A stored cell voltage is the intended write level plus programming noise,
a one-sided wear-out tail whose slope grows with accumulated write stress,
retention drift that scales with the level's distance from the erased
state, and (in the full model) cell-to-cell interference added by the
lattice.  Functions here are pure: they report distribution parameters or
draw samples from a caller-supplied RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np


class ModelRangeError(ValueError):
    """Raised when a degradation law is evaluated outside its fitted range."""


# Program-error exponents: (intended, written) -> (slope, intercept) of the
# log-probability as a function of pe_count / pe_norm.  Transitions only move
# voltage upward; missing pairs never occur.
_PE_COEFFS: dict[tuple[int, int], tuple[float, float]] = {
    (0, 2): (0.87, -11.89),
    (0, 3): (1.41, -19.82),
    (1, 2): (1.63, -19.22),
    (1, 3): (0.73, -11.67),
    (2, 3): (1.50, -17.69),
}


@dataclass(frozen=True)
class ChannelParams:
    """Static channel parameters.  Defaults are the reference MLC part."""

    sigma_e: float = 0.35          # programming noise std, erased level
    sigma_p: float = 0.05          # programming noise std, programmed levels
    c_w: float = 1.26e-3           # wear-out slope floor
    a_w: float = 1.8e-4            # wear-out slope growth coefficient
    k_i: float = 0.62              # inner power-law exponent
    a_r: float = 7.0e-4            # retention coefficient, inner exponent
    b_r: float = 4.76e-3           # retention coefficient, outer exponent
    k_o: float = 0.3               # outer power-law exponent
    t0_hours: float = 1.0          # retention time normalization
    retention_hours: float = 8760.0  # read time after write (1 year)
    v_max: float = 16.0            # accumulated-voltage normalization
    thresholds: tuple[float, float, float, float] = (2.8, 5.2, 6.4, 7.86)
    c2c_strength: float = 0.2      # interference strength multiplier s
    c2c_width_factor: float = 0.2  # truncation half-width as fraction of mean
    c2c_sigma_factor: float = 0.3  # coupling std as fraction of mean
    pe_norm: float = 3000.0        # cycle normalization for program errors
    model: str = "model2"          # "model1": no program errors, no c2c
    pe_coeffs: dict = field(default_factory=lambda: dict(_PE_COEFFS))

    def __post_init__(self) -> None:
        if not (self.sigma_e > self.sigma_p > 0):
            raise ValueError("need sigma_e > sigma_p > 0")
        for name in ("c_w", "a_w", "a_r", "b_r"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not (0 < self.k_o <= self.k_i <= 1):
            raise ValueError("need 0 < k_o <= k_i <= 1")
        t = self.thresholds
        if not all(a < b for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if self.v_max < t[3] - t[0]:
            raise ValueError("v_max must cover the threshold span")
        if self.c2c_strength < 0:
            raise ValueError("c2c_strength must be >= 0")
        if self.model not in ("model1", "model2"):
            raise ValueError("model must be 'model1' or 'model2'")
        for (a, b) in self.pe_coeffs:
            if not (0 <= a < b <= 3):
                raise ValueError("program-error transitions must move upward")

    # Mean coupling ratio by neighbor position, before strength scaling.
    _GAMMA_ABOVE = 0.08   # next wordline, same bitline
    _GAMMA_SAME = 0.10    # same wordline, adjacent bitline
    _GAMMA_DIAG = 0.006   # next wordline, adjacent bitline

    def gamma_mean(self, position: str) -> float:
        """Mean coupling ratio for one of 'above', 'same', 'diag'."""
        base = {"above": self._GAMMA_ABOVE,
                "same": self._GAMMA_SAME,
                "diag": self._GAMMA_DIAG}[position]
        return base * self.c2c_strength


def reference_mlc(model: str = "model2") -> ChannelParams:
    """Reference MLC parameter set (the built-in defaults)."""
    return ChannelParams(model=model)


@dataclass
class ChannelState:
    """Accumulated stress of one parity's cell population."""

    v_acc: float = 0.0
    pe_count: int = 0
    parity: str = "even"


def wearout_lambda(params: ChannelParams, v_acc: float) -> float:
    """Slope of the one-sided exponential wear-out tail at a given stress.

    Grows as a power law of normalized accumulated voltage; the draw itself
    has mean equal to the returned slope.
    """
    if v_acc < 0:
        raise ModelRangeError("v_acc must be >= 0")
    return params.c_w + params.a_w * (v_acc / params.v_max) ** params.k_i


def retention_stats(params: ChannelParams, v_acc: float, t_hours: float,
                    v, v0: float):
    """Mean and variance of retention drift for written voltage(s) v.

    Drift pulls programmed levels toward the erased threshold v0 in
    proportion to (v - v0); both the shift and the spread grow with
    accumulated stress and log-time.  Returns (mu_r, sigma_r2); the erased
    level (v == v0) is unaffected.  v may be a scalar or array.
    """
    v = np.asarray(v, dtype=float)
    if v_acc < 0:
        raise ModelRangeError("v_acc must be >= 0")
    if t_hours < 0:
        raise ModelRangeError("t_hours must be >= 0")
    if np.any(v < v0 - 1e-12):
        raise ModelRangeError("written voltage below erased threshold")
    ln_term = math.log(1.0 + t_hours / params.t0_hours)
    x = v_acc / params.v_max
    bracket = params.a_r * x ** params.k_i + params.b_r * x ** params.k_o
    dv = np.maximum(v - v0, 0.0)
    mu_r = -dv * ln_term * bracket
    sigma_r2 = 0.1 * dv * ln_term * bracket * bracket
    if mu_r.ndim == 0:
        return float(mu_r), float(sigma_r2)
    return mu_r, sigma_r2


def prog_error_pmf(params: ChannelParams, pe_count: float) -> np.ndarray:
    """4x4 written-level distribution per intended level.

    Row l gives P(written = y | intended = l).  Off-diagonal mass grows
    exponentially with cycle count; the diagonal absorbs the remainder.
    Model 1 disables errors entirely (identity matrix).
    """
    if pe_count < 0:
        raise ModelRangeError("pe_count must be >= 0")
    pmf = np.eye(4)
    if params.model == "model1":
        return pmf
    x = pe_count / params.pe_norm
    for (l, y), (c1, c0) in params.pe_coeffs.items():
        pmf[l, y] = math.exp(c1 * x + c0)
    diag = 1.0 - (pmf.sum(axis=1) - np.diag(pmf))
    if np.any(diag < 0):
        raise ModelRangeError(f"pe_count={pe_count} outside fitted range")
    np.fill_diagonal(pmf, diag)
    return pmf


@dataclass
class DegradedNoiseParams:
    """Snapshot of the stress-dependent noise laws for one parity.

    Bundles the wear-out slope, the retention factors at the configured
    read time, and the program-error matrix, all frozen at a given
    ChannelState and erased threshold v0.
    """

    lambda_w: float
    ln_term: float
    bracket: float
    v0: float
    pe_pmf: np.ndarray

    def mu_r(self, v):
        return -(np.asarray(v, dtype=float) - self.v0) * self.ln_term * self.bracket

    def sigma_r2(self, v):
        return 0.1 * (np.asarray(v, dtype=float) - self.v0) \
            * self.ln_term * self.bracket ** 2


def degraded_params(params: ChannelParams, state: ChannelState,
                    v0: float) -> DegradedNoiseParams:
    """Freeze the degradation laws at the given state for reuse."""
    ln_term = math.log(1.0 + params.retention_hours / params.t0_hours)
    x = state.v_acc / params.v_max
    bracket = params.a_r * x ** params.k_i + params.b_r * x ** params.k_o
    return DegradedNoiseParams(
        lambda_w=wearout_lambda(params, state.v_acc),
        ln_term=ln_term,
        bracket=bracket,
        v0=v0,
        pe_pmf=prog_error_pmf(params, state.pe_count),
    )


def sample_written_levels(params: ChannelParams, state: ChannelState,
                          levels: np.ndarray,
                          rng: np.random.Generator) -> np.ndarray:
    """Apply program errors: map intended levels to written levels."""
    if params.model == "model1":
        return levels.copy()
    pmf = prog_error_pmf(params, state.pe_count)
    cums = pmf.cumsum(axis=1)
    cums[:, -1] = 1.1  # guard against cumulative rounding at the top bin
    u = rng.random(levels.size)
    written = (u[:, None] >= cums[levels.ravel()]).sum(axis=1)
    return written.reshape(levels.shape).astype(levels.dtype)


def sample_cell_noise(params: ChannelParams, state: ChannelState,
                      levels: np.ndarray, level_voltages: np.ndarray,
                      rng: np.random.Generator):
    """Draw written levels and pre-retention voltages for a batch of cells.

    levels: intended levels, any shape.  level_voltages: the four scaled
    write thresholds of the allocation that programs these cells.  Returns
    (written_levels, voltages); voltages carry programming noise and the
    wear-out tail but not retention or interference, which depend on
    context the caller owns.
    """
    levels = np.asarray(levels)
    written = sample_written_levels(params, state, levels, rng)
    sigma = np.where(written == 0, params.sigma_e, params.sigma_p)
    lam = wearout_lambda(params, state.v_acc)
    noise = rng.standard_normal(levels.shape) * sigma
    wear = rng.exponential(lam, size=levels.shape)
    voltages = np.asarray(level_voltages, dtype=float)[written] + noise + wear
    return written, voltages


def make_params(model: str = "model2", **overrides) -> ChannelParams:
    """Reference parameters with selective overrides (for configs/tests)."""
    return replace(ChannelParams(model=model), **overrides)
