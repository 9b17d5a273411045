"""Write-scale and read-threshold control policies.

The write controller picks the smallest scale factor whose predicted
mutual information still clears a setpoint (target plus margin), found by
bisection over a caller-supplied evaluator.  Read thresholds are either
fixed midpoints of the unscaled write levels or adaptive equal-likelihood
crossings of the currently estimated mixture.  An optional quantizer snaps
all deployed voltages onto a uniform DAC grid.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .info import GaussianMixtureModel, QuadratureRule, mutual_information_gh


@dataclass
class VoltageAllocation:
    """One parity's deployed write thresholds and the scale behind them."""

    alpha: float
    thresholds: np.ndarray

    def __post_init__(self) -> None:
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        if self.thresholds.shape != (4,):
            raise ValueError("allocation needs 4 thresholds")

    @property
    def v0(self) -> float:
        return float(self.thresholds[0])

    @classmethod
    def from_alpha(cls, alpha: float, base_thresholds) -> "VoltageAllocation":
        base = np.asarray(base_thresholds, dtype=float)
        return cls(alpha=float(alpha), thresholds=alpha * base)


@dataclass
class DvaConfig:
    """Setpoint and search controls for the scale-factor bisection."""

    target: float = 1.945
    margin: float = 0.02
    alpha_min: float = 0.0
    eps_alpha: float = 1e-4

    @property
    def setpoint(self) -> float:
        return self.target + self.margin

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha_min < 1.0):
            raise ValueError("alpha_min must be in [0, 1)")
        if self.eps_alpha <= 0:
            raise ValueError("eps_alpha must be > 0")


def dva_scale_factor(mi_of_alpha, cfg: DvaConfig) -> tuple[float, bool]:
    """Smallest scale in [alpha_min, 1] whose predicted MI clears the setpoint.

    mi_of_alpha must be nondecreasing in alpha over the search range.
    Returns (alpha, saturated); saturated means even full scale cannot
    reach the setpoint, in which case alpha is 1.
    """
    setpoint = cfg.setpoint
    if mi_of_alpha(1.0) < setpoint:
        return 1.0, True
    lo = cfg.alpha_min
    if mi_of_alpha(lo) >= setpoint:
        return lo, False
    hi = 1.0
    while hi - lo > cfg.eps_alpha:
        mid = 0.5 * (lo + hi)
        if mi_of_alpha(mid) >= setpoint:
            hi = mid
        else:
            lo = mid
    return hi, False


def fixed_read_boundaries(thresholds) -> np.ndarray:
    """Midpoints between adjacent write levels."""
    t = np.asarray(thresholds, dtype=float)
    return 0.5 * (t[:-1] + t[1:])


def dta_boundaries(model: GaussianMixtureModel) -> np.ndarray:
    """Equal-likelihood crossings of adjacent mixture components.

    For each adjacent pair the crossing solves a quadratic in the log
    density difference; the root strictly between the two means is used,
    falling back to the midpoint when no such root exists (heavy overlap).
    """
    means, sigmas = model.means, model.sigmas
    bounds = np.empty(3)
    for i in range(3):
        m1, m2 = means[i], means[i + 1]
        s1, s2 = sigmas[i], sigmas[i + 1]
        mid = 0.5 * (m1 + m2)
        a = 1.0 / s1 ** 2 - 1.0 / s2 ** 2
        b = -2.0 * (m1 / s1 ** 2 - m2 / s2 ** 2)
        c = (m1 / s1) ** 2 - (m2 / s2) ** 2 + 2.0 * math.log(s1 / s2)
        if abs(a) < 1e-12:
            bounds[i] = -c / b if b != 0 else mid
            continue
        disc = b * b - 4.0 * a * c
        if disc < 0:
            bounds[i] = mid
            continue
        root = math.sqrt(disc)
        candidates = [(-b - root) / (2 * a), (-b + root) / (2 * a)]
        inside = [x for x in candidates if min(m1, m2) < x < max(m1, m2)]
        if inside:
            bounds[i] = min(inside, key=lambda x: abs(x - mid))
        else:
            bounds[i] = mid
    return np.sort(bounds)


@dataclass
class QuantGrid:
    """Uniform DAC grid spanning [lo, hi] with n_levels points."""

    n_levels: int
    lo: float = -1.0
    hi: float = 8.0

    def __post_init__(self) -> None:
        if self.n_levels < 2:
            raise ValueError("need at least 2 quantizer levels")
        if self.hi <= self.lo:
            raise ValueError("quantizer range must be nonempty")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n_levels - 1)

    def snap(self, values, mode: str = "nearest") -> np.ndarray:
        """Snap voltages onto the grid.

        mode 'nearest' rounds to the closest grid point (ties upward);
        mode 'ceil' rounds up.  Values must lie within one spacing of the
        grid range and are clamped onto it.
        """
        v = np.asarray(values, dtype=float)
        step = self.spacing
        if np.any(v < self.lo - step) or np.any(v > self.hi + step):
            raise ValueError("value outside quantizer range")
        pos = (v - self.lo) / step
        if mode == "nearest":
            idx = np.floor(pos + 0.5)
        elif mode == "ceil":
            idx = np.ceil(pos - 1e-12)
        else:
            raise ValueError("mode must be 'nearest' or 'ceil'")
        idx = np.clip(idx, 0, self.n_levels - 1)
        return self.lo + idx * step


def quantized_write_thresholds(alpha: float, base_thresholds,
                               quant: QuantGrid, sigmas,
                               rule: QuadratureRule) -> np.ndarray:
    """Snap scaled write thresholds up onto the DAC grid, protecting MI.

    Plain per-level rounding can shrink a critical gap; after the upward
    snap, whichever quantized gap lost the most width relative to the exact
    allocation is widened one grid step at a time until the Gaussian-
    assumption MI is no worse than the exact allocation's (or the grid top
    is reached).
    """
    exact = alpha * np.asarray(base_thresholds, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    snapped = quant.snap(exact, mode="ceil")
    target = mutual_information_gh(GaussianMixtureModel(exact, sigmas), rule)
    for _ in range(4 * quant.n_levels):
        got = mutual_information_gh(GaussianMixtureModel(snapped, sigmas),
                                    rule)
        if got >= target - 1e-12:
            break
        # Widen the gap that lost the most width: raising every threshold
        # above it keeps the allocation monotone and the other gaps intact.
        loss = np.diff(snapped) - np.diff(exact)
        i = int(np.argmin(loss))
        if snapped[3] + quant.spacing > quant.hi + 1e-12:
            break  # no headroom left; accept the best the grid allows
        snapped[i + 1:] += quant.spacing
    return snapped
