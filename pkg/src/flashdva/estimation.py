"""Channel estimation from coarse read-back histograms.

The controller cannot see true densities; it places a small set of read
boundaries, counts cells per bin, and fits an equal-weight four-Gaussian
mixture to the bin frequencies with a damped Gauss-Newton loop.  Helpers
here also choose equal-probability boundaries for the next measurement and
rescale them when the write scale changes between measurements.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import ndtr

from .info import GaussianMixtureModel

SIGMA_FLOOR = 1e-3
# Generous physical bounds for fitted parameters.  No genuine level in this
# channel widens past ~0.45 V (0.35 V programming spread plus retention and
# interference in quadrature) or leaves the boundary search range, but an
# unconstrained least-squares step can park a component far outside the
# measured support with a huge sigma (a near-flat ghost that reproduces
# coarse bin masses); clamping each step removes those configurations
# without ever binding on real fits.
SIGMA_CAP = 0.8
MEAN_RANGE = (-4.0, 12.0)
# Per-iteration step limits (volts).  A component whose mass falls almost
# entirely into one bin has a nearly flat residual in its own parameters,
# so the damped normal equations can propose an enormous move along that
# direction; capping the step (scaled as a whole, preserving its
# direction) keeps such a component inside the basin where its gradient
# is informative.  Well-posed fits take steps far below these limits.
MEAN_STEP_LIMIT = 0.5
SIGMA_STEP_LIMIT = 0.1


@dataclass
class FitReport:
    """Outcome of one histogram fit."""

    iterations: int
    residual: float          # final sum of squared frequency residuals
    flag: str                # converged | max_iter | stalled | degenerate
    swapped: bool = False    # components reordered after the fit


def equal_prob_boundaries(model: GaussianMixtureModel, n_bins: int = 9,
                          tol_eps: float = 1e-6, lo: float = -4.0,
                          hi: float = 12.0, max_iter: int = 200) -> np.ndarray:
    """Boundaries splitting the model into n_bins equal-probability bins.

    Each boundary is bisected until the interval is narrower than 1e-4 V
    and the CDF sits within tol_eps of its target (or the iteration cap is
    hit).  Raises if the model's mass does not bracket the targets inside
    [lo, hi].
    """
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if model.cdf(np.array(lo)) >= 1.0 / n_bins \
            or model.cdf(np.array(hi)) <= (n_bins - 1.0) / n_bins:
        raise ValueError("model mass not bracketed by the search range")
    bounds = np.empty(n_bins - 1)
    left = lo
    for i in range(1, n_bins):
        target = i / n_bins
        a, b = left, hi
        mid = 0.5 * (a + b)
        for _ in range(max_iter):
            mid = 0.5 * (a + b)
            err = float(model.cdf(np.array(mid))) - target
            if b - a <= 1e-4 and abs(err) <= tol_eps:
                break
            if err < 0:
                a = mid
            else:
                b = mid
        bounds[i - 1] = mid
        left = mid
    return bounds


def rescale_boundaries(boundaries, alpha_new: float,
                       alpha_prev: float) -> np.ndarray:
    """Scale boundaries by the ratio of write scale factors."""
    if alpha_prev <= 0:
        raise ValueError("previous scale factor must be > 0")
    return np.asarray(boundaries, dtype=float) * (alpha_new / alpha_prev)


def dedupe_boundaries(boundaries) -> tuple[np.ndarray, int]:
    """Sort boundaries and drop coincident ones (e.g. after quantization).

    Returns (unique boundaries, number dropped).
    """
    b = np.sort(np.asarray(boundaries, dtype=float))
    keep = np.concatenate(([True], np.diff(b) > 0))
    return b[keep], int((~keep).sum())


def empirical_quantiles(counts, boundaries, probs) -> np.ndarray:
    """Interpolated quantiles of the distribution behind a histogram.

    The empirical CDF is known exactly at the boundaries; between them it
    is interpolated linearly, and the open outer bins are closed with a
    margin of a quarter of the measured span.  Coarse, but independent of
    any model — the hook for data-driven boundary placement when a
    predicted model cannot be trusted.
    """
    counts = np.asarray(counts, dtype=float)
    b = np.asarray(boundaries, dtype=float)
    cum = np.cumsum(counts)[:-1] / counts.sum()
    span = (b[-1] - b[0]) if b.size > 1 else 1.0
    xs = np.concatenate(([b[0] - 0.25 * span], b, [b[-1] + 0.25 * span]))
    ys = np.maximum.accumulate(np.concatenate(([0.0], cum, [1.0])))
    return np.interp(probs, ys, xs)


def empirical_quantile_means(counts, boundaries) -> np.ndarray:
    """Rough component means of an equal-weight four-mixture: its octiles."""
    return empirical_quantiles(counts, boundaries,
                               (0.125, 0.375, 0.625, 0.875))


def bisect_quantile_bounds(targets, xs, fs, lo: float = -4.0,
                           hi: float = 12.0):
    """One parallel-bisection step toward the quantiles of a measured CDF.

    xs, fs are positions and empirical CDF values accumulated over
    previous measurements (any order; fs is re-monotonized to absorb
    sampling noise).  For each target the tightest bracketing pair of
    known points is found and its midpoint proposed; measuring at the
    midpoints halves every bracket, so a handful of rounds localizes all
    quantiles even when linear CDF interpolation would oscillate (a narrow
    level inside one wide bin smears across it).

    Returns (midpoints, widths), both in target order.
    """
    targets = np.asarray(targets, dtype=float)
    xs = np.concatenate(([lo], np.asarray(xs, dtype=float), [hi]))
    fs = np.concatenate(([0.0], np.asarray(fs, dtype=float), [1.0]))
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    fs = np.maximum.accumulate(fs[order])
    mids = np.empty(targets.size)
    widths = np.empty(targets.size)
    for i, t in enumerate(targets):
        below = xs[fs <= t]
        above = xs[fs >= t]
        left = below[-1] if below.size else lo
        right = above[0] if above.size else hi
        mids[i] = 0.5 * (left + right)
        widths[i] = right - left
    return mids, widths


def predict_bin_probs(model: GaussianMixtureModel,
                      boundaries) -> np.ndarray:
    """Model probability of each histogram bin (boundaries as bin edges)."""
    b = np.asarray(boundaries, dtype=float)
    cdf = model.cdf(b)
    return np.diff(np.concatenate(([0.0], cdf, [1.0])))


def _bin_prob_jacobian(means: np.ndarray, sigmas: np.ndarray,
                       boundaries: np.ndarray) -> np.ndarray:
    """d p_bin / d theta for theta = (mu_0..3, sigma_0..3).

    Uses the closed form: the derivative of a component's CDF at an edge
    w.r.t. its mean is -phi(z)/sigma and w.r.t. its sigma is -z phi(z)/sigma.
    """
    n_bins = boundaries.size + 1
    jac = np.zeros((n_bins, 8))
    z = (boundaries[None, :] - means[:, None]) / sigmas[:, None]   # (4, m)
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    zphi = z * phi
    for l in range(4):
        # pad with the infinite edges, where phi and z*phi vanish
        p = np.concatenate(([0.0], phi[l], [0.0]))
        zp = np.concatenate(([0.0], zphi[l], [0.0]))
        jac[:, l] = (p[:-1] - p[1:]) / (4.0 * sigmas[l])
        jac[:, 4 + l] = (zp[:-1] - zp[1:]) / (4.0 * sigmas[l])
    return jac


def lm_fit(counts, boundaries, init: GaussianMixtureModel,
           max_iter: int = 100, damping: float = 1e-3,
           step_tol: float = 1e-8, improve_tol: float = 1e-12):
    """Fit an equal-weight four-Gaussian mixture to histogram counts.

    Damped least squares on the bin-frequency residuals with the analytic
    Jacobian.  The damping term scales with the curvature diagonal, is
    divided by 10 on accepted steps and multiplied by 10 on rejected ones.
    Steps larger than the per-iteration limits are shrunk as a whole, and
    every iterate is projected onto the physical box (means in MEAN_RANGE,
    sigmas in [SIGMA_FLOOR, SIGMA_CAP]).  Components are sorted by mean
    afterwards (flagged in the report when that reorders them).

    Returns (GaussianMixtureModel, FitReport).
    """
    counts = np.asarray(counts, dtype=float)
    boundaries = np.asarray(boundaries, dtype=float)
    if counts.size != boundaries.size + 1:
        raise ValueError("need one more count bin than boundaries")
    total = counts.sum()
    if (counts > 0).sum() <= 1 or total <= 0:
        return init, FitReport(0, float("nan"), "degenerate")
    freq = counts / total

    def clamp(th):
        th[:4] = np.clip(th[:4], MEAN_RANGE[0], MEAN_RANGE[1])
        th[4:] = np.clip(th[4:], SIGMA_FLOOR, SIGMA_CAP)
        return th

    theta = clamp(np.concatenate((init.means, init.sigmas)).astype(float))

    def residuals(th):
        model = GaussianMixtureModel(th[:4], th[4:])
        return freq - predict_bin_probs(model, boundaries)

    r = residuals(theta)
    ssr = float(r @ r)
    lam = damping
    flag = "max_iter"
    iters = 0
    for iters in range(1, max_iter + 1):
        jac = _bin_prob_jacobian(theta[:4], theta[4:], boundaries)
        g = jac.T @ r
        h = jac.T @ jac
        scale = np.maximum(np.diag(h), 1e-12)
        try:
            step = np.linalg.solve(h + lam * np.diag(scale), g)
        except np.linalg.LinAlgError:
            flag = "stalled"
            break
        oversize = max(np.abs(step[:4]).max() / MEAN_STEP_LIMIT,
                       np.abs(step[4:]).max() / SIGMA_STEP_LIMIT)
        if oversize > 1.0:
            step = step / oversize
        trial = clamp(theta + step)
        r_trial = residuals(trial)
        ssr_trial = float(r_trial @ r_trial)
        if ssr_trial <= ssr:
            improvement = ssr - ssr_trial
            theta, r, ssr = trial, r_trial, ssr_trial
            lam = max(lam * 0.1, 1e-12)
            if float(np.linalg.norm(step)) < step_tol \
                    or improvement < improve_tol:
                flag = "converged"
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                flag = "stalled"
                break

    order = np.argsort(theta[:4], kind="stable")
    swapped = bool(np.any(order != np.arange(4)))
    model = GaussianMixtureModel(theta[:4][order], theta[4:][order])
    return model, FitReport(iters, ssr, flag, swapped)
