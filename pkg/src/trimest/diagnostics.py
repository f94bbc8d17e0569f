"""Assumption diagnostics.

* two-sample Kolmogorov-Smirnov check that the arms are a location shift of
  one another (the only testable half of the identification conditions);
* sMNAR, the share of deleted values that would have been trimmed anyway;
* population trimmed means, used to check numerically that a constant
  trimmed-mean difference across trim fractions goes together with a pure
  location shift.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .trial import Direction, TrialDataset
from .trim import trim_count, worst_first


@dataclass(frozen=True)
class KsResult:
    d_stat: float
    p_value: float
    n1: int
    n0: int
    shift_applied: float


def ks_statistic(x, y) -> float:
    """sup_t |F_x(t) - F_y(t)| for the two empirical CDFs."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the limiting Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # theta-function form converges fast for small lam
        s = 0.0
        for k in range(1, 100):
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * lam * lam))
            s += term
            if term < 1e-12:
                break
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    s = 0.0
    for k in range(1, 100):
        term = math.exp(-2 * k * k * lam * lam)
        s += term if k % 2 else -term
        if term < 1e-12:
            break
    return min(1.0, max(0.0, 2.0 * s))


def ks_location_shift_test(d: TrialDataset, shift: float = 0.0) -> KsResult:
    """KS test of arm-1 outcomes moved by ``-shift`` against arm-0 outcomes.

    Only observed outcomes enter. The p-value is asymptotic, using the
    effective sample size n1*n0/(n1+n0).
    """
    y, arm, _ = d.arrays()
    y1 = y[(arm == 1) & ~np.isnan(y)] - shift
    y0 = y[(arm == 0) & ~np.isnan(y)]
    if y1.size < 2 or y0.size < 2:
        raise ValueError(
            f"KS test needs >= 2 observed outcomes per arm (arm1={y1.size}, arm0={y0.size})"
        )
    dstat = ks_statistic(y1, y0)
    n_eff = y1.size * y0.size / (y1.size + y0.size)
    return KsResult(dstat, kolmogorov_sf(math.sqrt(n_eff) * dstat), int(y1.size), int(y0.size), shift)


def trim_thresholds(y, arm, alpha: float, direction: Direction) -> tuple[float, float]:
    """Worst retained outcome per arm (arm 1, arm 0) after trimming at ``alpha``."""
    out = []
    for a in (1, 0):
        ya = np.asarray(y)[np.asarray(arm) == a]
        k = trim_count(alpha, ya.size)
        out.append(float(ya[worst_first(ya, direction)[k]]))
    return out[0], out[1]


def smnar_fraction(true_values, trim_thresholds, direction: Direction | str) -> float | None:
    """Share of deleted values lying strictly on the worse side of their arm's trim point.

    ``true_values`` and ``trim_thresholds`` are (arm 1, arm 0) pairs. Returns
    None when nothing was deleted.
    """
    direction = Direction.parse(direction)
    hits = total = 0
    for vals, thr in zip(true_values, trim_thresholds):
        v = np.asarray(vals, dtype=float)
        total += v.size
        if direction is Direction.WORSE_IS_LOW:
            hits += int((v < thr).sum())
        else:
            hits += int((v > thr).sum())
    return None if total == 0 else hits / total


@dataclass(frozen=True)
class NormalLocationPair:
    mu1: float
    mu0: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def delta(self) -> float:
        return self.mu1 - self.mu0

    def density(self, arm: int, y):
        mu = self.mu1 if arm == 1 else self.mu0
        return stats.norm.pdf(y, mu, self.sigma)


def normal_trimmed_mean(mu: float, sigma: float, alpha: float, direction=Direction.WORSE_IS_LOW) -> float:
    """Mean of N(mu, sigma^2) after removing its worst ``alpha`` tail."""
    direction = Direction.parse(direction)
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if alpha == 0:
        return float(mu)
    tail = sigma * stats.norm.pdf(stats.norm.ppf(alpha)) / (1 - alpha)
    return float(mu + tail) if direction is Direction.WORSE_IS_LOW else float(mu - tail)


class ProfileError(RuntimeError):
    pass


def _is_normal(dist) -> bool:
    return getattr(getattr(dist, "dist", None), "name", None) == "norm"


def population_trimmed_mean(dist, alpha: float, direction=Direction.WORSE_IS_LOW) -> float:
    """Trimmed mean of a frozen scipy distribution (closed form for normals)."""
    direction = Direction.parse(direction)
    if _is_normal(dist):
        mu, sd = dist.mean(), dist.std()
        return normal_trimmed_mean(mu, sd, alpha, direction)
    if alpha == 0:
        return float(dist.mean())
    lo, hi = dist.support()
    if direction is Direction.WORSE_IS_LOW:
        lo = dist.ppf(alpha)
    else:
        hi = dist.ppf(1 - alpha)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(lambda t: t * dist.pdf(t), lo, hi, limit=200)
        except integrate.IntegrationWarning as exc:
            raise ProfileError(f"integration did not converge at alpha={alpha}: {exc}") from None
    if not math.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise ProfileError(f"integration did not converge at alpha={alpha} (error {err:.2e})")
    return val / (1 - alpha)


def theorem2_profile(F1, F0, alpha_grid, direction=Direction.WORSE_IS_LOW) -> list[float]:
    """Trimmed-mean difference of two distributions across trim fractions.

    A profile that is flat in alpha is what a pure location shift produces;
    any other relationship between the arms bends it.
    """
    return [
        population_trimmed_mean(F1, a, direction) - population_trimmed_mean(F0, a, direction)
        for a in alpha_grid
    ]
