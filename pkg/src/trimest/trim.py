"""One-sided trimmed means and the trimmed-means treatment difference.

Missing outcomes rank strictly worse than every observed outcome (the
composite outcome); each arm then loses its worst ``ceil(alpha * n)`` records
and the rest are averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trial import Direction, TrialDataset, TrialRecord, arm_summary

# guards ceil() against alpha * n landing a hair above an integer
_CEIL_TOL = 1e-9


class TrimError(ValueError):
    pass


@dataclass(frozen=True)
class TrimSpec:
    """Trim-fraction policy. ``alpha=None`` means adaptive."""

    alpha: float | None = None

    def __post_init__(self):
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise TrimError(f"fixed alpha must lie in [0, 1), got {self.alpha}")

    @classmethod
    def adaptive(cls) -> "TrimSpec":
        return cls(None)

    @classmethod
    def fixed(cls, alpha: float) -> "TrimSpec":
        return cls(float(alpha))

    @classmethod
    def parse(cls, text: str) -> "TrimSpec":
        text = text.strip().lower()
        if text == "adaptive":
            return cls.adaptive()
        if text.startswith("fixed:"):
            try:
                return cls.fixed(float(text[6:]))
            except ValueError:
                pass
        raise TrimError(f"alpha policy must be 'adaptive' or 'fixed:F', got {text!r}")

    @property
    def is_adaptive(self) -> bool:
        return self.alpha is None

    def __str__(self):
        return "adaptive" if self.alpha is None else f"fixed:{self.alpha:g}"


@dataclass(frozen=True)
class TrimmedEstimate:
    mu_t1: float
    mu_t0: float
    diff: float
    alpha_used: float
    k1: int
    k0: int
    n_t1: int
    n_t0: int


def trim_count(alpha, n):
    """``ceil(alpha * n)``; works elementwise on arrays."""
    if np.ndim(alpha) == 0 and np.ndim(n) == 0:
        return int(math.ceil(alpha * n - _CEIL_TOL)) if alpha > 0 else 0
    k = np.ceil(np.asarray(alpha) * n - _CEIL_TOL).astype(np.int64)
    return np.maximum(k, 0)


def composite_order_key(r: TrialRecord, direction: Direction | str) -> tuple:
    """Sort key putting the worst record first.

    Missing records come before every observed one; observed records follow
    in worse-to-better order, ties broken by subject_id.
    """
    direction = Direction.parse(direction)
    if r.outcome is None:
        return (0, 0.0, r.subject_id)
    return (1, direction.sign * r.outcome, r.subject_id)


def resolve_alpha(d: TrialDataset, spec: TrimSpec) -> float:
    s = arm_summary(d)
    floor = max(s.proportions)
    if spec.is_adaptive:
        return floor
    if spec.alpha < floor - 1e-12:
        raise TrimError(
            f"alpha below missing fraction: fixed alpha {spec.alpha:g} < "
            f"max arm missing proportion {floor:.4f}"
        )
    return spec.alpha


def trimmed_mean(values, alpha: float, direction: Direction | str = Direction.WORSE_IS_LOW):
    """One-sided trimmed mean of ``values``.

    Drops the ``ceil(alpha * n)`` worst values (lowest for worse-low, highest
    for worse-high; ties resolved by position) and returns
    ``(mean, n_retained)``.
    """
    direction = Direction.parse(direction)
    values = [float(v) for v in values]
    n = len(values)
    if n == 0:
        raise TrimError("trimmed_mean of an empty sequence")
    k = trim_count(alpha, n)
    if k >= n:
        raise TrimError(f"trim exhausts arm: k={k} of n={n}")
    order = sorted(range(n), key=lambda i: (direction.sign * values[i], i))
    kept = [values[i] for i in order[k:]]
    return math.fsum(kept) / len(kept), len(kept)


def _arm_trim(records: list[TrialRecord], alpha: float, direction: Direction):
    n = len(records)
    k = trim_count(alpha, n)
    if k >= n:
        raise TrimError(f"trim exhausts arm: k={k} of n={n}")
    ranked = sorted(records, key=lambda r: composite_order_key(r, direction))
    kept = ranked[k:]
    if any(r.outcome is None for r in kept):
        raise TrimError("a missing record survived trimming; alpha is below the missing fraction")
    return math.fsum(r.outcome for r in kept) / len(kept), k, len(kept)


def estimate(d: TrialDataset, spec: TrimSpec = TrimSpec()) -> TrimmedEstimate:
    alpha = resolve_alpha(d, spec)
    return estimate_at(d, alpha)


def estimate_at(d: TrialDataset, alpha: float) -> TrimmedEstimate:
    """Trimmed-means difference at an already resolved alpha."""
    mu1, k1, nt1 = _arm_trim(d.arm_records(1), alpha, d.direction)
    mu0, k0, nt0 = _arm_trim(d.arm_records(0), alpha, d.direction)
    return TrimmedEstimate(mu1, mu0, mu1 - mu0, alpha, k1, k0, nt1, nt0)


# ---------------------------------------------------------------------------
# Array kernels. These back the permutation test, the bootstrap and the
# simulation lab, where calling ``estimate`` per resample would be far too
# slow. ``estimate`` stays the reference path; tests tie the two together.


def worst_first(y: np.ndarray, direction: Direction, tiebreak=None) -> np.ndarray:
    """Indices ordering ``y`` worst first, NaN (missing) before everything.

    ``tiebreak`` is an optional secondary key (default: position).
    """
    key = direction.sign * np.where(np.isnan(y), 0.0, y)
    miss = np.isnan(y)
    second = np.arange(len(y)) if tiebreak is None else tiebreak
    # lexsort: last key is primary
    return np.lexsort((second, key, ~miss))


def resolved_alpha_rows(m1, n1, m0, n0, fixed: float | None = None):
    """Per-row alpha: adaptive max missing fraction, or fixed raised to it."""
    floor = np.maximum(np.asarray(m1) / n1, np.asarray(m0) / n0)
    if fixed is None:
        return floor
    return np.maximum(floor, fixed)


def tail_means(v: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row means of ``v[:, k:]`` for a per-row start index ``k``.

    ``v`` is (R, n) already in worst-first order; positions below ``k`` may
    hold garbage (e.g. zeros for missing records).
    """
    R, n = v.shape
    cs = np.cumsum(v, axis=1)
    before = np.where(k > 0, cs[np.arange(R), np.maximum(k - 1, 0)], 0.0)
    return (cs[:, -1] - before) / (n - k)


def masked_tail_means(vals: np.ndarray, members: np.ndarray, k: np.ndarray, n_members) -> np.ndarray:
    """Trimmed means of row-wise subsets of one pooled worst-first sequence.

    ``members`` is (R, N) boolean selecting each row's arm within the pooled
    sequence ``vals``; the first ``k[r]`` members of row r are dropped.
    """
    counts = np.cumsum(members, axis=1)
    keep = members & (counts > k[:, None])
    return (keep * vals).sum(axis=1) / (n_members - k)
