"""Permutation inference and bootstrap standard errors for the trimmed difference."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .trial import Direction, TrialDataset
from .trim import (
    TrimSpec,
    estimate,
    masked_tail_means,
    resolved_alpha_rows,
    tail_means,
    trim_count,
    worst_first,
)

log = logging.getLogger(__name__)

# relabelings are drawn in fixed-size blocks, block b seeded from (seed, b);
# the block layout never depends on the worker count
BLOCK = 256


@dataclass
class PermutationResult:
    observed_diff: float
    perm_diffs: np.ndarray = field(repr=False)
    p_one_sided: float
    p_two_sided: float
    ci_low: float
    ci_high: float
    gamma: float
    B: int
    seed: int
    alpha_used: float
    redraws: int = 0
    direction: Direction = Direction.WORSE_IS_LOW

    @property
    def rejects(self) -> bool:
        """Percentile rule: estimate beyond the gamma/2 tail on the benefit side."""
        if self.direction is Direction.WORSE_IS_LOW:
            return self.observed_diff > percentile(self.perm_diffs, 1 - self.gamma / 2)
        return self.observed_diff < percentile(self.perm_diffs, self.gamma / 2)


def percentile(values, q: float) -> float:
    """Order statistic ``ceil(q * B)`` (1-based) of the sorted values; q=0 gives the minimum."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("percentile of empty sequence")
    idx = max(int(math.ceil(q * v.size - 1e-9)), 1)
    return float(v[min(idx, v.size) - 1])


def subject_ranks(d: TrialDataset) -> np.ndarray:
    ids = [r.subject_id for r in d.records]
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[sorted(range(len(ids)), key=ids.__getitem__)] = np.arange(len(ids))
    return ranks


@dataclass(frozen=True)
class PooledArrays:
    """One dataset laid out worst-first for the relabeling kernel."""

    vals: np.ndarray  # outcomes, 0.0 where missing
    miss: np.ndarray
    arm1: np.ndarray  # observed labels, same order
    fixed_alpha: float | None

    @classmethod
    def build(cls, y, arm, direction: Direction, fixed_alpha=None, tiebreak=None):
        order = worst_first(y, direction, tiebreak)
        ys = y[order]
        miss = np.isnan(ys)
        return cls(np.where(miss, 0.0, ys), miss, np.asarray(arm)[order] == 1, fixed_alpha)

    @property
    def n1(self) -> int:
        return int(self.arm1.sum())

    @property
    def n0(self) -> int:
        return int(self.arm1.size - self.arm1.sum())

    def diffs(self, members: np.ndarray):
        """Trimmed differences for each row of an arm-1 membership matrix.

        Returns ``(diffs, valid)``; rows whose resolved trim would empty an
        arm are flagged invalid.
        """
        n1, n0 = self.n1, self.n0
        m1 = (members & self.miss).sum(axis=1)
        m0 = self.miss.sum() - m1
        alpha = resolved_alpha_rows(m1, n1, m0, n0, self.fixed_alpha)
        k1, k0 = trim_count(alpha, n1), trim_count(alpha, n0)
        valid = (k1 < n1) & (k0 < n0)
        k1 = np.where(valid, k1, 0)
        k0 = np.where(valid, k0, 0)
        mu1 = masked_tail_means(self.vals, members, k1, n1)
        mu0 = masked_tail_means(self.vals, ~members, k0, n0)
        return mu1 - mu0, valid


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, block]))


def relabel_block(pooled: PooledArrays, size: int, rng: np.random.Generator):
    """``size`` valid random relabelings preserving arm sizes, plus the redraw count."""
    base = np.zeros(pooled.arm1.size, dtype=bool)
    base[: pooled.n1] = True
    out = np.empty(size)
    todo = np.arange(size)
    redraws = 0
    while todo.size:
        members = rng.permuted(np.broadcast_to(base, (todo.size, base.size)), axis=1)
        diffs, valid = pooled.diffs(members)
        out[todo[valid]] = diffs[valid]
        redraws += int((~valid).sum())
        todo = todo[~valid]
        if redraws > 1000 * size:
            raise RuntimeError("relabelings keep exhausting an arm; check the trim fraction")
    return out, redraws


def _run_block(args):
    pooled, seed, b, size = args
    return relabel_block(pooled, size, _block_rng(seed, b))


def permutation_test(
    d: TrialDataset,
    spec: TrimSpec = TrimSpec(),
    B: int = 1000,
    gamma: float = 0.05,
    seed: int = 0,
    workers: int = 1,
) -> PermutationResult:
    """Permutation test and CI for the trimmed-means difference.

    Arm labels are reshuffled (outcomes and missingness stay with the
    subject) and the statistic is recomputed with alpha re-resolved per
    relabeling. Under a fixed alpha, a relabeling whose missing fraction
    exceeds it is trimmed at that fraction instead.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    est = estimate(d, spec)
    y, arm, _ = d.arrays()
    pooled = PooledArrays.build(y, arm, d.direction, spec.alpha, subject_ranks(d))

    jobs = [(pooled, seed, b, min(BLOCK, B - b * BLOCK)) for b in range(math.ceil(B / BLOCK))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    perm = np.concatenate([p[0] for p in parts])
    redraws = sum(p[1] for p in parts)
    if redraws:
        log.info("permutation test: %d relabelings redrawn (arm exhausted)", redraws)

    # compare against the kernel's own value of the statistic so the identity
    # relabeling ties exactly
    obs_k = float(pooled.diffs(pooled.arm1[None, :])[0][0])
    tol = 1e-12 * max(1.0, abs(obs_k))
    if d.direction is Direction.WORSE_IS_LOW:
        n_extreme = int((perm >= obs_k - tol).sum())
    else:
        n_extreme = int((perm <= obs_k + tol).sum())
    n_abs = int((np.abs(perm) >= abs(obs_k) - tol).sum())

    return PermutationResult(
        observed_diff=est.diff,
        perm_diffs=perm,
        p_one_sided=(1 + n_extreme) / (B + 1),
        p_two_sided=(1 + n_abs) / (B + 1),
        ci_low=est.diff + percentile(perm, gamma / 2),
        ci_high=est.diff + percentile(perm, 1 - gamma / 2),
        gamma=gamma,
        B=B,
        seed=seed,
        alpha_used=est.alpha_used,
        redraws=redraws,
        direction=d.direction,
    )


@dataclass(frozen=True)
class ArmArrays:
    """One arm's outcomes sorted worst-first (missing first, zero-filled)."""

    vals: np.ndarray
    n_miss: int

    @classmethod
    def build(cls, y, direction: Direction, tiebreak=None):
        order = worst_first(y, direction, tiebreak)
        ys = y[order]
        miss = np.isnan(ys)
        return cls(np.where(miss, 0.0, ys), int(miss.sum()))

    @property
    def n(self) -> int:
        return self.vals.size


def bootstrap_diffs(a1: ArmArrays, a0: ArmArrays, B_boot: int, rng, fixed_alpha=None):
    """Within-arm subject bootstrap of the trimmed difference.

    Resamples that would be trimmed empty are redrawn; returns
    ``(diffs, redraws)``.
    """
    out = np.empty(B_boot)
    todo = np.arange(B_boot)
    redraws = 0
    while todo.size:
        r = todo.size
        i1 = np.sort(rng.integers(0, a1.n, (r, a1.n)), axis=1)
        i0 = np.sort(rng.integers(0, a0.n, (r, a0.n)), axis=1)
        # sorted source + sorted indices = worst-first resample
        m1 = (i1 < a1.n_miss).sum(axis=1)
        m0 = (i0 < a0.n_miss).sum(axis=1)
        alpha = resolved_alpha_rows(m1, a1.n, m0, a0.n, fixed_alpha)
        k1, k0 = trim_count(alpha, a1.n), trim_count(alpha, a0.n)
        valid = (k1 < a1.n) & (k0 < a0.n)
        k1, k0 = np.where(valid, k1, 0), np.where(valid, k0, 0)
        diffs = tail_means(a1.vals[i1], k1) - tail_means(a0.vals[i0], k0)
        out[todo[valid]] = diffs[valid]
        redraws += int((~valid).sum())
        todo = todo[~valid]
        if redraws > 1000 * B_boot:
            raise RuntimeError("bootstrap resamples keep exhausting an arm")
    return out, redraws


def bootstrap_se(d: TrialDataset, spec: TrimSpec = TrimSpec(), B_boot: int = 500, seed: int = 0) -> float:
    if B_boot < 2:
        raise ValueError("B_boot must be >= 2")
    estimate(d, spec)  # surfaces alpha / exhaustion errors on the data itself
    ranks = subject_ranks(d)
    y, arm, _ = d.arrays()
    a1 = ArmArrays.build(y[arm == 1], d.direction, ranks[arm == 1])
    a0 = ArmArrays.build(y[arm == 0], d.direction, ranks[arm == 0])
    diffs, redraws = bootstrap_diffs(a1, a0, B_boot, np.random.default_rng(seed), spec.alpha)
    if redraws:
        log.info("bootstrap: %d resamples redrawn (arm exhausted)", redraws)
    return float(np.std(diffs, ddof=1))
