"""Multiple imputation under a Bayesian normal linear model, Rubin's rules,
the trim + impute combination, and the complete-case comparator."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .perm import ArmArrays, bootstrap_diffs, subject_ranks
from .trial import MAR, Direction, TrialDataset
from .trim import TrimError, TrimSpec, resolved_alpha_rows, tail_means, trim_count


class ImputationError(ValueError):
    pass


class Analysis(enum.Enum):
    MEAN_DIFF = "mean_diff"  # impute every missing outcome, compare arm means
    TRIMMED = "trimmed"  # impute mar, trim mnar


@dataclass(frozen=True)
class ImputationConfig:
    m: int = 20
    seed: int = 0
    include_covariates: bool = True
    B_boot: int = 500
    gamma: float = 0.05

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")


@dataclass
class PooledEstimate:
    mean: float
    within_var: float
    between_var: float
    total_var: float
    se: float
    per_imputation: list[tuple[float, float]]
    ci_low: float
    ci_high: float
    p_value: float
    mean_arm1: float = math.nan
    mean_arm0: float = math.nan
    alpha_used: float | None = None
    imputed_indices: tuple[int, ...] = field(default=(), repr=False)

    @property
    def m(self) -> int:
        return len(self.per_imputation)


def rubin_pool(estimates, ses, gamma: float = 0.05) -> PooledEstimate:
    """Combine per-imputation estimates and standard errors by Rubin's rules.

    Intervals and p-values use the standard normal reference.
    """
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(ses, dtype=float) ** 2
    m = q.size
    if m < 2:
        raise ValueError("Rubin pooling needs at least two imputations")
    mean = math.fsum(q) / m
    within = math.fsum(u) / m
    between = math.fsum((q - mean) ** 2) / (m - 1)
    total = within + (1 + 1 / m) * between
    se = math.sqrt(total)
    z = stats.norm.ppf(1 - gamma / 2)
    if se > 0:
        p = float(2 * stats.norm.sf(abs(mean) / se))
    else:
        p = 1.0 if mean == 0 else 0.0
    return PooledEstimate(
        mean=mean,
        within_var=within,
        between_var=between,
        total_var=total,
        se=se,
        per_imputation=list(zip(q.tolist(), np.sqrt(u).tolist())),
        ci_low=mean - z * se,
        ci_high=mean + z * se,
        p_value=p,
    )


def design_matrix(arm, covariates=None) -> tuple[np.ndarray, list[str]]:
    arm = np.asarray(arm, dtype=float)
    cols = [np.ones_like(arm), arm]
    names = ["intercept", "arm"]
    if covariates is not None and covariates.shape[1]:
        for j in range(covariates.shape[1]):
            cols.append(covariates[:, j])
            names.append(f"cov{j + 1}")
    return np.column_stack(cols), names


def _check_rank(X: np.ndarray, names: list[str]):
    n, p = X.shape
    if n <= p:
        raise ImputationError(f"only {n} observed outcomes for {p} imputation-model parameters")
    rank = 0
    for j in range(p):
        r = np.linalg.matrix_rank(X[:, : j + 1])
        if r == rank:
            raise ImputationError(
                f"imputation design is rank deficient: column {names[j]!r} is collinear "
                f"with {', '.join(repr(c) for c in names[:j])}"
            )
        rank = r


def impute_arrays(y, X, targets, rng, names=None) -> np.ndarray:
    """One posterior-predictive draw for ``y[targets]`` from a normal linear model.

    Fits least squares on the observed rows, draws ``sigma^2`` from its
    scaled inverse chi-square posterior and the coefficients from their
    conditional normal, then draws each target around its predicted value.
    """
    y = np.asarray(y, dtype=float)
    targets = np.asarray(targets, dtype=bool)
    out = y.copy()
    if not targets.any():
        return out
    obs = ~np.isnan(y)
    if (targets & obs).any():
        raise ImputationError("imputation targets must be missing records")
    Xo, yo = X[obs], y[obs]
    _check_rank(Xo, names or [f"x{j}" for j in range(X.shape[1])])
    n_obs, p = Xo.shape
    xtx_inv = np.linalg.inv(Xo.T @ Xo)
    beta_hat = xtx_inv @ (Xo.T @ yo)
    resid = yo - Xo @ beta_hat
    sse = float(resid @ resid)
    sigma = math.sqrt(sse / rng.chisquare(n_obs - p))
    chol = np.linalg.cholesky(xtx_inv)
    beta = beta_hat + sigma * (chol @ rng.standard_normal(p))
    Xt = X[targets]
    out[targets] = Xt @ beta + sigma * rng.standard_normal(Xt.shape[0])
    return out


def impute_once(d: TrialDataset, targets, rng, include_covariates: bool = True) -> np.ndarray:
    """Return the outcome vector with ``targets`` (record indices) imputed.

    Missing records outside ``targets`` stay NaN.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    y, arm, _ = d.arrays()
    mask = np.zeros(len(y), dtype=bool)
    mask[list(targets)] = True
    covs = d.covariate_matrix() if include_covariates else None
    X, names = design_matrix(arm, covs)
    return impute_arrays(y, X, mask, rng, names)


def _mean_diff_se(y, arm):
    y1, y0 = y[arm == 1], y[arm == 0]
    n1, n0 = y1.size, y0.size
    mu1, mu0 = y1.mean(), y0.mean()
    ss = ((y1 - mu1) ** 2).sum() + ((y0 - mu0) ** 2).sum()
    sp2 = ss / (n1 + n0 - 2)
    return mu1, mu0, math.sqrt(sp2 * (1 / n1 + 1 / n0))


def _trimmed_with_se(y, arm, direction, fixed_alpha, B_boot, rng, tiebreak=None):
    """Kernel-path trimmed estimate plus bootstrap SE for one completed dataset."""
    t1 = None if tiebreak is None else tiebreak[arm == 1]
    t0 = None if tiebreak is None else tiebreak[arm == 0]
    a1 = ArmArrays.build(y[arm == 1], direction, t1)
    a0 = ArmArrays.build(y[arm == 0], direction, t0)
    alpha = float(resolved_alpha_rows(a1.n_miss, a1.n, a0.n_miss, a0.n, None))
    if fixed_alpha is not None:
        if fixed_alpha < alpha - 1e-12:
            raise TrimError(
                f"alpha below missing fraction: fixed alpha {fixed_alpha:g} < {alpha:.4f}"
            )
        alpha = fixed_alpha
    k1, k0 = trim_count(alpha, a1.n), trim_count(alpha, a0.n)
    if k1 >= a1.n or k0 >= a0.n:
        raise TrimError("trim exhausts arm")
    mu1 = float(tail_means(a1.vals[None, :], np.array([k1]))[0])
    mu0 = float(tail_means(a0.vals[None, :], np.array([k0]))[0])
    se = math.nan
    if B_boot:
        diffs, _ = bootstrap_diffs(a1, a0, B_boot, rng, fixed_alpha)
        se = float(np.std(diffs, ddof=1))
    return mu1, mu0, se, alpha


def mi_analyze_arrays(
    y,
    arm,
    codes,
    direction: Direction,
    analysis: Analysis,
    m: int,
    seed,
    X=None,
    names=None,
    B_boot: int = 500,
    gamma: float = 0.05,
    fixed_alpha: float | None = None,
    tiebreak=None,
) -> PooledEstimate:
    """Array-level core of :func:`mi_analyze` (also driven by the simulation lab).

    ``seed`` is anything ``np.random.SeedSequence`` accepts; imputation l
    draws from the child stream ``[*seed, l]``.
    """
    y = np.asarray(y, dtype=float)
    arm = np.asarray(arm)
    codes = np.asarray(codes)
    if analysis is Analysis.MEAN_DIFF:
        targets = np.isnan(y)
    else:
        targets = codes == MAR
    if X is None:
        X, names = design_matrix(arm)
    base = list(seed) if isinstance(seed, (list, tuple)) else [seed]

    n_imp = m if targets.any() else 1  # nothing to impute: every copy is identical
    rows = []
    for ell in range(n_imp):
        ss_imp, ss_boot = np.random.SeedSequence(base + [ell]).spawn(2)
        yc = impute_arrays(y, X, targets, np.random.default_rng(ss_imp), names)
        if analysis is Analysis.MEAN_DIFF:
            mu1, mu0, se = _mean_diff_se(yc, arm)
            alpha = None
        else:
            mu1, mu0, se, alpha = _trimmed_with_se(
                yc, arm, direction, fixed_alpha, B_boot, np.random.default_rng(ss_boot), tiebreak
            )
        rows.append((mu1, mu0, se, alpha))
    rows = rows * (m // n_imp)

    est = [r[0] - r[1] for r in rows]
    pooled = rubin_pool(est, [r[2] for r in rows], gamma)
    pooled.mean_arm1 = math.fsum(r[0] for r in rows) / m
    pooled.mean_arm0 = math.fsum(r[1] for r in rows) / m
    pooled.alpha_used = rows[0][3]
    pooled.imputed_indices = tuple(np.flatnonzero(targets).tolist())
    return pooled


def mi_analyze(
    d: TrialDataset,
    cfg: ImputationConfig = ImputationConfig(),
    analysis: Analysis = Analysis.MEAN_DIFF,
    trim_spec: TrimSpec = TrimSpec(),
) -> PooledEstimate:
    """Multiply impute and pool.

    ``MEAN_DIFF`` imputes every missing outcome and compares arm means with
    the pooled-variance two-sample SE. ``TRIMMED`` imputes only mar-coded
    records, leaves mnar-coded ones to be trimmed (alpha resolved against
    what is still missing) and takes the SE from the within-arm bootstrap.
    """
    y, arm, codes = d.arrays()
    covs = d.covariate_matrix() if cfg.include_covariates else None
    X, names = design_matrix(arm, covs)
    return mi_analyze_arrays(
        y,
        arm,
        codes,
        d.direction,
        analysis,
        cfg.m,
        cfg.seed,
        X=X,
        names=names,
        B_boot=cfg.B_boot,
        gamma=cfg.gamma,
        fixed_alpha=trim_spec.alpha,
        tiebreak=subject_ranks(d),
    )


@dataclass(frozen=True)
class CompleteCaseResult:
    diff: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    df: float
    mean_arm1: float
    mean_arm0: float


def complete_case_arrays(y, arm, gamma: float = 0.05) -> CompleteCaseResult:
    y = np.asarray(y, dtype=float)
    arm = np.asarray(arm)
    y1 = y[(arm == 1) & ~np.isnan(y)]
    y0 = y[(arm == 0) & ~np.isnan(y)]
    for a, ya in ((1, y1), (0, y0)):
        if ya.size < 2:
            raise ValueError(f"complete case needs >= 2 observed outcomes in arm {a}, got {ya.size}")
    v1, v0 = y1.var(ddof=1) / y1.size, y0.var(ddof=1) / y0.size
    se = math.sqrt(v1 + v0)
    diff = float(y1.mean() - y0.mean())
    if se > 0:
        df = (v1 + v0) ** 2 / (v1**2 / (y1.size - 1) + v0**2 / (y0.size - 1))
        t = stats.t.ppf(1 - gamma / 2, df)
        p = float(2 * stats.t.sf(abs(diff) / se, df))
    else:
        df = float(y1.size + y0.size - 2)
        t = 0.0
        p = 1.0 if diff == 0 else 0.0
    return CompleteCaseResult(diff, se, diff - t * se, diff + t * se, p, df, float(y1.mean()), float(y0.mean()))


def complete_case(d: TrialDataset, gamma: float = 0.05) -> CompleteCaseResult:
    """Observed-only difference in arm means with Welch inference."""
    y, arm, _ = d.arrays()
    return complete_case_arrays(y, arm, gamma)
