"""Trimmed-means estimation of treatment effects under informative dropout."""

from .diagnostics import (
    KsResult,
    NormalLocationPair,
    ks_location_shift_test,
    normal_trimmed_mean,
    smnar_fraction,
    theorem2_profile,
)
from .mi import (
    Analysis,
    ImputationConfig,
    PooledEstimate,
    complete_case,
    impute_once,
    mi_analyze,
    rubin_pool,
)
from .perm import PermutationResult, bootstrap_se, percentile, permutation_test
from .trial import (
    Direction,
    MissReason,
    TrialDataError,
    TrialDataset,
    TrialRecord,
    arm_summary,
    load_csv,
    write_csv,
)
from .trim import (
    TrimError,
    TrimmedEstimate,
    TrimSpec,
    composite_order_key,
    estimate,
    resolve_alpha,
    trimmed_mean,
)

__version__ = "0.1.0"
