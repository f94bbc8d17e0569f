"""Simulated two-arm trials with logit-model (or staged mixture) dropout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..trial import MAR, MNAR, OBSERVED, Direction, TrialDataset, from_arrays
from .scenarios import Mechanism, ScenarioSpec

# generated trials: lower outcome = better, so the upper tail is trimmed
SIM_DIRECTION = Direction.WORSE_IS_HIGH

# deletion-mechanism labels kept in the hidden truth
KEPT, DEL_MCAR, DEL_MAR, DEL_MNAR = 0, 1, 2, 3


@dataclass(frozen=True)
class Replication:
    y_true: np.ndarray
    arm: np.ndarray
    deleted_by: np.ndarray  # KEPT / DEL_* per subject
    codes: np.ndarray  # reason codes as seen by the analyst

    @property
    def y(self) -> np.ndarray:
        return np.where(self.deleted_by == KEPT, self.y_true, np.nan)

    @property
    def missing(self) -> np.ndarray:
        return self.deleted_by != KEPT

    def dataset(self) -> TrialDataset:
        return from_arrays(self.y, self.arm, self.codes, SIM_DIRECTION)


def replication_seed(spec: ScenarioSpec, rep_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([spec.master_seed, spec.stream_id, rep_index])


def _staged_delete(u, arm, alive, rates, n):
    """Delete survivors so that, in expectation, ``rate * n`` more go per arm."""
    out = np.zeros_like(alive)
    for a, rate in ((1, rates[0]), (0, rates[1])):
        pool = alive & (arm == a)
        left = pool.sum()
        if rate <= 0 or left == 0:
            continue
        p = min(1.0, rate * n / left)
        out |= pool & (u < p)
    return out


def simulate_arrays(spec: ScenarioSpec, rng: np.random.Generator) -> Replication:
    n = spec.n_per_arm
    arm = np.repeat(np.array([1, 0], dtype=np.int8), n)
    y = spec.beta0 + spec.betaA * arm + spec.sigma * rng.standard_normal(2 * n)
    p_obs = expit(spec.a0 + spec.aA * arm + spec.aY * y)
    logit_del = rng.random(2 * n) >= p_obs

    deleted_by = np.full(2 * n, KEPT, dtype=np.int8)
    if spec.mechanism is Mechanism.MIXTURE:
        r1, r0 = spec.mixture_rates
        deleted_by[logit_del] = DEL_MNAR
        u_mar, u_mcar = rng.random(2 * n), rng.random(2 * n)
        mar = _staged_delete(u_mar, arm, deleted_by == KEPT, (r1.mar, r0.mar), n)
        deleted_by[mar] = DEL_MAR
        mcar = _staged_delete(u_mcar, arm, deleted_by == KEPT, (r1.mcar, r0.mcar), n)
        deleted_by[mcar] = DEL_MCAR
    else:
        label = {Mechanism.MCAR: DEL_MCAR, Mechanism.MAR: DEL_MAR, Mechanism.MNAR: DEL_MNAR}
        deleted_by[logit_del] = label[spec.mechanism]

    codes = np.full(2 * n, OBSERVED, dtype=np.int8)
    codes[(deleted_by == DEL_MCAR) | (deleted_by == DEL_MAR)] = MAR
    codes[deleted_by == DEL_MNAR] = MNAR
    return Replication(y, arm, deleted_by, codes)


def generate_replication(spec: ScenarioSpec, rep_index: int) -> tuple[TrialDataset, Replication]:
    """Replication ``rep_index`` of a scenario as (analyst's dataset, hidden truth)."""
    rep = simulate_arrays(spec, np.random.default_rng(replication_seed(spec, rep_index)))
    return rep.dataset(), rep
