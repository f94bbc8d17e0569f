"""Two-arm trial data with reason-coded missing outcomes.

A :class:`TrialDataset` is the unit of every analysis in the package. Missing
outcomes are stored as ``None`` together with a :class:`MissReason`; no
numeric sentinel is ever substituted for them.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class TrialDataError(ValueError):
    """Invalid trial data (bad row, broken invariant, unreadable file)."""


class MissReason(enum.Enum):
    OBSERVED = "observed"
    MAR_LIKE = "mar"
    MNAR_LIKE = "mnar"

    @classmethod
    def parse(cls, text: str) -> "MissReason":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise TrialDataError(
                f"unknown reason {text!r}; expected one of observed, mar, mnar"
            ) from None


class Direction(enum.Enum):
    """Which tail of the outcome distribution is the poor one."""

    WORSE_IS_LOW = "worse-low"
    WORSE_IS_HIGH = "worse-high"

    @property
    def sign(self) -> float:
        # multiplying by sign makes "ascending" mean "worst first"
        return 1.0 if self is Direction.WORSE_IS_LOW else -1.0

    @classmethod
    def parse(cls, text: str | "Direction") -> "Direction":
        if isinstance(text, Direction):
            return text
        key = text.strip().lower().replace("_", "-")
        aliases = {"worse-is-low": "worse-low", "worse-is-high": "worse-high"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise TrialDataError(
                f"unknown direction {text!r}; expected worse-low or worse-high"
            ) from None


@dataclass(frozen=True)
class TrialRecord:
    subject_id: str
    arm: int
    outcome: float | None
    reason: MissReason
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        if self.arm not in (0, 1):
            raise TrialDataError(f"{self.subject_id}: arm must be 0 or 1, got {self.arm!r}")
        observed = self.reason is MissReason.OBSERVED
        if observed and self.outcome is None:
            raise TrialDataError(f"{self.subject_id}: reason observed but outcome missing")
        if not observed and self.outcome is not None:
            raise TrialDataError(
                f"{self.subject_id}: outcome present but reason is {self.reason.value}"
            )
        if self.outcome is not None and not math.isfinite(self.outcome):
            raise TrialDataError(f"{self.subject_id}: outcome must be finite")
        if any(not math.isfinite(c) for c in self.covariates):
            raise TrialDataError(f"{self.subject_id}: covariates must be finite and present")

    @property
    def is_missing(self) -> bool:
        return self.outcome is None


@dataclass(frozen=True)
class TrialDataset:
    records: tuple[TrialRecord, ...]
    direction: Direction

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        ids = [r.subject_id for r in self.records]
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise TrialDataError(f"duplicate subject_id {dup!r}")
        arms = {r.arm for r in self.records}
        if arms != {0, 1}:
            raise TrialDataError("both arms must contain at least one record")
        if len({len(r.covariates) for r in self.records}) > 1:
            raise TrialDataError("records have differing covariate counts")

    def __len__(self):
        return len(self.records)

    @property
    def n_covariates(self) -> int:
        return len(self.records[0].covariates)

    def arm_records(self, arm: int) -> list[TrialRecord]:
        return [r for r in self.records if r.arm == arm]

    def arrays(self):
        """Return ``(y, arm, reason_codes)`` as numpy arrays; y is NaN where missing."""
        y = np.array([np.nan if r.outcome is None else r.outcome for r in self.records])
        arm = np.array([r.arm for r in self.records], dtype=np.int8)
        codes = np.array([_REASON_CODE[r.reason] for r in self.records], dtype=np.int8)
        return y, arm, codes

    def covariate_matrix(self) -> np.ndarray:
        return np.array([r.covariates for r in self.records], dtype=float).reshape(
            len(self.records), self.n_covariates
        )

    def with_outcomes(self, updates: dict[int, float]) -> "TrialDataset":
        """Copy with record ``i`` given outcome ``updates[i]`` and marked observed."""
        recs = list(self.records)
        for i, value in updates.items():
            r = recs[i]
            recs[i] = TrialRecord(r.subject_id, r.arm, float(value), MissReason.OBSERVED, r.covariates)
        return TrialDataset(tuple(recs), self.direction)


# integer reason codes used by the array kernels
OBSERVED, MAR, MNAR = 0, 1, 2
_REASON_CODE = {MissReason.OBSERVED: OBSERVED, MissReason.MAR_LIKE: MAR, MissReason.MNAR_LIKE: MNAR}
_CODE_REASON = {v: k for k, v in _REASON_CODE.items()}


def from_arrays(
    y: Sequence[float],
    arm: Sequence[int],
    reasons: Sequence[int] | None = None,
    direction: Direction | str = Direction.WORSE_IS_LOW,
    subject_ids: Iterable[str] | None = None,
    covariates: np.ndarray | None = None,
) -> TrialDataset:
    """Build a dataset from parallel arrays (NaN outcome = missing).

    ``reasons`` holds integer codes (0 observed, 1 mar, 2 mnar). When omitted,
    missing outcomes are coded mnar.
    """
    y = np.asarray(y, dtype=float)
    arm = np.asarray(arm)
    n = len(y)
    if reasons is None:
        reasons = np.where(np.isnan(y), MNAR, OBSERVED)
    if subject_ids is None:
        width = len(str(n))
        subject_ids = [f"s{i:0{width}d}" for i in range(n)]
    ids = list(subject_ids)
    recs = []
    for i in range(n):
        cov = () if covariates is None else tuple(float(c) for c in covariates[i])
        out = None if np.isnan(y[i]) else float(y[i])
        recs.append(TrialRecord(ids[i], int(arm[i]), out, _CODE_REASON[int(reasons[i])], cov))
    return TrialDataset(tuple(recs), Direction.parse(direction))


HEADER = ["subject_id", "arm", "outcome", "reason"]


def load_csv(path: str | Path, direction: Direction | str) -> TrialDataset:
    """Read and validate a trial CSV.

    Every row-level problem is reported with its 1-based line number
    (the header is line 1).
    """
    direction = Direction.parse(direction)
    path = Path(path)
    if not path.exists():
        raise TrialDataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TrialDataError(f"{path}: empty file") from None
        if [h.lower() for h in header[:4]] != HEADER:
            raise TrialDataError(
                f"{path}: header must start with {','.join(HEADER)}, got {','.join(header)}"
            )
        n_cov = len(header) - 4
        records = []
        seen: set[str] = set()
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            records.append(_parse_row(row, n_cov, line_no, seen))
    try:
        return TrialDataset(tuple(records), direction)
    except TrialDataError as exc:
        raise TrialDataError(f"{path}: {exc}") from None


def _parse_row(row: list[str], n_cov: int, line_no: int, seen: set[str]) -> TrialRecord:
    def fail(msg):
        return TrialDataError(f"row {line_no}: {msg}")

    if len(row) != 4 + n_cov:
        raise fail(f"expected {4 + n_cov} fields, got {len(row)}")
    sid, arm_s, out_s, reason_s = (c.strip() for c in row[:4])
    if not sid:
        raise fail("empty subject_id")
    if sid in seen:
        raise fail(f"duplicate subject_id {sid!r}")
    seen.add(sid)
    if arm_s not in ("0", "1"):
        raise fail(f"arm must be 0 or 1, got {arm_s!r}")
    try:
        reason = MissReason.parse(reason_s)
    except TrialDataError as exc:
        raise fail(str(exc)) from None
    outcome = None
    if out_s:
        try:
            outcome = float(out_s)
        except ValueError:
            raise fail(f"outcome {out_s!r} is not a number") from None
    if reason is MissReason.OBSERVED and outcome is None:
        raise fail("reason observed but outcome is empty")
    if reason is not MissReason.OBSERVED and outcome is not None:
        raise fail(f"outcome present with reason {reason.value}")
    covs = []
    for j, c in enumerate(row[4:], start=1):
        c = c.strip()
        if not c:
            raise fail(f"covariate {j} is missing (covariates must be fully observed)")
        try:
            covs.append(float(c))
        except ValueError:
            raise fail(f"covariate {j} value {c!r} is not a number") from None
    try:
        return TrialRecord(sid, int(arm_s), outcome, reason, tuple(covs))
    except TrialDataError as exc:
        raise fail(str(exc)) from None


def write_csv(d: TrialDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER + [f"cov{j}" for j in range(1, d.n_covariates + 1)])
        for r in d.records:
            out = "" if r.outcome is None else repr(r.outcome)
            w.writerow([r.subject_id, r.arm, out, r.reason.value, *map(repr, r.covariates)])


@dataclass(frozen=True)
class ArmCounts:
    n: int
    n_missing: int
    n_mar: int
    n_mnar: int

    @property
    def missing_fraction(self) -> float:
        return self.n_missing / self.n


@dataclass(frozen=True)
class ArmSummary:
    arm1: ArmCounts
    arm0: ArmCounts
    proportions: tuple[float, float] = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "proportions", (self.arm1.missing_fraction, self.arm0.missing_fraction)
        )

    def __getitem__(self, arm: int) -> ArmCounts:
        return self.arm1 if arm == 1 else self.arm0


def arm_summary(d: TrialDataset) -> ArmSummary:
    counts = {}
    for a in (1, 0):
        recs = d.arm_records(a)
        n_mar = sum(r.reason is MissReason.MAR_LIKE for r in recs)
        n_mnar = sum(r.reason is MissReason.MNAR_LIKE for r in recs)
        counts[a] = ArmCounts(len(recs), n_mar + n_mnar, n_mar, n_mnar)
    return ArmSummary(counts[1], counts[0])
