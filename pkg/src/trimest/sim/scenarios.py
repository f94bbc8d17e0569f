"""Scenario specifications, the reference scenario suite, and the JSON batch format."""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from scipy import stats

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    pass


class Mechanism(enum.Enum):
    MCAR = "mcar"
    MAR = "mar"
    MNAR = "mnar"
    MIXTURE = "mixture"


class MethodKind(enum.Enum):
    TRIMMED_ADAPTIVE = "trimmed"
    TRIMMED_FIXED = "trimmed_fixed"
    MI_GLOBAL = "mi"
    TRIM_PLUS_MI = "trimmed+mi"
    COMPLETE_CASE = "complete_case"


@dataclass(frozen=True)
class Method:
    kind: MethodKind
    alpha: float | None = None

    @classmethod
    def parse(cls, text: str) -> "Method":
        text = text.strip().lower()
        if text.startswith("trimmed_fixed:"):
            return cls(MethodKind.TRIMMED_FIXED, float(text.split(":", 1)[1]))
        try:
            return cls(MethodKind(text))
        except ValueError:
            raise ScenarioError(f"unknown method {text!r}") from None

    def __str__(self):
        if self.kind is MethodKind.TRIMMED_FIXED:
            return f"trimmed_fixed:{self.alpha:g}"
        return self.kind.value

    @property
    def trims(self) -> bool:
        return self.kind in (MethodKind.TRIMMED_ADAPTIVE, MethodKind.TRIMMED_FIXED)


@dataclass(frozen=True)
class ArmRates:
    """Target deletion rates for one arm of a mixture scenario (fractions of the arm)."""

    mnar: float = 0.0
    mar: float = 0.0
    mcar: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    mechanism: Mechanism
    a0: float
    aA: float = 0.0
    aY: float = 0.0
    n_per_arm: int = 50
    beta0: float = -1.0
    betaA: float = -1.0
    sigma: float = 1.5
    mixture_rates: tuple[ArmRates, ArmRates] | None = None  # (arm 1, arm 0)
    K: int = 5000
    methods: tuple[Method, ...] = (Method(MethodKind.TRIMMED_ADAPTIVE),)
    B: int = 1000  # permutations per replication; 0 = point estimates only
    gamma: float = 0.05
    master_seed: int = 2024
    m: int = 10
    B_boot: int = 200
    stream_key: str = ""
    tables: tuple[tuple[str, int], ...] = ()
    target_missing: tuple[float, float] | None = None  # reference %, arm 1 / arm 0

    def __post_init__(self):
        if self.K < 1:
            raise ScenarioError(f"{self.name}: K must be >= 1")
        if self.n_per_arm < 2:
            raise ScenarioError(f"{self.name}: n_per_arm must be >= 2")
        if self.sigma <= 0:
            raise ScenarioError(f"{self.name}: sigma must be positive")
        if self.B < 0 or self.m < 2 or self.B_boot < 2:
            raise ScenarioError(f"{self.name}: need B >= 0, m >= 2, B_boot >= 2")
        if not 0 < self.gamma < 1:
            raise ScenarioError(f"{self.name}: gamma must lie in (0, 1)")
        if self.mechanism is Mechanism.MIXTURE:
            if self.mixture_rates is None:
                raise ScenarioError(f"{self.name}: mixture scenarios need mixture_rates")
            for r in self.mixture_rates:
                for v in (r.mnar, r.mar, r.mcar):
                    if not 0 <= v <= 1:
                        raise ScenarioError(f"{self.name}: mixture rates must lie in [0, 1]")
        if self.mechanism is Mechanism.MCAR and (self.aA != 0 or self.aY != 0):
            log.warning("%s: declared MCAR but aA=%g, aY=%g", self.name, self.aA, self.aY)
        if self.mechanism is Mechanism.MAR and self.aY != 0:
            log.warning("%s: declared MAR but aY=%g", self.name, self.aY)
        if not self.stream_key:
            object.__setattr__(self, "stream_key", self.name)

    @property
    def stream_id(self) -> int:
        return zlib.crc32(self.stream_key.encode())

    def table_of(self, method: Method) -> int | None:
        return dict(self.tables).get(str(method))

    def replace(self, **kw) -> "ScenarioSpec":
        return dataclasses.replace(self, **kw)


# --------------------------------------------------------------------------
# reference parameter lists

MCAR_A0 = [(2.94, 5), (2.20, 10), (1.74, 15), (1.39, 20)]
MAR_EXP_AA = [(-8.61, 20), (-8.27, 15), (-7.80, 10), (-7.06, 5)]
MAR_REF_A0 = [(2.94, 5), (2.20, 10), (1.73, 15), (1.39, 20)]
MNAR_AY = [(-1.0, (2, 5)), (-2.5, (3, 10)), (-5.0, (5, 15)), (-10.0, (7, 20))]
MNAR_A0 = 2.85
MIX_MAR_EXP = [0.23, 0.17, 0.10, 0.03]
MIX_MCAR = 0.05
STUDY_E_AY = [
    (-0.5, (3, 4)), (-1.0, (2, 5)), (-1.5, (2, 7)), (-2.0, (3, 8)), (-2.5, (3, 10)),
    (-3.0, (3, 11)), (-4.0, (4, 14)), (-5.0, (5, 15)), (-7.5, (6, 18)), (-10.0, (7, 20)),
]  # fmt: skip

TRIM = Method(MethodKind.TRIMMED_ADAPTIVE)
MI = Method(MethodKind.MI_GLOBAL)
COMBO = Method(MethodKind.TRIM_PLUS_MI)
FIXED_HALF = Method(MethodKind.TRIMMED_FIXED, 0.5)

TABLE_GROUPS = {1: "mcar", 2: "mcar", 3: "mar", 4: "mar", 5: "mnar", 6: "mnar", 7: "mix", 8: "mix", 9: "mix", 10: "e"}


def _cells():
    """(group, spec) for every reference cell, methods and table tags included."""
    out = []
    for a0, pct in MCAR_A0:
        out.append(("mcar", ScenarioSpec(
            f"mcar_{pct}", Mechanism.MCAR, a0, methods=(TRIM, MI),
            tables=(("trimmed", 1), ("mi", 2)), target_missing=(pct, pct))))
    for aA, pct in MAR_EXP_AA:
        out.append(("mar", ScenarioSpec(
            f"mar_exp_{pct}", Mechanism.MAR, 10.0, aA=aA, methods=(TRIM, MI),
            tables=(("trimmed", 3), ("mi", 4)), target_missing=(pct, 0))))
    for a0, pct in MAR_REF_A0:
        out.append(("mar", ScenarioSpec(
            f"mar_ref_{pct}", Mechanism.MAR, a0, aA=10.0, methods=(TRIM, MI),
            tables=(("trimmed", 3), ("mi", 4)), target_missing=(0, pct))))
    for aY, (p1, p0) in MNAR_AY:
        out.append(("mnar", ScenarioSpec(
            f"mnar_{p1}_{p0}", Mechanism.MNAR, MNAR_A0, aY=aY, methods=(TRIM, MI),
            tables=(("trimmed", 5), ("mi", 6)), target_missing=(p1, p0))))
    for (aY, (p1, p0)), mar in zip(MNAR_AY, MIX_MAR_EXP):
        rates = (ArmRates(p1 / 100, mar, MIX_MCAR), ArmRates(p0 / 100, 0.0, MIX_MCAR))
        overall = (round(100 * (p1 / 100 + mar + MIX_MCAR)), round(100 * (p0 / 100 + MIX_MCAR)))
        out.append(("mix", ScenarioSpec(
            f"mix_{p1}_{p0}", Mechanism.MIXTURE, MNAR_A0, aY=aY, mixture_rates=rates,
            methods=(TRIM, MI, COMBO), tables=(("trimmed", 7), ("mi", 8), ("trimmed+mi", 9)),
            target_missing=overall)))
    for aY, pct in STUDY_E_AY:
        for method, tag in ((TRIM, "adaptive"), (FIXED_HALF, "fixed")):
            out.append(("e", ScenarioSpec(
                f"e_aY{aY:g}_{tag}", Mechanism.MNAR, MNAR_A0, aY=aY, methods=(method,), B=0,
                stream_key=f"e_aY{aY:g}", tables=((str(method), 10),), target_missing=pct)))
    return out


def paper_suite(table: int | None = None, **overrides) -> list[ScenarioSpec]:
    """All reference simulation cells, or just those feeding one table.

    With ``table`` set, each cell keeps only the method reported in that
    table. ``overrides`` (K, B, master_seed, ...) apply to every cell.
    """
    if table is not None and table not in TABLE_GROUPS:
        raise ScenarioError(f"no simulation table {table}; choose 1-10")
    specs = []
    for group, spec in _cells():
        if table is not None:
            if TABLE_GROUPS[table] != group:
                continue
            keep = tuple(m for m in spec.methods if spec.table_of(m) == table)
            if not keep:
                continue
            spec = spec.replace(methods=keep)
        specs.append(spec.replace(**overrides) if overrides else spec)
    return specs


def benchmark_power(n_per_arm: int, delta: float, sigma: float, level: float = 0.05) -> float:
    """Power of a one-sided two-sample t-test with no missing data."""
    df = 2 * n_per_arm - 2
    ncp = abs(delta) / (sigma * math.sqrt(2 / n_per_arm))
    return float(stats.nct.sf(stats.t.ppf(1 - level, df), df, ncp))


# --------------------------------------------------------------------------
# JSON batch files

_FIELDS = {f.name for f in dataclasses.fields(ScenarioSpec)}


def spec_to_dict(spec: ScenarioSpec) -> dict:
    d = {
        "name": spec.name,
        "mechanism": spec.mechanism.value,
        "a0": spec.a0,
        "aA": spec.aA,
        "aY": spec.aY,
        "n_per_arm": spec.n_per_arm,
        "beta0": spec.beta0,
        "betaA": spec.betaA,
        "sigma": spec.sigma,
        "K": spec.K,
        "methods": [str(m) for m in spec.methods],
        "B": spec.B,
        "gamma": spec.gamma,
        "master_seed": spec.master_seed,
        "m": spec.m,
        "B_boot": spec.B_boot,
        "stream_key": spec.stream_key,
    }
    if spec.mixture_rates is not None:
        d["mixture_rates"] = {
            arm: dataclasses.asdict(r) for arm, r in zip(("arm1", "arm0"), spec.mixture_rates)
        }
    if spec.tables:
        d["tables"] = dict(spec.tables)
    if spec.target_missing is not None:
        d["target_missing"] = list(spec.target_missing)
    return d


def spec_from_dict(d: dict, where: str = "scenario") -> ScenarioSpec:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(d) - _FIELDS
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    for req in ("name", "mechanism", "a0"):
        if req not in d:
            raise ScenarioError(f"{where}: missing required field '{req}'")
    kw = dict(d)
    where = f"{where} ({d['name']})"

    def num(key, kind=float):
        v = kw[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{where}: field '{key}' must be a number")
        if kind is int and int(v) != v:
            raise ScenarioError(f"{where}: field '{key}' must be an integer")
        kw[key] = kind(v)

    for key in ("a0", "aA", "aY", "beta0", "betaA", "sigma", "gamma"):
        if key in kw:
            num(key)
    for key in ("n_per_arm", "K", "B", "master_seed", "m", "B_boot"):
        if key in kw:
            num(key, int)
    try:
        kw["mechanism"] = Mechanism(str(kw["mechanism"]).lower())
    except ValueError:
        raise ScenarioError(f"{where}: field 'mechanism' must be one of mcar, mar, mnar, mixture") from None
    if "methods" in kw:
        if not isinstance(kw["methods"], list) or not kw["methods"]:
            raise ScenarioError(f"{where}: field 'methods' must be a non-empty list")
        try:
            kw["methods"] = tuple(Method.parse(m) for m in kw["methods"])
        except (ScenarioError, ValueError) as exc:
            raise ScenarioError(f"{where}: field 'methods': {exc}") from None
    if "mixture_rates" in kw:
        mr = kw["mixture_rates"]
        try:
            kw["mixture_rates"] = (ArmRates(**mr["arm1"]), ArmRates(**mr["arm0"]))
        except (TypeError, KeyError):
            raise ScenarioError(
                f"{where}: field 'mixture_rates' needs arm1/arm0 objects with mnar, mar, mcar"
            ) from None
    if "tables" in kw:
        kw["tables"] = tuple((str(k), int(v)) for k, v in kw["tables"].items())
    if "target_missing" in kw:
        kw["target_missing"] = tuple(kw["target_missing"])
    try:
        return ScenarioSpec(**kw)
    except ScenarioError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def load_batch(path: str | Path) -> list[ScenarioSpec]:
    """Read ``{"scenarios": [...]}`` (or a bare list) from a JSON file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from None
    items = raw.get("scenarios") if isinstance(raw, dict) else raw
    if not isinstance(items, list):
        raise ScenarioError(f"{path}: field 'scenarios' must be a list")
    return [spec_from_dict(item, f"scenarios[{i}]") for i, item in enumerate(items)]


def dump_batch(specs, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"scenarios": [spec_to_dict(s) for s in specs]}, indent=2))
