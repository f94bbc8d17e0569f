"""Analysis reports: run the requested methods on one dataset, render text and JSON."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .diagnostics import KsResult, ks_location_shift_test
from .mi import Analysis, ImputationConfig, complete_case, mi_analyze
from .perm import bootstrap_se, permutation_test
from .trial import TrialDataset, arm_summary
from .trim import TrimSpec, estimate

METHODS = ("trimmed", "trimmed+mi", "mi", "complete-case")


class MethodError(RuntimeError):
    def __init__(self, method: str, exc: Exception):
        super().__init__(f"{method}: {exc}")
        self.method = method


@dataclass(frozen=True)
class Settings:
    methods: tuple[str, ...] = METHODS
    alpha: TrimSpec = TrimSpec()
    m: int = 20
    B: int = 1000
    B_boot: int = 500
    gamma: float = 0.05
    seed: int = 12345
    workers: int = 1
    shift: float | None = None  # None: shift by the trimmed estimate

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "alpha_policy": str(self.alpha),
            "B": self.B,
            "B_boot": self.B_boot,
            "m": self.m,
            "gamma": self.gamma,
            "methods": list(self.methods),
        }


@dataclass
class MethodRow:
    method: str
    diff: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    alpha: float | None
    notes: list[str] = field(default_factory=list)


@dataclass
class AnalysisReport:
    rows: list[MethodRow]
    dataset: dict
    diagnostics: dict
    manifest: dict

    def to_dict(self) -> dict:
        return {
            "methods": [asdict(r) for r in self.rows],
            "dataset": self.dataset,
            "diagnostics": self.diagnostics,
            "manifest": self.manifest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def row(self, method: str) -> MethodRow:
        return next(r for r in self.rows if r.method == method)

    def to_text(self) -> str:
        lines = []
        ds = self.dataset
        lines.append(f"direction: {ds['direction']}")
        for a in ("arm1", "arm0"):
            c = ds[a]
            lines.append(
                f"{a}: n={c['n']} missing={c['n_missing']} (mar={c['n_mar']}, mnar={c['n_mnar']}) "
                f"fraction={fmt(c['missing_fraction'])}"
            )
        lines.append("")
        head = ["method", "diff", "se", "ci_low", "ci_high", "p_value", "alpha"]
        table = [head] + [
            [r.method, *(fmt(getattr(r, h)) for h in head[1:])] for r in self.rows
        ]
        widths = [max(len(row[i]) for row in table) for i in range(len(head))]
        for row in table:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        for r in self.rows:
            for note in r.notes:
                lines.append(f"note ({r.method}): {note}")
        ks = self.diagnostics.get("ks")
        if ks:
            lines.append("")
            lines.append(
                f"KS location-shift check: D={fmt(ks['d_stat'])} p={fmt(ks['p_value'])} "
                f"shift={fmt(ks['shift_applied'])} n1={ks['n1']} n0={ks['n0']}"
            )
        lines.append("")
        lines.append("settings: " + " ".join(f"{k}={v}" for k, v in self.manifest.items()))
        return "\n".join(lines) + "\n"


def fmt(v) -> str:
    """Number formatting shared by the text table (JSON keeps full precision)."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(v)
    return f"{v:.6g}"


def method_seed(seed: int, method: str) -> int:
    ss = np.random.SeedSequence([seed, zlib.crc32(method.encode())])
    return int(ss.generate_state(1, np.uint32)[0])


def dataset_summary(d: TrialDataset) -> dict:
    s = arm_summary(d)
    out = {"direction": d.direction.value, "n": len(d)}
    for a in (1, 0):
        c = s[a]
        out[f"arm{a}"] = {
            "n": c.n,
            "n_missing": c.n_missing,
            "n_mar": c.n_mar,
            "n_mnar": c.n_mnar,
            "missing_fraction": c.missing_fraction,
        }
    return out


def _run_method(d: TrialDataset, method: str, st: Settings) -> MethodRow:
    seed = method_seed(st.seed, method)
    if method == "trimmed":
        pr = permutation_test(d, st.alpha, st.B, st.gamma, seed, st.workers)
        se = bootstrap_se(d, st.alpha, st.B_boot, seed + 1)
        row = MethodRow(method, pr.observed_diff, se, pr.ci_low, pr.ci_high, pr.p_two_sided, pr.alpha_used)
        if pr.redraws:
            row.notes.append(f"{pr.redraws} relabelings redrawn (arm exhausted)")
        return row
    if method in ("trimmed+mi", "mi"):
        analysis = Analysis.TRIMMED if method == "trimmed+mi" else Analysis.MEAN_DIFF
        cfg = ImputationConfig(m=st.m, seed=seed, B_boot=st.B_boot, gamma=st.gamma)
        pe = mi_analyze(d, cfg, analysis, st.alpha)
        row = MethodRow(method, pe.mean, pe.se, pe.ci_low, pe.ci_high, pe.p_value, pe.alpha_used)
        if not pe.imputed_indices:
            row.notes.append("zero imputation targets; no imputation performed")
        if analysis is Analysis.TRIMMED:
            row.notes.append("assumes mnar dropouts precede mar dropouts (not checkable here)")
        return row
    if method == "complete-case":
        cc = complete_case(d, st.gamma)
        return MethodRow(method, cc.diff, cc.se, cc.ci_low, cc.ci_high, cc.p_value, 0.0)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def analyze(d: TrialDataset, st: Settings = Settings()) -> AnalysisReport:
    rows = []
    for method in st.methods:
        try:
            rows.append(_run_method(d, method, st))
        except Exception as exc:  # surfaced with the method name
            raise MethodError(method, exc) from exc
    if st.shift is not None:
        shift = st.shift
    else:
        trimmed = next((r for r in rows if r.method == "trimmed"), None)
        shift = trimmed.diff if trimmed else estimate(d, st.alpha).diff
    ks: KsResult = ks_location_shift_test(d, shift)
    return AnalysisReport(
        rows=rows,
        dataset=dataset_summary(d),
        diagnostics={"ks": asdict(ks)},
        manifest=st.manifest(),
    )


def diagnose(d: TrialDataset, shift: float) -> dict:
    """KS location-shift check plus observed-outcome summaries per arm."""
    ks = ks_location_shift_test(d, shift)
    y, arm, _ = d.arrays()
    arms = {}
    for a in (1, 0):
        ya = y[(arm == a) & ~np.isnan(y)]
        arms[f"arm{a}"] = {
            "n_observed": int(ya.size),
            "mean": float(ya.mean()) if ya.size else math.nan,
            "sd": float(ya.std(ddof=1)) if ya.size > 1 else math.nan,
            "min": float(ya.min()) if ya.size else math.nan,
            "median": float(np.median(ya)) if ya.size else math.nan,
            "max": float(ya.max()) if ya.size else math.nan,
        }
    return {"ks": asdict(ks), "observed": arms}


def diagnose_text(res: dict) -> str:
    ks = res["ks"]
    lines = [
        f"KS location-shift check: D={fmt(ks['d_stat'])} p={fmt(ks['p_value'])} "
        f"shift={fmt(ks['shift_applied'])} n1={ks['n1']} n0={ks['n0']}"
    ]
    for a, s in res["observed"].items():
        lines.append(
            f"{a}: n_observed={s['n_observed']} mean={fmt(s['mean'])} sd={fmt(s['sd'])} "
            f"min={fmt(s['min'])} median={fmt(s['median'])} max={fmt(s['max'])}"
        )
    return "\n".join(lines) + "\n"
