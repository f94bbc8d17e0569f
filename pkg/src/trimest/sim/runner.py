"""Replication engine: run every method on every replication, then summarise.

Replication i of a scenario draws from the stream ``(master_seed, stream_id,
i)`` and each method from a child of it, so results do not depend on how
replications are spread over worker processes. Per-replication results are
stored by index and reduced in index order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..diagnostics import smnar_fraction, trim_thresholds
from ..mi import Analysis, complete_case_arrays, mi_analyze_arrays
from ..perm import ArmArrays, PooledArrays, percentile, relabel_block
from ..trial import MNAR
from ..trim import TrimError, resolved_alpha_rows, tail_means, trim_count
from .generate import SIM_DIRECTION, Replication, replication_seed, simulate_arrays
from .scenarios import Method, MethodKind, ScenarioSpec

log = logging.getLogger(__name__)

# per-replication record layout
FIELDS = ("ok", "arm1", "arm0", "diff", "ci_low", "ci_high", "reject", "se_hat", "smnar", "alpha")
_IDX = {f: i for i, f in enumerate(FIELDS)}
CHUNK = 25
MAX_FAIL_FRACTION = 0.01


class ScenarioAborted(RuntimeError):
    pass


def _method_rng(spec: ScenarioSpec, rep_index: int, method: Method) -> np.random.Generator:
    key = zlib.crc32(str(method).encode())
    return np.random.default_rng(
        np.random.SeedSequence([spec.master_seed, spec.stream_id, rep_index, key])
    )


def _trimmed(spec: ScenarioSpec, rep: Replication, method: Method, rng) -> list:
    y, arm = rep.y, rep.arm
    a1 = ArmArrays.build(y[arm == 1], SIM_DIRECTION)
    a0 = ArmArrays.build(y[arm == 0], SIM_DIRECTION)
    alpha = float(resolved_alpha_rows(a1.n_miss, a1.n, a0.n_miss, a0.n))
    if method.kind is MethodKind.TRIMMED_FIXED:
        if method.alpha < alpha - 1e-12:
            raise TrimError("alpha below missing fraction")
        alpha = method.alpha
    k1, k0 = trim_count(alpha, a1.n), trim_count(alpha, a0.n)
    if k1 >= a1.n or k0 >= a0.n:
        raise TrimError("trim exhausts arm")
    mu1 = float(tail_means(a1.vals[None, :], np.array([k1]))[0])
    mu0 = float(tail_means(a0.vals[None, :], np.array([k0]))[0])
    diff = mu1 - mu0

    lo = hi = se = math.nan
    reject = math.nan
    if spec.B:
        pooled = PooledArrays.build(y, arm, SIM_DIRECTION, method.alpha)
        perm, _ = relabel_block(pooled, spec.B, rng)
        q_lo, q_hi = percentile(perm, spec.gamma / 2), percentile(perm, 1 - spec.gamma / 2)
        lo, hi = diff + q_lo, diff + q_hi
        # benefit = lower outcome, so reject when the estimate sits below the lower tail
        reject = float(diff < q_lo)
        se = float(np.std(perm, ddof=1))

    miss = rep.missing
    truth = (rep.y_true[miss & (arm == 1)], rep.y_true[miss & (arm == 0)])
    thr = trim_thresholds(y, arm, alpha, SIM_DIRECTION)
    sm = smnar_fraction(truth, thr, SIM_DIRECTION)
    return [1.0, mu1, mu0, diff, lo, hi, reject, se, math.nan if sm is None else sm, alpha]


def _mi(spec: ScenarioSpec, rep: Replication, method: Method, rep_index: int) -> list:
    analysis = Analysis.TRIMMED if method.kind is MethodKind.TRIM_PLUS_MI else Analysis.MEAN_DIFF
    seed = [spec.master_seed, spec.stream_id, rep_index, zlib.crc32(str(method).encode())]
    pe = mi_analyze_arrays(
        rep.y, rep.arm, rep.codes, SIM_DIRECTION, analysis, spec.m, seed,
        B_boot=spec.B_boot, gamma=spec.gamma,
    )
    sm = math.nan
    if analysis is Analysis.TRIMMED:
        mnar = rep.codes == MNAR
        if mnar.any():
            # trim point of the mnar-only composite, with mar outcomes at their true values
            yt = np.where(mnar, np.nan, rep.y_true)
            thr = trim_thresholds(yt, rep.arm, pe.alpha_used, SIM_DIRECTION)
            truth = (rep.y_true[mnar & (rep.arm == 1)], rep.y_true[mnar & (rep.arm == 0)])
            sm = smnar_fraction(truth, thr, SIM_DIRECTION)
    reject = float(pe.p_value < spec.gamma)
    alpha = math.nan if pe.alpha_used is None else pe.alpha_used
    return [1.0, pe.mean_arm1, pe.mean_arm0, pe.mean, pe.ci_low, pe.ci_high, reject, pe.se, sm, alpha]


def _complete_case(spec: ScenarioSpec, rep: Replication) -> list:
    cc = complete_case_arrays(rep.y, rep.arm, spec.gamma)
    reject = float(cc.p_value < spec.gamma)
    return [1.0, cc.mean_arm1, cc.mean_arm0, cc.diff, cc.ci_low, cc.ci_high, reject, cc.se, math.nan, 0.0]


def evaluate_method(spec: ScenarioSpec, rep: Replication, method: Method, rep_index: int) -> list:
    if method.trims:
        return _trimmed(spec, rep, method, _method_rng(spec, rep_index, method))
    if method.kind is MethodKind.COMPLETE_CASE:
        return _complete_case(spec, rep)
    return _mi(spec, rep, method, rep_index)


def run_replications(spec: ScenarioSpec, start: int, stop: int):
    """Results array (methods, reps, FIELDS) plus realised missing counts (reps, 2)."""
    out = np.full((len(spec.methods), stop - start, len(FIELDS)), np.nan)
    miss = np.zeros((stop - start, 2), dtype=np.int64)
    for j, i in enumerate(range(start, stop)):
        rep = simulate_arrays(spec, np.random.default_rng(replication_seed(spec, i)))
        miss[j] = (rep.missing[rep.arm == 1].sum(), rep.missing[rep.arm == 0].sum())
        for mi, method in enumerate(spec.methods):
            try:
                out[mi, j] = evaluate_method(spec, rep, method, i)
            except (TrimError, ValueError, np.linalg.LinAlgError) as exc:
                log.debug("%s rep %d %s failed: %s", spec.name, i, method, exc)
                out[mi, j, _IDX["ok"]] = 0.0
    return out, miss


def _chunk_job(args):
    spec, start, stop = args
    return run_replications(spec, start, stop)


@dataclass
class ScenarioSummary:
    scenario: str
    table: int | None
    method: str
    K: int
    n_ok: int
    n_failed: int
    missing_rate_arm1: float
    missing_rate_arm0: float
    mean_arm1: float
    mean_arm0: float
    mean_diff: float
    pct_bias: float
    coverage: float
    power: float
    se_mc: float
    mse: float
    smnar_mean: float
    mean_se_hat: float
    mean_alpha: float
    B: int
    gamma: float
    master_seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def pct_bias(mean_diff: float, truth: float) -> float:
    """Attenuation in percent: positive when the estimate is pulled toward zero."""
    if truth == 0:
        return math.nan
    return 100.0 * (truth - mean_diff) / truth


def _nanmean(x):
    x = x[~np.isnan(x)]
    return float(x.mean()) if x.size else math.nan


def summarise(spec: ScenarioSpec, results: np.ndarray, miss: np.ndarray) -> list[ScenarioSummary]:
    rows = []
    n = spec.n_per_arm
    for mi, method in enumerate(spec.methods):
        r = results[mi]
        ok = r[:, _IDX["ok"]] == 1.0
        good = r[ok]
        d = good[:, _IDX["diff"]]
        if d.size:
            mean_diff = float(d.mean())
            se_mc = float(d.std())
            mse = float(np.mean((d - spec.betaA) ** 2))
            lo, hi = good[:, _IDX["ci_low"]], good[:, _IDX["ci_high"]]
            cover = (lo <= spec.betaA) & (spec.betaA <= hi)
            coverage = float(cover.mean()) if not np.isnan(lo).all() else math.nan
            power = _nanmean(good[:, _IDX["reject"]])
        else:
            mean_diff = se_mc = mse = coverage = power = math.nan
        rows.append(ScenarioSummary(
            scenario=spec.name,
            table=spec.table_of(method),
            method=str(method),
            K=spec.K,
            n_ok=int(ok.sum()),
            n_failed=int((~ok).sum()),
            missing_rate_arm1=float(miss[:, 0].mean() / n),
            missing_rate_arm0=float(miss[:, 1].mean() / n),
            mean_arm1=_nanmean(good[:, _IDX["arm1"]]),
            mean_arm0=_nanmean(good[:, _IDX["arm0"]]),
            mean_diff=mean_diff,
            pct_bias=pct_bias(mean_diff, spec.betaA),
            coverage=coverage,
            power=power,
            se_mc=se_mc,
            mse=mse,
            smnar_mean=_nanmean(good[:, _IDX["smnar"]]),
            mean_se_hat=_nanmean(good[:, _IDX["se_hat"]]),
            mean_alpha=_nanmean(good[:, _IDX["alpha"]]),
            B=spec.B,
            gamma=spec.gamma,
            master_seed=spec.master_seed,
        ))  # fmt: skip
    return rows


def simulate_scenario(spec: ScenarioSpec, workers: int = 1, executor=None):
    """Raw per-replication results ``(results, missing_counts)`` for one scenario."""
    jobs = [(spec, s, min(s + CHUNK, spec.K)) for s in range(0, spec.K, CHUNK)]
    if executor is not None:
        parts = list(executor.map(_chunk_job, jobs))
    elif workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(j) for j in jobs]
    results = np.concatenate([p[0] for p in parts], axis=1)
    miss = np.concatenate([p[1] for p in parts], axis=0)
    return results, miss


def run_scenario(spec: ScenarioSpec, workers: int = 1, executor=None) -> list[ScenarioSummary]:
    """One summary per method; raises ScenarioAborted if >1% of replications fail."""
    results, miss = simulate_scenario(spec, workers, executor)
    summaries = summarise(spec, results, miss)
    for s in summaries:
        if s.n_failed > MAX_FAIL_FRACTION * spec.K:
            raise ScenarioAborted(
                f"{spec.name}/{s.method}: {s.n_failed} of {spec.K} replications failed"
            )
        if s.n_failed:
            log.warning("%s/%s: %d replications failed", spec.name, s.method, s.n_failed)
    return summaries


def run_batch(specs, workers: int = 1, progress=None):
    """Run many scenarios; returns (summaries, aborted scenario messages)."""
    summaries, aborted = [], []
    ex = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for i, spec in enumerate(specs):
            try:
                summaries.extend(run_scenario(spec, executor=ex))
            except ScenarioAborted as exc:
                aborted.append(str(exc))
                log.error("%s", exc)
            if progress:
                progress(i + 1, len(specs), spec)
    finally:
        if ex is not None:
            ex.shutdown()
    return summaries, aborted


CSV_FIELDS = list(ScenarioSummary.__dataclass_fields__)


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return "" if v is None else str(v)


def summaries_to_csv(summaries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for s in summaries:
        d = s.to_dict()
        w.writerow([_fmt(d[f]) for f in CSV_FIELDS])
    return buf.getvalue()


def summaries_to_json(summaries) -> str:
    def clean(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    return json.dumps([{k: clean(v) for k, v in s.to_dict().items()} for s in summaries], indent=2)
