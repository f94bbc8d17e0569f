import json
import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from trimest.sim import (
    ArmRates,
    Mechanism,
    Method,
    MethodKind,
    ScenarioAborted,
    ScenarioError,
    ScenarioSpec,
    benchmark_power,
    generate_replication,
    load_batch,
    paper_suite,
    run_scenario,
    simulate_arrays,
)
from trimest.sim.generate import DEL_MAR, DEL_MCAR, DEL_MNAR, KEPT, replication_seed
from trimest.sim.runner import pct_bias, summaries_to_csv
from trimest.sim.scenarios import dump_batch, spec_from_dict, spec_to_dict
from trimest.trial import MAR, MNAR, MissReason

TRIM = Method(MethodKind.TRIMMED_ADAPTIVE)
MI = Method(MethodKind.MI_GLOBAL)


def realized_rates(spec, K):
    m = np.zeros(2)
    for i in range(K):
        r = simulate_arrays(spec, np.random.default_rng(replication_seed(spec, i)))
        m += (r.missing[r.arm == 1].sum(), r.missing[r.arm == 0].sum())
    return m / (K * spec.n_per_arm)


def logit_rate(spec, a):
    """Exact P(deleted) for arm a under the logit model with a normal outcome."""
    mu = spec.beta0 + spec.betaA * a
    f = lambda y: (1 - expit(spec.a0 + spec.aA * a + spec.aY * y)) * stats.norm.pdf(y, mu, spec.sigma)
    return integrate.quad(f, mu - 12 * spec.sigma, mu + 12 * spec.sigma, epsabs=1e-13)[0]


def expected_rates(spec):
    rates = [logit_rate(spec, 1), logit_rate(spec, 0)]
    if spec.mechanism is Mechanism.MIXTURE:
        for i, r in enumerate(spec.mixture_rates):
            rates[i] += r.mar + r.mcar
    return np.array(rates)


def test_suite_size():
    suite = paper_suite()
    assert len(suite) == 4 + 8 + 4 + 4 + 10 * 2
    assert len({s.name for s in suite}) == len(suite)
    assert [len(paper_suite(t)) for t in range(1, 11)] == [4, 4, 8, 8, 4, 4, 4, 4, 4, 20]


def test_table_filter_keeps_one_method():
    for t in range(1, 10):
        for s in paper_suite(t):
            assert len(s.methods) == 1 and s.table_of(s.methods[0]) == t
    with pytest.raises(ScenarioError):
        paper_suite(11)


def test_overrides_apply():
    assert {s.K for s in paper_suite(5, K=7, master_seed=3)} == {7}


def test_reference_coefficients():
    by = {s.name: s for s in paper_suite()}
    assert [by[f"mcar_{p}"].a0 for p in (5, 10, 15, 20)] == [2.94, 2.20, 1.74, 1.39]
    assert [by[f"mar_exp_{p}"].aA for p in (20, 15, 10, 5)] == [-8.61, -8.27, -7.80, -7.06]
    assert by["mar_exp_20"].a0 == 10.0
    assert [by[f"mar_ref_{p}"].a0 for p in (5, 10, 15, 20)] == [2.94, 2.20, 1.73, 1.39]
    assert by["mar_ref_5"].aA == 10.0
    assert [by[n].aY for n in ("mnar_2_5", "mnar_3_10", "mnar_5_15", "mnar_7_20")] == [-1, -2.5, -5, -10]
    e = sorted({s.aY for s in paper_suite(10)})
    assert e == [-10, -7.5, -5, -4, -3, -2.5, -2, -1.5, -1, -0.5]
    assert [s.target_missing for s in paper_suite(7)] == [(30, 10), (25, 15), (20, 20), (15, 25)]


def test_mcar_rate_examples():
    spec = ScenarioSpec("x", Mechanism.MCAR, 2.94, K=1)
    assert 1 - expit(2.94) == pytest.approx(0.05, abs=0.001)
    assert realized_rates(spec.replace(a0=1e6), 50).tolist() == [0.0, 0.0]
    K = 2000
    rate = realized_rates(spec.replace(a0=0.0), K)
    assert np.all(np.abs(rate - 0.5) <= 3 * math.sqrt(0.25 / (K * 50)))


@pytest.mark.parametrize("spec", [s for s in paper_suite() if not s.name.endswith("_fixed")], ids=lambda s: s.name)
def test_realized_rates(spec):
    """Realized rates sit within 3 binomial SEs of the exact expected rate and
    within rounding of the tabulated target."""
    K = 1000
    rate = realized_rates(spec, K)
    exp = expected_rates(spec)
    se = np.sqrt(np.maximum(exp * (1 - exp), 1e-12) / (K * spec.n_per_arm))
    assert np.all(np.abs(rate - exp) <= 3 * se + 1e-12)
    target = np.array(spec.target_missing) / 100
    assert np.all(np.abs(exp - target) <= 0.0075)


def test_mixture_structure():
    spec = next(s for s in paper_suite() if s.name == "mix_7_20")
    d, rep = generate_replication(spec, 3)
    assert not ((rep.deleted_by == DEL_MAR) & (rep.arm == 0)).any()
    assert np.array_equal(rep.codes == MNAR, rep.deleted_by == DEL_MNAR)
    assert np.array_equal(rep.codes == MAR, np.isin(rep.deleted_by, (DEL_MAR, DEL_MCAR)))
    for r, deleted in zip(d.records, rep.deleted_by):
        assert (r.reason is MissReason.OBSERVED) == (deleted == KEPT)


def test_generate_replication_deterministic():
    spec = paper_suite(5)[0]
    d1, r1 = generate_replication(spec, 17)
    d2, r2 = generate_replication(spec, 17)
    assert d1 == d2 and np.array_equal(r1.y_true, r2.y_true)
    _, r3 = generate_replication(spec, 18)
    assert not np.array_equal(r1.y_true, r3.y_true)


def test_study_e_common_random_numbers():
    cells = {s.name: s for s in paper_suite(10)}
    a, f = cells["e_aY-10_adaptive"], cells["e_aY-10_fixed"]
    for i in (0, 5):
        assert np.array_equal(generate_replication(a, i)[1].y, generate_replication(f, i)[1].y, equal_nan=True)


def test_pct_bias_convention():
    assert pct_bias(-0.48, -1.0) == pytest.approx(52.0)
    assert pct_bias(-1.04, -1.0) == pytest.approx(-4.0)
    assert math.isnan(pct_bias(0.1, 0.0))


def test_benchmark_power_near_ninety():
    assert benchmark_power(50, -1.0, 1.5, level=0.025) == pytest.approx(0.91, abs=0.01)


def small(spec, **kw):
    return spec.replace(**{"K": 60, "B": 200, "m": 3, "B_boot": 30, **kw})


def test_run_scenario_summary_fields():
    spec = small(paper_suite()[16], master_seed=1)  # mix_2_5, three methods
    rows = run_scenario(spec)
    assert [r.method for r in rows] == ["trimmed", "mi", "trimmed+mi"]
    assert [r.table for r in rows] == [7, 8, 9]
    for r in rows:
        assert r.n_ok == 60 and r.n_failed == 0
        assert 0 <= r.coverage <= 1 and 0 <= r.power <= 1
        assert r.mse == pytest.approx(r.se_mc**2 + (r.mean_diff - spec.betaA) ** 2, abs=1e-10)
        assert r.pct_bias == pytest.approx(100 * (spec.betaA - r.mean_diff) / spec.betaA)
    assert rows[0].mean_alpha >= rows[2].mean_alpha  # combination trims mnar only
    assert 0 <= rows[0].smnar_mean <= 1


def test_bias_variance_identity_is_exact():
    spec = ScenarioSpec("bv", Mechanism.MNAR, 2.85, aY=-5, K=500, B=0, master_seed=9)
    r = run_scenario(spec)[0]
    assert abs(r.mse - (r.se_mc**2 + (r.mean_diff + 1.0) ** 2)) <= 1e-10


def test_deterministic_across_workers():
    spec = small(paper_suite(5)[3], K=80, master_seed=42)
    a = summaries_to_csv(run_scenario(spec, workers=1))
    b = summaries_to_csv(run_scenario(spec, workers=2))
    c = summaries_to_csv(run_scenario(spec, workers=1))
    assert a == b == c
    d = summaries_to_csv(run_scenario(spec.replace(master_seed=43)))
    assert d != a


def test_null_rejection_rates():
    """betaA = 0, complete data: the one-sided percentile rule rejects about
    gamma/2 of the time, the two-sided MI test about gamma."""
    K = 1500
    spec = ScenarioSpec(
        "null", Mechanism.MCAR, 1e6, betaA=0.0, K=K, B=200, m=2, methods=(TRIM, MI), master_seed=5
    )
    trim, mi = run_scenario(spec)
    assert abs(trim.power - 0.025) <= 3 * math.sqrt(0.025 * 0.975 / K)
    assert abs(mi.power - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / K)
    assert math.isnan(trim.pct_bias)


def test_fixed_alpha_smnar_full_when_all_deleted_beyond_threshold():
    # tiny deletion rate with a steep outcome dependence: every deleted value is extreme
    spec = ScenarioSpec(
        "steep", Mechanism.MNAR, 40.0, aY=-20.0, K=200, B=0, methods=(Method(MethodKind.TRIMMED_FIXED, 0.5),)
    )
    r = run_scenario(spec)[0]
    assert r.smnar_mean == 1.0


def test_abort_on_failures():
    spec = ScenarioSpec(
        "bad", Mechanism.MCAR, 1.39, K=50, B=0, methods=(Method(MethodKind.TRIMMED_FIXED, 0.01),)
    )
    with pytest.raises(ScenarioAborted, match="50 of 50"):
        run_scenario(spec)


def test_spec_validation():
    with pytest.raises(ScenarioError):
        ScenarioSpec("k", Mechanism.MCAR, 1.0, K=0)
    with pytest.raises(ScenarioError):
        ScenarioSpec("m", Mechanism.MIXTURE, 1.0)
    with pytest.raises(ScenarioError):
        ScenarioSpec("r", Mechanism.MIXTURE, 1.0, mixture_rates=(ArmRates(1.5), ArmRates()))


def test_mechanism_mismatch_warns(caplog):
    ScenarioSpec("w", Mechanism.MCAR, 1.0, aY=-1.0)
    assert "declared MCAR" in caplog.text


def test_json_roundtrip(tmp_path):
    p = tmp_path / "batch.json"
    dump_batch(paper_suite(), p)
    assert load_batch(p) == paper_suite()
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps([spec_to_dict(paper_suite()[0])]))
    assert load_batch(bare) == paper_suite()[:1]


@pytest.mark.parametrize("patch, msg", [
    ({"K": "many"}, "field 'K' must be a number"),
    ({"K": 2.5}, "field 'K' must be an integer"),
    ({"mechanism": "random"}, "field 'mechanism'"),
    ({"methods": ["bogus"]}, "field 'methods'"),
    ({"colour": 1}, "unknown field"),
])  # fmt: skip
def test_batch_errors_name_field(patch, msg):
    d = {**spec_to_dict(paper_suite()[0]), **patch}
    with pytest.raises(ScenarioError, match=msg):
        spec_from_dict(d)


def test_method_parse_roundtrip():
    for text in ("trimmed", "trimmed_fixed:0.5", "mi", "trimmed+mi", "complete_case"):
        assert str(Method.parse(text)) == text
