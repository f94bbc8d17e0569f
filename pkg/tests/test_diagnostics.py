import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from trimest.diagnostics import (
    NormalLocationPair,
    kolmogorov_sf,
    ks_location_shift_test,
    ks_statistic,
    normal_trimmed_mean,
    population_trimmed_mean,
    smnar_fraction,
    theorem2_profile,
    trim_thresholds,
)
from trimest.trial import Direction

from conftest import make

GRID = [round(0.1 * i, 1) for i in range(10)]


def test_ks_examples():
    assert ks_statistic([1, 2, 3, 4], [2, 3, 4, 5]) == 0.25
    assert ks_statistic([1, 2, 3], [1, 2, 3]) == 0.0
    d = make([1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0])
    assert ks_location_shift_test(d, 0.0).d_stat == 0.25
    r = ks_location_shift_test(d, -1.0)
    assert r.d_stat == 0.0 and r.p_value == 1.0 and r.shift_applied == -1.0


def test_ks_identical_arms():
    r = ks_location_shift_test(make([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]))
    assert (r.d_stat, r.p_value, r.n1, r.n0) == (0.0, 1.0, 3, 3)


def test_ks_ignores_missing():
    r = ks_location_shift_test(make([1.0, None, 2.0], [1.0, 2.0, None, None]))
    assert (r.n1, r.n0) == (2, 2)


def test_ks_needs_data():
    with pytest.raises(ValueError, match="observed outcomes"):
        ks_location_shift_test(make([1.0, None], [1.0, 2.0]))


@pytest.mark.parametrize("lam", [0.05, 0.3, 0.6, 0.9, 1.1, 1.18, 1.2, 1.5, 2.0, 3.0, 5.0])
def test_kolmogorov_sf_matches_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-11)


def test_kolmogorov_sf_edges():
    assert kolmogorov_sf(0.0) == 1.0
    assert kolmogorov_sf(-1.0) == 1.0


samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False), min_size=1, max_size=40)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # raised inside scipy's own p-value code
@settings(max_examples=150, deadline=None)
@given(samples, samples)
def test_ks_statistic_matches_scipy(x, y):
    assert ks_statistic(x, y) == pytest.approx(stats.ks_2samp(x, y, method="asymp").statistic, abs=1e-12)


grid_points = st.lists(st.integers(-300, 300), min_size=1, max_size=40)


@settings(max_examples=100, deadline=None)
@given(grid_points, grid_points, st.sampled_from([np.exp, np.arctan, lambda v: v**3, lambda v: 2 * v + 7]))
def test_ks_invariant_under_monotone_transform(x, y, f):
    # values on a 0.01 grid so every transform stays strictly increasing in floating point
    x, y = np.asarray(x) / 100, np.asarray(y) / 100
    assert ks_statistic(f(x), f(y)) == ks_statistic(x, y)


def test_trim_thresholds():
    y = np.array([5.0, np.nan, 1.0, 3.0, 2.0, 4.0, 0.0, 1.5])
    arm = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    # arm 1 worst-high order: nan, 5, 3, 1; alpha .5 trims 2, keeps 3 as worst retained
    assert trim_thresholds(y, arm, 0.5, Direction.WORSE_IS_HIGH) == (3.0, 1.5)
    assert trim_thresholds(y, arm, 0.5, Direction.WORSE_IS_LOW) == (3.0, 2.0)


def test_smnar_examples():
    assert smnar_fraction(([9.0, 8.0], [7.0]), (3.0, 2.0), "worse-high") == 1.0
    assert smnar_fraction(([9.0, 1.0], [2.0, 0.0]), (3.0, 2.0), "worse-high") == 0.25
    assert smnar_fraction(([], []), (3.0, 2.0), "worse-high") is None
    assert smnar_fraction(([-5.0], [5.0]), (0.0, 0.0), "worse-low") == 0.5


@settings(max_examples=100, deadline=None)
@given(samples, samples, st.floats(-10, 10), st.floats(-10, 10))
def test_smnar_in_unit_interval(v1, v0, t1, t0):
    f = smnar_fraction((v1, v0), (t1, t0), Direction.WORSE_IS_HIGH)
    assert 0.0 <= f <= 1.0


def test_normal_trimmed_mean_examples():
    assert normal_trimmed_mean(0, 1, 0.5) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)
    assert normal_trimmed_mean(0, 1, 0.5, "worse-high") == pytest.approx(-math.sqrt(2 / math.pi), abs=1e-12)
    assert normal_trimmed_mean(-1.3, 2.0, 0.0) == -1.3
    a = normal_trimmed_mean(-2, 1.5, 0.2)
    b = normal_trimmed_mean(-1, 1.5, 0.2)
    assert a - b == pytest.approx(-1.0, abs=1e-12)


def test_normal_trimmed_mean_against_quadrature():
    for mu, sd, alpha in [(0, 1, 0.3), (2, 0.5, 0.7), (-1, 3, 0.05)]:
        lo = stats.norm.ppf(alpha, mu, sd)
        val = integrate.quad(lambda t: t * stats.norm.pdf(t, mu, sd), lo, np.inf)[0] / (1 - alpha)
        assert normal_trimmed_mean(mu, sd, alpha) == pytest.approx(val, abs=1e-9)


@pytest.mark.parametrize("mu, sigma, alpha, direction", [
    (0.0, 1.0, 0.5, Direction.WORSE_IS_LOW),
    (-2.0, 1.5, 0.2, Direction.WORSE_IS_HIGH),
    (1.0, 3.0, 0.8, Direction.WORSE_IS_LOW),
])  # fmt: skip
def test_normal_trimmed_mean_monte_carlo(mu, sigma, alpha, direction):
    """10^6 draws: sample trimmed mean within 3 MC SEs of the closed form.

    The SE uses the influence function of a one-sided trimmed mean, whose
    variance is that of the sample winsorized at the trim point.
    """
    rng = np.random.default_rng(17)
    x = rng.normal(mu, sigma, 1_000_000)
    s = direction.sign
    z = np.sort(s * x)
    k = math.ceil(alpha * x.size)
    est = s * z[k:].mean()
    se = np.maximum(z, z[k]).std() / ((1 - alpha) * math.sqrt(x.size))
    assert abs(est - normal_trimmed_mean(mu, sigma, alpha, direction)) <= 3 * se


def test_location_pair():
    p = NormalLocationPair(-2.0, -1.0, 1.5)
    assert p.delta == -1.0
    ys = np.linspace(-6, 4, 41)
    assert np.allclose(p.density(0, ys), p.density(1, ys + p.delta), atol=0, rtol=1e-15)
    with pytest.raises(ValueError):
        NormalLocationPair(0, 0, 0)


def test_profile_location_shift_constant():
    prof = theorem2_profile(stats.norm(-2, 1.5), stats.norm(-1, 1.5), GRID)
    assert max(abs(v + 1.0) for v in prof) < 1e-9


def test_profile_identical_zero():
    prof = theorem2_profile(stats.expon(scale=2), stats.expon(scale=2), GRID)
    assert all(v == 0.0 for v in prof)


def test_profile_scale_difference():
    prof = theorem2_profile(stats.norm(0, 1), stats.norm(0, 2), GRID)
    assert max(prof) - min(prof) > 0.1


def test_profile_normal_vs_exponential():
    prof = theorem2_profile(stats.norm(1, 1), stats.expon(scale=1), GRID)
    assert abs(prof[0]) < 1e-8  # means matched
    assert max(prof) - min(prof) > 1e-3


def test_population_trimmed_mean_quad_path():
    # exponential with worse-low: lower alpha tail removed, memorylessness gives q + scale
    d = stats.expon(scale=2)
    for a in (0.1, 0.5, 0.9):
        q = d.ppf(a)
        assert population_trimmed_mean(d, a) == pytest.approx(q + 2, abs=1e-8)


def test_identification_grid_closed_form():
    worst = 0.0
    for mu1, mu0, sigma, alpha, direction in itertools.product(
        range(-3, 4), range(-3, 4), (0.5, 1.0, 1.5, 3.0), GRID, list(Direction)
    ):
        got = normal_trimmed_mean(mu1, sigma, alpha, direction) - normal_trimmed_mean(mu0, sigma, alpha, direction)
        worst = max(worst, abs(got - (mu1 - mu0)))
    assert worst <= 1e-9
