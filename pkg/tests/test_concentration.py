"""Tail bounds, high-probability radius, Monte Carlo coverage."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelpath.concentration import (
    CoverageResult,
    MartingaleSpec,
    SpecViolationError,
    bennett_g,
    bennett_tail,
    bernstein_tail,
    binomial_upper_cl,
    coverage_test,
    high_prob_radius,
    learner_increment_spec,
    rademacher_spec,
    sphere_spec,
    zero_spec,
)
from kernelpath.online_learner import make_schedule
from kernelpath.spectral_model import make_power_law_model

pos = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)


def test_bennett_g():
    assert bennett_g(0.0) == 0.0
    # g(x) = (1+x) log(1+x) - x ~ x^2/2 near 0
    assert bennett_g(1e-6) == pytest.approx(5e-13, rel=1e-3)
    assert bennett_g(1.0) == pytest.approx(2.0 * math.log(2.0) - 1.0, rel=1e-15)


def test_bernstein_frozen():
    # 2 exp(-9 / (2 (1 + 1))) at M = sigma^2 = 1, eps = 3
    assert bernstein_tail(1.0, 1.0, 3.0) == pytest.approx(2.0 * math.exp(-2.25), rel=1e-15)


def test_bennett_clamp():
    # raw value 2 exp(-g(1)) = e/2 > 1, so the bound clamps
    assert bennett_tail(1.0, 1.0, 1.0) == 1.0


def test_tail_input_validation():
    for fn in (bennett_tail, bernstein_tail):
        with pytest.raises(ValueError):
            fn(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            fn(1.0, -1.0, 1.0)
        with pytest.raises(ValueError):
            fn(1.0, 1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(M=pos, sigma_sq=pos, eps=pos)
def test_bennett_dominates_bernstein(M, sigma_sq, eps):
    assert bennett_tail(M, sigma_sq, eps) <= bernstein_tail(M, sigma_sq, eps) * (1.0 + 1e-12)


def test_radius_frozen():
    # log(2/delta) = 1 at delta = 2/e, so radius = 2 (M/3 + sigma_t)
    assert high_prob_radius(1.0, 1.0, 2.0 / math.e) == pytest.approx(8.0 / 3.0, rel=1e-15)


def test_radius_validation():
    with pytest.raises(ValueError):
        high_prob_radius(-1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        high_prob_radius(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        high_prob_radius(1.0, 1.0, 1.0)


class TestBinomialUpperCL:
    def test_zero_successes_closed_form(self):
        # k = 0: upper limit is 1 - (1 - conf)^{1/n}
        got = binomial_upper_cl(0, 10_000)
        assert got == pytest.approx(1.0 - 0.01 ** (1.0 / 10_000), rel=1e-12)
        assert got < 5e-4

    def test_all_successes(self):
        assert binomial_upper_cl(10, 10) == 1.0

    def test_monotone_in_k(self):
        cls = [binomial_upper_cl(k, 100) for k in range(0, 101, 10)]
        assert all(a < b for a, b in zip(cls, cls[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            binomial_upper_cl(-1, 10)
        with pytest.raises(ValueError):
            binomial_upper_cl(11, 10)
        with pytest.raises(ValueError):
            binomial_upper_cl(1, 10, confidence=1.0)


class TestCoverage:
    def test_zero_generator_never_violates(self):
        res = coverage_test(zero_spec(), t=50, delta=0.05, n_paths=100)
        assert res.violations == 0
        assert res.covered()

    def test_rademacher_covered(self):
        res = coverage_test(rademacher_spec(1.0), t=100, delta=0.05, n_paths=2000, seed=1)
        assert res.max_increment_norm <= 1.0
        assert res.covered()

    def test_sphere_covered(self):
        res = coverage_test(sphere_spec(dim=5, radius=2.0), t=64, delta=0.1, n_paths=2000, seed=2)
        assert res.max_increment_norm == pytest.approx(2.0, rel=1e-12)
        assert res.covered()

    def test_power_against_broken_radius(self):
        # a fifth of the real radius must be detectably violated
        real = high_prob_radius(1.0, 10.0, 0.05)
        res = coverage_test(
            rademacher_spec(1.0), t=100, delta=0.05, n_paths=2000, seed=1,
            radius_override=0.2 * real,
        )
        assert res.rate > 0.05
        assert not res.covered()

    def test_lying_generator_rejected(self):
        bad = MartingaleSpec(
            name="liar",
            M=0.5,
            sigma_for=lambda t: 0.5 * math.sqrt(t),
            sample_paths=lambda rng, n, t: 2.0 * rng.integers(0, 2, (n, t)) - 1.0,
        )
        with pytest.raises(SpecViolationError):
            coverage_test(bad, t=10, delta=0.1, n_paths=50)

    def test_result_fields(self):
        res = coverage_test(rademacher_spec(1.0), t=20, delta=0.2, n_paths=500, seed=3)
        assert isinstance(res, CoverageResult)
        assert res.rate == res.violations / res.n_paths
        assert 0.0 <= res.upper_cl <= 1.0

    def test_deterministic_given_seed(self):
        a = coverage_test(rademacher_spec(1.0), t=30, delta=0.1, n_paths=300, seed=9)
        b = coverage_test(rademacher_spec(1.0), t=30, delta=0.1, n_paths=300, seed=9)
        assert a.violations == b.violations
        assert a.radius == b.radius

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            coverage_test(zero_spec(), t=0, delta=0.1, n_paths=10)
        with pytest.raises(ValueError):
            coverage_test(zero_spec(), t=5, delta=0.1, n_paths=0)


class TestLearnerSpec:
    def test_requires_iterate_bound_regime(self):
        model = make_power_law_model(modes=16)
        # t0^theta = 4 < a (kappa^2 + b) = 2 (kappa^2 + 1) > 6
        sched = make_schedule(2.0, 1.0, 2.0 / 3.0, 8.0)
        with pytest.raises(ValueError):
            learner_increment_spec(model, sched, horizon=32)

    def test_declared_bounds_hold_on_paths(self):
        model = make_power_law_model(modes=32)
        sched = make_schedule(4.0, 0.25, 2.0 / 3.0, 650.0)
        spec = learner_increment_spec(model, sched, horizon=64)
        # coverage_test asserts every drawn increment stays under the declared M
        res = coverage_test(spec, t=64, delta=0.1, n_paths=200, seed=5)
        assert res.covered()
        assert res.max_increment_norm <= spec.M

    def test_fixed_horizon_only(self):
        model = make_power_law_model(modes=8)
        sched = make_schedule(4.0, 0.25, 2.0 / 3.0, 650.0)
        spec = learner_increment_spec(model, sched, horizon=16)
        with pytest.raises(ValueError):
            spec.sample_paths(np.random.default_rng(0), 4, 8)

    def test_sigma_declared_is_root_sum_of_squares(self):
        model = make_power_law_model(modes=8)
        sched = make_schedule(4.0, 0.25, 2.0 / 3.0, 650.0)
        spec = learner_increment_spec(model, sched, horizon=16)
        assert spec.sigma_for(16) >= spec.M  # at least one increment's worth
