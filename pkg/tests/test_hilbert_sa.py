"""Finite-dimensional recursion: decomposition identities, product bounds, conditions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelpath.hilbert_sa import (
    ConditionReport,
    FiniteProblem,
    PowerLawFamily,
    check_convergence_conditions,
    contraction_bound_check,
    decompose_martingale,
    decompose_reversed,
    drift_exponent_for,
    iterate,
    make_power_law_seqs,
    per_step_identity_error,
    random_problem,
)


def _problem(seed=0, d=4, m=3, T=64):
    return random_problem(np.random.default_rng(seed), d=d, m=m, T=T)


class TestFiniteProblem:
    def test_random_problem_shape(self):
        p = _problem()
        assert p.dim == 4 and p.n_outcomes == 3 and p.horizon == 64
        assert p.probs.sum() == pytest.approx(1.0, abs=1e-12)
        for A in p.A_ops:
            assert np.allclose(A, A.T, atol=1e-12)
            assert np.linalg.eigvalsh(A).min() >= -1e-10

    def test_probs_must_sum_to_one(self):
        p = _problem()
        with pytest.raises(ValueError):
            FiniteProblem(
                probs=np.array([0.5, 0.2, 0.2]),
                A_ops=p.A_ops, b_vecs=p.b_vecs,
                gamma_seq=p.gamma_seq, lambda_seq=p.lambda_seq, w0=p.w0,
            )

    def test_asymmetric_operator_rejected(self):
        p = _problem()
        bad = np.array(p.A_ops)
        bad[0, 0, 1] += 1.0
        with pytest.raises(ValueError):
            FiniteProblem(
                probs=p.probs, A_ops=bad, b_vecs=p.b_vecs,
                gamma_seq=p.gamma_seq, lambda_seq=p.lambda_seq, w0=p.w0,
            )

    def test_mean_quantities(self):
        p = _problem(3)
        want_op = sum(pr * A for pr, A in zip(p.probs, p.A_ops))
        want_vec = sum(pr * b for pr, b in zip(p.probs, p.b_vecs))
        assert np.allclose(p.mean_operator(), want_op, atol=1e-15)
        assert np.allclose(p.mean_vector(), want_vec, atol=1e-15)

    def test_path_point_solves_regularized_system(self):
        p = _problem(5)
        for t in (1, 10, p.horizon):
            lhs = p.mean_operator() + p.lambda_seq[t] * np.eye(p.dim)
            assert np.allclose(p.path_point(t), np.linalg.solve(lhs, p.mean_vector()), atol=1e-12)


class TestIterate:
    def test_deterministic(self):
        p = _problem(1)
        a = iterate(p, seed=7)
        b = iterate(p, seed=7)
        assert np.array_equal(a.iterates, b.iterates)
        assert np.array_equal(a.draws, b.draws)

    def test_draw_range_and_shapes(self):
        p = _problem(2)
        rec = iterate(p, seed=3)
        assert rec.iterates.shape == (p.horizon + 1, p.dim)
        assert rec.draws.shape == (p.horizon,)
        assert rec.draws.min() >= 0 and rec.draws.max() < p.n_outcomes
        assert np.array_equal(rec.iterates[0], p.w0)

    def test_partial_horizon(self):
        p = _problem(2)
        rec = iterate(p, T=10, seed=3)
        assert rec.horizon == 10


class TestDecompositions:
    def test_both_kinds_exact(self):
        rec = iterate(_problem(11), seed=5)
        for t in (1, 16, 64):
            assert decompose_reversed(rec, t).rel_err <= 1e-12
            assert decompose_martingale(rec, t).rel_err <= 1e-12

    def test_from_midpoint(self):
        # the reversed expansion subtracts its sample sum, the martingale one adds it
        rec = iterate(_problem(13), seed=5)
        rev = decompose_reversed(rec, 48, s=16)
        assert rev.s == 16 and rev.rel_err <= 1e-12
        assert np.allclose(rev.init - rev.sample - rev.drift, rev.reconstructed, atol=1e-15)
        mart = decompose_martingale(rec, 48, s=16)
        assert mart.rel_err <= 1e-12
        assert np.allclose(mart.init + mart.sample - mart.drift, mart.reconstructed, atol=1e-15)

    def test_per_step_identity(self):
        rec = iterate(_problem(17), seed=9)
        assert per_step_identity_error(rec) <= 1e-12

    def test_bad_window_rejected(self):
        rec = iterate(_problem(1), seed=1)
        with pytest.raises(ValueError):
            decompose_reversed(rec, 10, s=11)
        with pytest.raises(ValueError):
            decompose_reversed(rec, 10, s=-1)
        with pytest.raises(ValueError):
            decompose_martingale(rec, rec.horizon + 1)

    def test_empty_window_is_trivial(self):
        # s == t: no steps, the remainder reproduces itself exactly
        rec = iterate(_problem(1), seed=1)
        terms = decompose_reversed(rec, 10, s=10)
        assert terms.rel_err == 0.0
        assert np.array_equal(terms.reconstructed, rec.remainders[10])

    def test_reversed_sample_term_has_zero_conditional_mean(self):
        """E_z[(A_z + lambda_j) wbar_j - b_z] = 0, the defining property of the path."""
        p = _problem(23)
        eye = np.eye(p.dim)
        for j in (1, 7, 31):
            wbar = p.path_point(j)
            mean = sum(
                pr * ((A + p.lambda_seq[j] * eye) @ wbar - b)
                for pr, A, b in zip(p.probs, p.A_ops, p.b_vecs)
            )
            assert np.linalg.norm(mean) <= 1e-12

    @settings(max_examples=20, deadline=None)
    @given(
        d=st.integers(1, 6),
        m=st.integers(1, 4),
        T=st.integers(8, 48),
        seed=st.integers(0, 2**16),
    )
    def test_identities_random(self, d, m, T, seed):
        p = random_problem(np.random.default_rng(seed), d=d, m=m, T=T)
        rec = iterate(p, seed=seed + 1)
        for t in (max(1, T // 2), T):
            assert decompose_reversed(rec, t).rel_err <= 1e-9
            assert decompose_martingale(rec, t).rel_err <= 1e-9


class TestContractionBound:
    def _unit_product_problem(self):
        # gamma_t lambda_t (t + 10) = 1 exactly
        gamma, lam = make_power_law_seqs(1.0, 1.0, 0.5, 10.0, 128)
        rng = np.random.default_rng(0)
        R = rng.normal(size=(2, 3, 3))
        A_ops = np.stack([r @ r.T / 8.0 for r in R])
        b_vecs = rng.normal(size=(2, 3))
        return FiniteProblem(
            probs=np.array([0.4, 0.6]),
            A_ops=A_ops,
            b_vecs=b_vecs,
            gamma_seq=gamma,
            lambda_seq=lam,
            w0=np.zeros(3),
        )

    def test_frozen_closed_form(self):
        """j=1, t=100, c=1, t0=10: product is 1/11, closed form 11/111."""
        p = self._unit_product_problem()
        rec = iterate(p, seed=4)
        check = contraction_bound_check(rec, 1, 100, c=1.0, t0=10.0)
        assert check.product_bound == pytest.approx(1.0 / 11.0, rel=1e-12)
        assert check.closed_form == pytest.approx(11.0 / 111.0, rel=1e-15)
        assert check.measured <= check.product_bound * (1.0 + 1e-12)
        assert check.product_bound <= check.closed_form
        assert check.precondition_ok and check.ok

    def test_schedule_mismatch_rejected(self):
        p = self._unit_product_problem()
        rec = iterate(p, seed=4)
        with pytest.raises(ValueError):
            contraction_bound_check(rec, 1, 100, c=2.0, t0=10.0)
        with pytest.raises(ValueError):
            contraction_bound_check(rec, 1, 100, c=1.0)

    def test_window_bounds(self):
        p = self._unit_product_problem()
        rec = iterate(p, seed=4)
        with pytest.raises(ValueError):
            contraction_bound_check(rec, 0, 10)
        with pytest.raises(ValueError):
            contraction_bound_check(rec, 5, 4)

    def test_random_problems_never_violate(self):
        rng = np.random.default_rng(99)
        for _ in range(5):
            p = random_problem(rng)
            rec = iterate(p, seed=int(rng.integers(2**31)))
            for _ in range(20):
                j = int(rng.integers(1, p.horizon))
                t = int(rng.integers(j, p.horizon + 1))
                check = contraction_bound_check(rec, j, t)
                assert check.ok


class TestConditions:
    def test_reference_family_passes(self):
        fam = PowerLawFamily(4.0, 0.25, 2.0 / 3.0, 1.0 / 3.0, t0=650.0)
        rep = check_convergence_conditions(fam, drift_exponent_for(1.0, 2.0 / 3.0))
        assert rep.as_tuple() == (True, True, True)

    def test_theta_half_fails_ratio(self):
        fam = PowerLawFamily(4.0, 0.25, 0.5, 0.5, t0=650.0)
        rep = check_convergence_conditions(fam, drift_exponent_for(1.0, 0.5))
        assert rep.as_tuple()[1] is False  # gamma must decay strictly slower than lambda

    def test_drift_exponent_values(self):
        assert drift_exponent_for(1.0, 2.0 / 3.0) == pytest.approx(-7.0 / 6.0)
        assert drift_exponent_for(0.5, 0.5) == pytest.approx(-1.0)

    def test_step_condition_fails_when_sum_exceeds_one(self):
        fam = PowerLawFamily(1.0, 1.0, 0.7, 0.5, t0=10.0)
        rep = check_convergence_conditions(fam, -1.2)
        assert rep.as_tuple()[0] is False

    def test_report_carries_evidence(self):
        fam = PowerLawFamily(4.0, 0.25, 2.0 / 3.0, 1.0 / 3.0, t0=650.0)
        rep = check_convergence_conditions(fam, drift_exponent_for(1.0, 2.0 / 3.0))
        assert isinstance(rep, ConditionReport)
        assert rep.evidence
