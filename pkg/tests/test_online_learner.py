"""Online recursion: schedules, nodal and spectral steps, full runs."""

import math

import numpy as np
import pytest

from kernelpath.online_learner import (
    NodalState,
    Schedule,
    SpectralState,
    auto_theta,
    default_checkpoints,
    finalize,
    make_schedule,
    minimal_t0,
    run,
    schedule_values,
    step_nodal,
    step_spectral,
)
from kernelpath.reg_path import tikhonov_solution
from kernelpath.spectral_model import Sample, eval_function, kernel_eval, norm_K, norm_rho


class TestSchedule:
    def test_frozen_values(self):
        # a = b = 1, theta = 2/3, t0 = 8: at t = 19, tbar = 27,
        # gamma = 27^{-2/3} = 1/9 and lambda = 27^{-1/3} = 1/3.
        s = make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0)
        g, lam = schedule_values(s, 19)
        assert g == pytest.approx(1.0 / 9.0, rel=1e-15)
        assert lam == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_product_is_constant(self):
        s = make_schedule(4.0, 0.25, 2.0 / 3.0, 650.0)
        ts = np.arange(1, 2000)
        prod = s.gamma(ts) * s.lam(ts) * (ts + s.t0)
        assert np.allclose(prod, 1.0, rtol=1e-13, atol=0)

    def test_range_flag(self):
        # a < t0^theta and b < t0^{1-theta} keep gamma_0 and lambda_0 below 1
        assert not make_schedule(4.0, 0.25, 2.0 / 3.0, 7.0, r=1.0, kappa=1.5).flags.range_ok
        assert not make_schedule(1.0, 3.0, 2.0 / 3.0, 8.0, r=1.0, kappa=1.5).flags.range_ok
        assert make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0, r=1.0, kappa=1.5).flags.range_ok

    def test_hard_validation(self):
        with pytest.raises(ValueError):
            make_schedule(1.0, 1.0, 1.2, 8.0)
        with pytest.raises(ValueError):
            make_schedule(-1.0, 1.0, 0.5, 8.0)
        with pytest.raises(ValueError):
            make_schedule(1.0, 0.0, 0.5, 8.0)
        with pytest.raises(ValueError):
            make_schedule(1.0, 1.0, 0.5, 0.0)

    def test_schedule_values_starts_at_one(self):
        s = make_schedule(1.0, 1.0, 0.5, 9.0)
        with pytest.raises(ValueError):
            schedule_values(s, 0)

    def test_auto_theta(self):
        assert auto_theta(1.0) == pytest.approx(2.0 / 3.0)
        assert auto_theta(0.5) == pytest.approx(0.5)
        assert auto_theta(1.5) == pytest.approx(0.75)

    def test_flags_reference(self, ref_schedule):
        f = ref_schedule.flags
        assert f.range_ok and f.thmA_ok and f.thmB_ok and f.thmC_ok and f.b2_ok

    def test_flags_theta_half(self, ref_model):
        # theta = 1/2 trips the path-following (ratio) condition, so no rate flags
        t0 = minimal_t0(4.0, 0.25, 0.5, ref_model.kappa, r=1.0)
        s = make_schedule(4.0, 0.25, 0.5, t0, r=1.0, kappa=ref_model.kappa)
        assert s.flags.range_ok
        assert not s.flags.thmB_ok
        assert not s.flags.thmC_ok

    def test_minimal_t0_frozen(self, ref_model):
        assert minimal_t0(4.0, 0.25, 2.0 / 3.0, ref_model.kappa, r=1.0) == 650

    def test_minimal_t0_is_sufficient(self, ref_model):
        k2 = ref_model.kappa**2
        for a, b, r in [(4.0, 0.25, 1.0), (1.0, 1.0, 0.75), (8.0, 0.125, 1.25)]:
            theta = auto_theta(r)
            t0 = minimal_t0(a, b, theta, ref_model.kappa, r=r)
            assert t0**theta >= a * (k2 + b)
            s = make_schedule(a, b, theta, t0, r=r, kappa=ref_model.kappa)
            assert s.flags.range_ok and s.flags.b2_ok


def test_default_checkpoints_structure():
    cps = default_checkpoints(2**17)
    assert cps[0] == 0
    assert cps[-1] == 2**17
    assert np.all(np.diff(cps) > 0)
    for want in (64, 4096, 16384, 131072):
        assert want in cps
    # geometric spacing, ratio about 2^{1/4}
    mids = cps[(cps >= 64) & (cps <= 2**17)]
    ratios = mids[1:] / mids[:-1]
    assert ratios.max() < 1.26
    assert default_checkpoints(0).tolist() == [0]
    assert default_checkpoints(50).tolist() == [0, 50]


class TestNodalStep:
    def test_two_steps_by_hand(self, toy_model):
        """Two explicit recursion steps against f_t = (1-gl) f_{t-1} - g (f(x)-y) K_x."""
        g = lam = 0.1
        x1, y1, x2, y2 = 0.15, 1.0, 0.8, 1.0
        state = NodalState(toy_model, capacity=4)
        step_nodal(state, toy_model, Sample(x1, y1), g, lam)
        # f_1 = g y1 K_{x1}
        w1 = g * y1
        assert state.scale * state.coeffs[0] == pytest.approx(w1, abs=1e-16)
        k12 = kernel_eval(toy_model, x1, x2)
        step_nodal(state, toy_model, Sample(x2, y2), g, lam)
        # f_2 = (1 - g lam) w1 K_{x1} - g (w1 K(x1,x2) - y2) K_{x2}
        w1b = (1.0 - g * lam) * w1
        w2 = -g * (w1 * k12 - y2)
        eff = state.scale * state.coeffs
        assert eff[0] == pytest.approx(w1b, abs=1e-15)
        assert eff[1] == pytest.approx(w2, abs=1e-15)
        # with K(x1,x2) = 1/2 those weights would be 0.099 and 0.095
        assert (1.0 - 0.01) * 0.1 == pytest.approx(0.099)
        assert -0.1 * (0.1 * 0.5 - 1.0) == pytest.approx(0.095)

    def test_eval_matches_spectral_view(self, toy_model):
        rng = np.random.default_rng(0)
        state = NodalState(toy_model)
        for t in range(1, 20):
            s = Sample(float(rng.random()), float(rng.normal()))
            step_nodal(state, toy_model, s, 0.2 / t, 0.1)
        coeffs = state.to_spectral()
        for x in (0.0, 0.3, 0.9):
            assert state.eval(x) == pytest.approx(
                eval_function(toy_model, coeffs, x), abs=1e-12
            )
        assert state.norm_K() == pytest.approx(norm_K(toy_model, coeffs), rel=1e-10)

    def test_fold_scale_invariance(self, toy_model):
        rng = np.random.default_rng(1)
        state = NodalState(toy_model)
        for t in range(1, 12):
            step_nodal(state, toy_model, Sample(float(rng.random()), 1.0), 0.1, 0.3)
        before = state.to_spectral()
        nk = state.norm_K()
        state.fold_scale()
        assert state.scale == 1.0
        assert np.allclose(state.to_spectral(), before, rtol=1e-14, atol=1e-16)
        assert state.norm_K() == pytest.approx(nk, rel=1e-12)

    def test_finalize_folds(self, toy_model):
        state = NodalState(toy_model)
        step_nodal(state, toy_model, Sample(0.5, 1.0), 0.1, 0.1)
        finalize(state)
        assert state.scale == 1.0

    def test_rejects_divergent_step(self, toy_model):
        state = NodalState(toy_model)
        with pytest.raises(ValueError):
            step_nodal(state, toy_model, Sample(0.5, 1.0), 2.0, 0.6)

    def test_rejects_foreign_model(self, toy_model, toy_model_noisy):
        state = NodalState(toy_model)
        with pytest.raises(ValueError):
            step_nodal(state, toy_model_noisy, Sample(0.5, 1.0), 0.1, 0.1)


def test_spectral_step_matches_recursion(toy_model):
    # a_alpha <- (1 - g lam) a_alpha - g resid mu_alpha phi_alpha(x)
    state = SpectralState.zero(toy_model)
    from kernelpath.spectral_model import basis_matrix

    g, lam, x, y = 0.2, 0.3, 0.4, 1.5
    step_spectral(state, toy_model, Sample(x, y), g, lam)
    phi = basis_matrix(3, x)
    expect = -g * (0.0 - y) * toy_model.mu * phi
    assert np.allclose(state.coeffs, expect, rtol=0, atol=1e-15)


class TestRun:
    def test_zero_horizon(self, toy_model):
        s = make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0)
        tr = run(toy_model, s, T=0)
        assert tr.ts.tolist() == [0]
        assert tr.err_rho[0] == pytest.approx(norm_rho(toy_model.f_rho_coeffs))
        assert np.array_equal(tr.final_coeffs, np.zeros(3))

    def test_error_decreases(self, toy_model_noisy):
        s = make_schedule(1.0, 0.5, 2.0 / 3.0, 30.0)
        tr = run(toy_model_noisy, s, T=4096, seed=3)
        assert tr.err_rho[-1] < 0.25 * tr.err_rho[0]

    def test_checkpoint_validation(self, toy_model):
        s = make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0)
        with pytest.raises(ValueError):
            run(toy_model, s, T=10, checkpoints=[0, 20])
        with pytest.raises(ValueError):
            run(toy_model, s, T=10, checkpoints=[5, 5])
        with pytest.raises(ValueError):
            run(toy_model, s, T=10, checkpoints=[])

    def test_rejects_unknown_representation(self, toy_model):
        s = make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0)
        with pytest.raises(ValueError):
            run(toy_model, s, representation="dense", T=4)

    def test_nodal_tracking_unsupported(self, toy_model):
        s = make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0)
        with pytest.raises(ValueError):
            run(toy_model, s, representation="nodal", T=4, track_decomposition=True)

    def test_same_seed_same_draws_across_representations(self, toy_model_noisy):
        """Nodal and spectral runs agree step by step, including across a scale fold."""
        s = make_schedule(1.0, 0.5, 2.0 / 3.0, 30.0)
        cps = np.array([0, 256, 1024, 1500, 3000])  # 3000 crosses the 1024 and 2048 folds
        a = run(toy_model_noisy, s, representation="spectral", T=3000, seed=11, checkpoints=cps)
        b = run(toy_model_noisy, s, representation="nodal", T=3000, seed=11, checkpoints=cps)
        assert np.allclose(a.err_rho, b.err_rho, rtol=0, atol=1e-12)
        assert np.allclose(a.fnorm_K, b.fnorm_K, rtol=1e-10, atol=1e-12)
        assert norm_rho(a.final_coeffs - b.final_coeffs) < 1e-12

    def test_approx_error_column_matches_path_oracle(self, toy_model_noisy):
        s = make_schedule(1.0, 0.5, 2.0 / 3.0, 30.0)
        tr = run(toy_model_noisy, s, T=512, seed=5, track_decomposition=True)
        for i, t in enumerate(tr.ts):
            lam = s.lam(max(int(t), 0)) if t > 0 else s.b * s.t0 ** (s.theta - 1.0)
            pt = tikhonov_solution(toy_model_noisy, float(lam))
            assert tr.e_approx[i] == pytest.approx(pt.approx_err_rho, rel=1e-12)

    def test_untracked_has_no_decomposition(self, toy_model_noisy):
        s = make_schedule(1.0, 0.5, 2.0 / 3.0, 30.0)
        tr = run(toy_model_noisy, s, T=64, seed=5)
        assert tr.e_init is None and tr.e_samp_identity is None

    def test_gamma_lambda_columns(self, toy_model):
        s = make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0)
        tr = run(toy_model, s, T=100, checkpoints=[19])
        assert tr.gamma[0] == pytest.approx(1.0 / 9.0, rel=1e-15)
        assert tr.lam[0] == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_negative_horizon(self, toy_model):
        s = make_schedule(1.0, 1.0, 2.0 / 3.0, 8.0)
        with pytest.raises(ValueError):
            run(toy_model, s, T=-1)

    def test_divergent_schedule_rejected(self, toy_model):
        # gamma_1 lambda_1 = ab / (1 + t0) = 1.024
        s = Schedule(a=3.2, b=3.2, theta=0.5, t0=9.0)
        with pytest.raises(ValueError):
            run(toy_model, s, T=4)
