"""Shared fixtures.

The toy model has mu = (1, 1/2, 1/4), g = (1, 2, 4), r = 1, so f_rho has
coefficients (1, 1, 1). Every closed-form oracle in the unit tests was
derived from it by hand.

The two session-scoped experiments back the expensive acceptance
criteria: a tracked R=20, T=2^17 reference experiment (rate slopes,
running iterate bound, error-decomposition structure) and an untracked
R=50, T=2^14 one (bound domination). Building them once keeps the whole
suite inside the runtime budget.
"""

import time

import pytest

from kernelpath import make_model, make_power_law_model, make_schedule
from kernelpath.harness import ExperimentConfig, run_replicates
from kernelpath.online_learner import minimal_t0

TOY_MU = (1.0, 0.5, 0.25)
TOY_G = (1.0, 2.0, 4.0)

REF_A = 4.0
REF_B = 0.25
REF_THETA = 2.0 / 3.0
REF_T0 = 650  # minimal_t0(4, 1/4, 2/3, kappa) for the 256-mode reference model


@pytest.fixture()
def toy_model():
    return make_model(TOY_MU, TOY_G, regularity_r=1.0, noise_halfwidth=0.0)


@pytest.fixture()
def toy_model_noisy():
    return make_model(TOY_MU, TOY_G, regularity_r=1.0, noise_halfwidth=0.5)


@pytest.fixture(scope="session")
def ref_model():
    """Reference family at its defaults: 256 modes, mu_k = (k+1)^-2, g_k = (k+1)^-1, sigma = 0.5."""
    return make_power_law_model()


@pytest.fixture(scope="session")
def ref_schedule(ref_model):
    t0 = minimal_t0(REF_A, REF_B, REF_THETA, ref_model.kappa, r=1.0)
    assert t0 == REF_T0
    return make_schedule(a=REF_A, b=REF_B, theta=REF_THETA, t0=t0, r=1.0, kappa=ref_model.kappa)


@pytest.fixture(scope="session")
def ref_experiment(ref_model, ref_schedule):
    """(ExperimentResult, wall seconds) for the tracked R=20, T=2^17 reference runs."""
    cfg = ExperimentConfig(
        model=ref_model,
        schedule=ref_schedule,
        T=2**17,
        replicates=20,
        base_seed=0,
        track_decomposition=True,
        window=(4096.0, 131072.0),
    )
    start = time.perf_counter()
    result = run_replicates(cfg)
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def domination_experiment(ref_model, ref_schedule):
    cfg = ExperimentConfig(
        model=ref_model,
        schedule=ref_schedule,
        T=2**14,
        replicates=50,
        base_seed=0,
        delta=0.1,
        track_decomposition=False,
    )
    return run_replicates(cfg)
