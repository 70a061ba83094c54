"""Tail bounds for bounded Hilbert-space martingales, plus a Monte Carlo coverage tester.

Evaluators for the Pinelis-style inequalities: the Bennett form, its
Bernstein relaxation, and the high-probability radius

    sup_{k<=t} || sum_{i<=k} xi_i ||  <=  2 (M/3 + sigma_t) log(2/delta)

for difference sequences with ||xi_i|| <= M almost surely and cumulative
conditional variance at most sigma_t^2. The coverage tester draws paths
from a declared generator and counts how often the radius fails; built-in
generators cover scalar signs, vectors on a sphere, and the online
learner's own sample-error increments.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np
from scipy.stats import beta as _beta

from .spectral_model import SpectralModel, basis_matrix

# Multiplicative slack for the per-draw increment-bound assertion.
_M_SLACK = 1e-12

# Guard against accidentally huge increment tensors (n_paths * t * dim).
_MAX_ELEMENTS = 200_000_000


class SpecViolationError(RuntimeError):
    """A generator produced an increment larger than its declared M."""


def bennett_g(x: float) -> float:
    """g(x) = (1 + x) log(1 + x) - x, the Bennett exponent function."""
    if x < 0:
        raise ValueError("g is used on nonnegative arguments only")
    return (1.0 + x) * math.log1p(x) - x


def bennett_tail(M: float, sigma_sq: float, eps: float) -> float:
    """2 exp(-(sigma^2 / M^2) g(M eps / sigma^2)), clamped to [0, 1]."""
    if M <= 0 or sigma_sq <= 0 or eps <= 0:
        raise ValueError("M, sigma_sq, eps must be positive")
    val = 2.0 * math.exp(-(sigma_sq / M**2) * bennett_g(M * eps / sigma_sq))
    return min(1.0, val)


def bernstein_tail(M: float, sigma_sq: float, eps: float) -> float:
    """2 exp(-eps^2 / (2 (sigma^2 + M eps / 3))), clamped to [0, 1]."""
    if M <= 0 or sigma_sq <= 0 or eps <= 0:
        raise ValueError("M, sigma_sq, eps must be positive")
    val = 2.0 * math.exp(-(eps**2) / (2.0 * (sigma_sq + M * eps / 3.0)))
    return min(1.0, val)


def high_prob_radius(M: float, sigma_t: float, delta: float) -> float:
    """2 (M/3 + sigma_t) log(2/delta); covers the running sup with prob >= 1 - delta.

    Conservative by construction: it inverts the Bernstein tail after
    relaxing sqrt(2 sigma^2 log(2/delta)) <= 2 sigma log(2/delta).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if M < 0 or sigma_t < 0:
        raise ValueError("M and sigma_t must be nonnegative")
    return 2.0 * (M / 3.0 + sigma_t) * math.log(2.0 / delta)


def binomial_upper_cl(successes: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided Clopper-Pearson upper confidence limit for a binomial rate."""
    if not 0 <= successes <= trials or trials < 1:
        raise ValueError("need 0 <= successes <= trials, trials >= 1")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if successes == trials:
        return 1.0
    return float(_beta.ppf(confidence, successes + 1, trials - successes))


@dataclasses.dataclass(frozen=True)
class MartingaleSpec:
    """A declared-moment generator of martingale difference sequences.

    sample_paths(rng, n_paths, t) returns increments of shape (n_paths, t)
    for scalar sequences or (n_paths, t, d) for vector ones; every
    increment norm must stay within the declared M (asserted per draw by
    the coverage test), and the cumulative conditional second moment up
    to time t must be within sigma_for(t)**2.
    """

    name: str
    M: float
    sigma_for: Callable[[int], float]
    sample_paths: Callable[[np.random.Generator, int, int], np.ndarray]


def rademacher_spec(scale: float = 1.0) -> MartingaleSpec:
    """I.i.d. uniform +-scale scalar increments: M = scale, sigma_t = scale sqrt(t)."""
    if scale < 0:
        raise ValueError("scale must be nonnegative")

    def paths(rng, n_paths, t):
        return scale * (2.0 * rng.integers(0, 2, size=(n_paths, t)) - 1.0)

    return MartingaleSpec(
        name="rademacher",
        M=scale,
        sigma_for=lambda t: scale * math.sqrt(t),
        sample_paths=paths,
    )


def sphere_spec(dim: int, radius: float = 1.0) -> MartingaleSpec:
    """I.i.d. increments uniform on the radius-M sphere in R^dim."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if radius < 0:
        raise ValueError("radius must be nonnegative")

    def paths(rng, n_paths, t):
        g = rng.standard_normal((n_paths, t, dim))
        norms = np.linalg.norm(g, axis=-1, keepdims=True)
        return radius * g / norms

    return MartingaleSpec(
        name=f"sphere-{dim}",
        M=radius,
        sigma_for=lambda t: radius * math.sqrt(t),
        sample_paths=paths,
    )


def zero_spec() -> MartingaleSpec:
    def paths(rng, n_paths, t):
        return np.zeros((n_paths, t))

    return MartingaleSpec(name="zero", M=0.0, sigma_for=lambda t: 0.0, sample_paths=paths)


def learner_increment_spec(model: SpectralModel, schedule, horizon: int) -> MartingaleSpec:
    """The learner's own sample-error increments xi_j = gamma_j Pbar_{j+1}^t chi_j.

    chi_j has eigen-coordinates mu_alpha [(w_{j-1} - c)_alpha
    - (f_{j-1}(x_j) - y_j) phi_alpha(x_j)], and Pbar is the deterministic
    product, diagonal per mode. Requires the iterate-bound regime
    t0^theta >= a (kappa^2 + b): then ||w_{j-1}||_K <= kappa M_rho /
    lambda_{j-1} almost surely, which gives the declared per-increment
    bound (using ||v||_rho <= sqrt(mu_0) ||v||_K, ||mu v||_rho
    <= mu_0 ||v||_rho, and ||mu phi(x)||_rho <= sqrt(mu_0) kappa):

        ||chi_j|| <= mu_0 (sqrt(mu_0) kappa M_rho / lambda_{j-1} + M_rho)
                     + sqrt(mu_0) kappa (kappa^2 M_rho / lambda_{j-1} + M_rho),

    multiplied by gamma_j and the factor bound prod_{i>j} (1 - gamma_i
    lambda_i). The declared sigma is the root sum of squared bounds.
    """
    t = int(horizon)
    if t < 1:
        raise ValueError("horizon must be >= 1")
    a, b, theta, t0 = schedule.a, schedule.b, schedule.theta, schedule.t0
    kappa, m_rho = model.kappa, model.M_rho
    if t0**theta < a * (kappa**2 + b):
        raise ValueError(
            "increment bounds need the iterate-bound regime t0^theta >= a (kappa^2 + b)"
        )
    mu = model.mu
    mu0 = float(mu[0])
    steps = np.arange(1, t + 1, dtype=float)
    gammas = a * (steps + t0) ** -theta
    lams = b * (steps + t0) ** (theta - 1.0)
    lam_prev = np.concatenate(([b * t0 ** (theta - 1.0)], lams[:-1]))

    wk_bound = kappa * m_rho / lam_prev
    chi_bound = mu0 * (math.sqrt(mu0) * wk_bound + m_rho) + math.sqrt(mu0) * kappa * (
        kappa * wk_bound + m_rho
    )
    # suffix products of (1 - gamma_i lambda_i) for i > j
    fac = 1.0 - gammas * lams
    suffix = np.ones(t)
    suffix[:-1] = np.cumprod(fac[::-1])[::-1][1:]
    per_step_bound = gammas * suffix * chi_bound
    declared_m = float(per_step_bound.max())
    declared_sigma = float(np.sqrt(np.sum(per_step_bound**2)))

    # per-mode contraction factors and their suffix products, (t, N)
    facs = 1.0 - gammas[:, None] * (mu[None, :] + lams[:, None])
    sp = np.ones((t, mu.size))
    sp[:-1] = np.cumprod(facs[::-1], axis=0)[::-1][1:]

    def paths(rng, n_paths, tt):
        if tt != t:
            raise ValueError("learner spec is built for one fixed horizon")
        if n_paths * t * mu.size > _MAX_ELEMENTS:
            raise ValueError("requested increment tensor too large")
        xs = rng.random((n_paths, t))
        noise = rng.uniform(-model.noise_halfwidth, model.noise_halfwidth, (n_paths, t))
        W = np.zeros((n_paths, mu.size))
        out = np.empty((n_paths, t, mu.size))
        c = model.f_rho_coeffs
        for j in range(1, t + 1):
            phi = basis_matrix(model.modes, xs[:, j - 1])
            resid = np.einsum("pk,pk->p", W, phi) - (phi @ c + noise[:, j - 1])
            chi = mu * ((W - c) - resid[:, None] * phi)
            out[:, j - 1] = gammas[j - 1] * sp[j - 1] * chi
            W = (1.0 - gammas[j - 1] * lams[j - 1]) * W - (
                gammas[j - 1] * resid[:, None]
            ) * (mu * phi)
        return out

    return MartingaleSpec(
        name="learner-increments",
        M=declared_m,
        sigma_for=lambda tt: declared_sigma,
        sample_paths=paths,
    )


@dataclasses.dataclass(frozen=True)
class CoverageResult:
    spec_name: str
    t: int
    delta: float
    n_paths: int
    radius: float
    violations: int
    rate: float
    upper_cl: float          # one-sided 99% binomial upper confidence limit
    max_increment_norm: float

    def covered(self) -> bool:
        """Violation rate consistent with <= delta at the 99% level."""
        return self.upper_cl <= self.delta or self.violations == 0


def coverage_test(
    spec: MartingaleSpec,
    t: int,
    delta: float,
    n_paths: int,
    seed: int = 0,
    radius_override: float | None = None,
) -> CoverageResult:
    """Count paths whose running-sum sup exceeds the high-probability radius.

    radius_override substitutes an arbitrary radius (used to confirm the
    test has power against deliberately broken bounds); the declared-M
    assertion still applies.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if t < 1:
        raise ValueError("t must be >= 1")
    rng = np.random.default_rng(seed)
    increments = np.asarray(spec.sample_paths(rng, n_paths, t), dtype=float)
    if increments.shape[:2] != (n_paths, t):
        raise ValueError("generator returned a wrong-shaped increment array")

    if increments.ndim == 2:
        norms = np.abs(increments)
    else:
        norms = np.linalg.norm(increments, axis=-1)
    max_norm = float(norms.max()) if norms.size else 0.0
    if max_norm > spec.M * (1.0 + _M_SLACK) + _M_SLACK:
        raise SpecViolationError(
            f"generator {spec.name!r} produced increment norm {max_norm} > declared M {spec.M}"
        )

    partial = np.cumsum(increments, axis=1)
    if increments.ndim == 2:
        sups = np.abs(partial).max(axis=1)
    else:
        sups = np.linalg.norm(partial, axis=-1).max(axis=1)

    radius = high_prob_radius(spec.M, spec.sigma_for(t), delta)
    if radius_override is not None:
        radius = float(radius_override)
    violations = int(np.count_nonzero(sups > radius))
    return CoverageResult(
        spec_name=spec.name,
        t=t,
        delta=delta,
        n_paths=n_paths,
        radius=radius,
        violations=violations,
        rate=violations / n_paths,
        upper_cl=binomial_upper_cl(violations, n_paths),
        max_increment_norm=max_norm,
    )
