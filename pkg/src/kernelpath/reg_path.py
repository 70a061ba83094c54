"""Exact Tikhonov regularization paths and drift inequalities.

The path f_lambda = (L_K + lambda I)^{-1} L_K f_rho is diagonal in
eigen-coordinates: coefficient alpha equals c_alpha mu_alpha / (mu_alpha
+ lambda). Everything here is computed coefficientwise, so this module
is the exact oracle the experiments are measured against; no iterative
solver error enters.

Drift bounds: for lam > mu >= 0 and a source exponent r, five clauses
bound ||f_lam - f_mu|| (rho-norm for A/B, K-norm for C/D/E):

  A (r in [-1,1] \ {0}):        |lam^r - mu^r| ||L^{-r} f_rho|| / |r|
  B (r >= 1, 1 <= s <= r):      kappa^{2(s-1)} |lam - mu| ||L^{-s} f_rho||
  C (r >= 1/2):                 (|lam - mu| / lam) ||f_rho||_K
  D (r in [-1/2,3/2] \ {1/2}):  |lam^{r-1/2} - mu^{r-1/2}| ||L^{-r} f_rho|| / |r - 1/2|
  E (r >= 3/2, 3/2 <= s <= r):  kappa^{2(s-3/2)} |lam - mu| ||L^{-s} f_rho||

mu = 0 is rejected where the clause expression needs a negative power
of mu. Norms ||L^{-s} f_rho|| are computed from the model's stored source
coefficients.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .spectral_model import SpectralModel, norm_K, norm_rho

# Multiplicative slack when declaring measured <= bound, absorbing
# floating-point rounding only.
INEQ_SLACK = 1e-9

CLAUSES = ("A", "B", "C", "D", "E")

# Norm each clause bounds.
CLAUSE_NORM = {"A": "rho", "B": "rho", "C": "K", "D": "K", "E": "K"}


@dataclasses.dataclass(frozen=True)
class PathPoint:
    lam: float
    f_lambda: np.ndarray
    approx_err_rho: float   # ||f_lambda - f_rho||_rho
    approx_err_K: float     # ||f_lambda - f_rho||_K


def tikhonov_coeffs(model: SpectralModel, lam: float) -> np.ndarray:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    mu = model.mu
    return model.f_rho_coeffs * mu / (mu + lam)


def tikhonov_solution(model: SpectralModel, lam: float) -> PathPoint:
    """Path point at lam; the residual (L_K + lam I) f_lam - L_K f_rho is 0."""
    coeffs = tikhonov_coeffs(model, lam)
    diff = coeffs - model.f_rho_coeffs
    return PathPoint(
        lam=float(lam),
        f_lambda=coeffs,
        approx_err_rho=norm_rho(diff),
        approx_err_K=norm_K(model, diff),
    )


def tikhonov_residual(model: SpectralModel, point: PathPoint) -> float:
    """||(L_K + lam I) f_lam - L_K f_rho||_rho, numerically."""
    mu = model.mu
    res = (mu + point.lam) * point.f_lambda - mu * model.f_rho_coeffs
    return norm_rho(res)


def drift(model: SpectralModel, lam: float, mu_reg: float, norm_id: str = "rho") -> float:
    """||f_lam - f_mu|| in the requested norm, coefficientwise.

    mu_reg = 0 degenerates to the approximation error (f_0 = f_rho in the
    truncated model). Negative parameters are rejected.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if mu_reg < 0:
        raise ValueError("mu must be nonnegative")
    mu = model.mu
    c = model.f_rho_coeffs
    f_lam = c * mu / (mu + lam)
    f_mu = c if mu_reg == 0 else c * mu / (mu + mu_reg)
    diff = f_lam - f_mu
    if norm_id == "rho":
        return norm_rho(diff)
    if norm_id == "K":
        return norm_K(model, diff)
    raise ValueError(f"unknown norm_id {norm_id!r} (expected 'rho' or 'K')")


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


def drift_bound(
    model: SpectralModel,
    lam: float,
    mu_reg: float,
    r: float,
    clause: str,
    s: float | None = None,
) -> float:
    """Right-hand side of the chosen drift inequality.

    Requires lam >= mu_reg >= 0, lam > 0 (lam == mu_reg returns 0). The
    optional s selects the smoothness level in clauses B/E (default r).
    Out-of-range (clause, r, s, mu) combinations raise ValueError.
    """
    _require(lam > 0, "lambda must be positive")
    _require(mu_reg >= 0, "mu must be nonnegative")
    _require(lam >= mu_reg, "clauses assume lambda >= mu; swap the arguments")
    if clause not in CLAUSES:
        raise ValueError(f"unknown clause {clause!r}")

    if clause == "A":
        _require(-1.0 <= r <= 1.0 and r != 0.0, "clause A needs r in [-1,1], r != 0")
        _require(mu_reg > 0 or r > 0, "clause A with mu = 0 needs r > 0")
        return abs(lam**r - mu_reg**r) * model.lk_power_source_norm(r) / abs(r)

    if clause == "B":
        _require(r >= 1.0, "clause B needs r >= 1")
        s_eff = r if s is None else s
        _require(1.0 <= s_eff <= r, "clause B needs 1 <= s <= r")
        return model.kappa ** (2.0 * (s_eff - 1.0)) * (lam - mu_reg) \
            * model.lk_power_source_norm(s_eff)

    if clause == "C":
        _require(r >= 0.5, "clause C needs r >= 1/2")
        return (lam - mu_reg) / lam * model.f_rho_norm_K()

    if clause == "D":
        _require(-0.5 <= r <= 1.5 and r != 0.5, "clause D needs r in [-1/2,3/2], r != 1/2")
        _require(mu_reg > 0 or r > 0.5, "clause D with mu = 0 needs r > 1/2")
        e = r - 0.5
        return abs(lam**e - mu_reg**e) * model.lk_power_source_norm(r) / abs(e)

    # clause == "E"
    _require(r >= 1.5, "clause E needs r >= 3/2")
    s_eff = r if s is None else s
    _require(1.5 <= s_eff <= r, "clause E needs 3/2 <= s <= r")
    return model.kappa ** (2.0 * (s_eff - 1.5)) * (lam - mu_reg) \
        * model.lk_power_source_norm(s_eff)


@dataclasses.dataclass(frozen=True)
class DriftCheck:
    lam: float
    mu_reg: float
    r: float
    clause: str
    measured: float
    bound: float
    passed: bool


def verify_drift_inequalities(model: SpectralModel, grid) -> list[DriftCheck]:
    """Check measured drift <= bound * (1 + slack) on (lam, mu, r, clause) entries.

    Each entry is measured in the norm its clause bounds. Range errors from
    drift_bound propagate (the grid is expected to respect clause validity).
    """
    report = []
    for lam, mu_reg, r, clause in grid:
        bound = drift_bound(model, lam, mu_reg, r, clause)
        measured = drift(model, lam, mu_reg, CLAUSE_NORM[clause])
        report.append(
            DriftCheck(
                lam=lam,
                mu_reg=mu_reg,
                r=r,
                clause=clause,
                measured=measured,
                bound=bound,
                passed=measured <= bound * (1.0 + INEQ_SLACK),
            )
        )
    return report


def valid_clauses(r: float) -> tuple[str, ...]:
    """Clauses whose validity range contains the source exponent r."""
    out = []
    if -1.0 <= r <= 1.0 and r != 0.0:
        out.append("A")
    if r >= 1.0:
        out.append("B")
    if r >= 0.5:
        out.append("C")
    if -0.5 <= r <= 1.5 and r != 0.5:
        out.append("D")
    if r >= 1.5:
        out.append("E")
    return tuple(out)


def dyadic_drift_grid(r: float, k_max: int = 10) -> list[tuple[float, float, float, str]]:
    """All (lam, mu, r, clause) with lam = 2^-j > mu = 2^-k, j < k <= k_max,
    plus the lam == mu diagonal, for every clause valid at r."""
    lams = [2.0**-k for k in range(1, k_max + 1)]
    grid = []
    for clause in valid_clauses(r):
        for i, lam in enumerate(lams):
            for mu_reg in lams[i:]:  # includes lam == mu_reg
                grid.append((lam, mu_reg, r, clause))
    return grid


# ---------------------------------------------------------------------------
# Path bounds along a lambda grid (norm bounds used as runtime invariants)


@dataclasses.dataclass(frozen=True)
class PathNormRow:
    lam: float
    norm_K: float
    norm_rho: float
    approx_err_rho: float
    approx_err_K: float
    norm_K_bound: float      # M_rho / sqrt(lam)
    norm_rho_bound: float    # M_rho
    variational_gap: float   # ||f_rho||^2 - (||f_lam - f_rho||^2 + lam ||f_lam||_K^2)
    residual: float          # ||(L_K + lam) f_lam - L_K f_rho||_rho
    ok: bool


def path_norm_report(model: SpectralModel, lambdas) -> list[PathNormRow]:
    """Evaluate the path norm bounds on a lambda grid.

    Checks, per point: ||f_lam||_K <= M_rho / sqrt(lam), ||f_lam||_rho <= M_rho,
    and the variational bound ||f_lam - f_rho||_rho^2 + lam ||f_lam||_K^2
    <= ||f_rho||_rho^2 (the regularized objective at f = 0).
    """
    rows = []
    f_rho_sq = model.f_rho_norm_rho() ** 2
    for lam in np.asarray(lambdas, dtype=float):
        pt = tikhonov_solution(model, float(lam))
        nk = norm_K(model, pt.f_lambda)
        nr = norm_rho(pt.f_lambda)
        gap = f_rho_sq - (pt.approx_err_rho**2 + lam * nk**2)
        kb = model.M_rho / np.sqrt(lam)
        ok = (
            nk <= kb * (1.0 + INEQ_SLACK)
            and nr <= model.M_rho * (1.0 + INEQ_SLACK)
            and gap >= -INEQ_SLACK * f_rho_sq
        )
        rows.append(
            PathNormRow(
                lam=float(lam),
                norm_K=nk,
                norm_rho=nr,
                approx_err_rho=pt.approx_err_rho,
                approx_err_K=pt.approx_err_K,
                norm_K_bound=float(kb),
                norm_rho_bound=model.M_rho,
                variational_gap=float(gap),
                residual=tikhonov_residual(model, pt),
                ok=bool(ok),
            )
        )
    return rows
