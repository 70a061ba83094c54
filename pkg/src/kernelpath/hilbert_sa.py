"""Stochastic approximation of a regularized root-finding path, finite-dimensional.

The abstract recursion is

    w_t = w_{t-1} - gamma_t [ (A_{z_t} + lambda_t I) w_{t-1} - b_{z_t} ],

with z_t drawn i.i.d. from a finite set, mean operator Abar = E A_z, mean
vector bbar = E b_z, and moving target wbar_t = (Abar + lambda_t I)^{-1} bbar.
This module realizes the recursion with dense matrices so the two exact
remainder decompositions (realized products, and deterministic products
plus a martingale term) can be verified to floating-point accuracy, and
the product operator-norm bound can be measured directly.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

# Multiplicative slack on inequality comparisons (rounding only).
INEQ_SLACK = 1e-12

# Relative tolerance for validating gamma_t lambda_t (t + t0) = c.
_SCHEDULE_MATCH_RTOL = 1e-9

_COND_WARN = 1e10


@dataclasses.dataclass(frozen=True)
class FiniteProblem:
    """Finite sample space: probs[z], operators A_ops[z], vectors b_vecs[z].

    Sequences are indexed by step: gamma_seq[t] and lambda_seq[t] are the
    values used at step t (gamma_seq[0] is unused; lambda_seq[0] defines
    the initial path point wbar_0). Horizon T = len(gamma_seq) - 1.
    """

    probs: np.ndarray
    A_ops: np.ndarray
    b_vecs: np.ndarray
    gamma_seq: np.ndarray
    lambda_seq: np.ndarray
    w0: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        A = np.asarray(self.A_ops, dtype=float)
        bv = np.asarray(self.b_vecs, dtype=float)
        g = np.asarray(self.gamma_seq, dtype=float)
        lam = np.asarray(self.lambda_seq, dtype=float)
        w0 = np.asarray(self.w0, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A_ops must have shape (m, d, d)")
        m, d = A.shape[0], A.shape[1]
        if probs.shape != (m,) or bv.shape != (m, d) or w0.shape != (d,):
            raise ValueError("inconsistent problem shapes")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=1e-12):
            raise ValueError("probs must be nonnegative and sum to 1")
        if not np.allclose(A, np.swapaxes(A, 1, 2), atol=1e-10):
            raise ValueError("A_ops must be symmetric")
        scale = max(float(np.abs(A).max()), 1.0)
        if min(float(np.linalg.eigvalsh(Az).min()) for Az in A) < -1e-10 * scale:
            raise ValueError("A_ops must be positive semidefinite")
        if g.shape != lam.shape or g.ndim != 1 or g.size < 1:
            raise ValueError("gamma_seq and lambda_seq must be equal-length 1-d arrays")
        if np.any(g[1:] <= 0) or np.any(lam <= 0):
            raise ValueError("step sizes and regularization must be positive")
        for name, arr in (("probs", probs), ("A_ops", A), ("b_vecs", bv),
                          ("gamma_seq", g), ("lambda_seq", lam), ("w0", w0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.A_ops.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.A_ops.shape[0]

    @property
    def horizon(self) -> int:
        return self.gamma_seq.size - 1

    def mean_operator(self) -> np.ndarray:
        return np.einsum("z,zij->ij", self.probs, self.A_ops)

    def mean_vector(self) -> np.ndarray:
        return self.probs @ self.b_vecs

    def path_point(self, t: int) -> np.ndarray:
        """wbar_t = (Abar + lambda_t I)^{-1} bbar."""
        lam = self.lambda_seq[t]
        d = self.dim
        return np.linalg.solve(self.mean_operator() + lam * np.eye(d), self.mean_vector())


@dataclasses.dataclass(frozen=True)
class TrajectoryRecord:
    problem: FiniteProblem
    draws: np.ndarray       # z_1..z_T, shape (T,)
    iterates: np.ndarray    # w_0..w_T, shape (T+1, d)
    path: np.ndarray        # wbar_0..wbar_T
    remainders: np.ndarray  # r_t = w_t - wbar_t
    condition_warning: bool

    @property
    def horizon(self) -> int:
        return self.draws.size


def iterate(problem: FiniteProblem, T: int | None = None, seed: int = 0) -> TrajectoryRecord:
    """Run the recursion from w0 and record iterates, path, remainders."""
    if T is None:
        T = problem.horizon
    if not 0 <= T <= problem.horizon:
        raise ValueError("T exceeds the schedule horizon")
    rng = np.random.default_rng(seed)
    d, m = problem.dim, problem.n_outcomes
    abar = problem.mean_operator()
    bbar = problem.mean_vector()
    eye = np.eye(d)

    draws = rng.choice(m, size=T, p=problem.probs)
    iterates = np.empty((T + 1, d))
    path = np.empty((T + 1, d))
    iterates[0] = problem.w0
    cond_warn = False
    for t in range(0, T + 1):
        reg = abar + problem.lambda_seq[t] * eye
        if np.linalg.cond(reg) > _COND_WARN:
            cond_warn = True
        path[t] = np.linalg.solve(reg, bbar)
        if t == 0:
            continue
        g = problem.gamma_seq[t]
        lam = problem.lambda_seq[t]
        z = draws[t - 1]
        w = iterates[t - 1]
        iterates[t] = w - g * ((problem.A_ops[z] + lam * eye) @ w - problem.b_vecs[z])
    return TrajectoryRecord(
        problem=problem,
        draws=draws,
        iterates=iterates,
        path=path,
        remainders=iterates - path,
        condition_warning=cond_warn,
    )


@dataclasses.dataclass(frozen=True)
class DecompositionTerms:
    """One exact remainder split r_t = init + sample_sign * sample - drift."""

    kind: str               # "reversed" or "martingale"
    s: int
    t: int
    init: np.ndarray
    sample: np.ndarray
    drift: np.ndarray
    remainder: np.ndarray
    reconstructed: np.ndarray
    rel_err: float


def _realized_op(problem: FiniteProblem, rec: TrajectoryRecord, j: int) -> np.ndarray:
    z = rec.draws[j - 1]
    return problem.A_ops[z] + problem.lambda_seq[j] * np.eye(problem.dim)


def decompose_reversed(rec: TrajectoryRecord, t: int, s: int = 0) -> DecompositionTerms:
    """Split with realized products: r_t = P_{s+1}^t r_s - sample - drift.

    P_j^t multiplies the factors (I - gamma_i (A_{z_i} + lambda_i I)) for
    i = j..t with later factors on the left. The sample term sums
    gamma_j P_{j+1}^t ((A_{z_j} + lambda_j I) wbar_j - b_{z_j}) and the
    drift term sums P_j^t (wbar_j - wbar_{j-1}).
    """
    return _decompose(rec, t, s, kind="reversed")


def decompose_martingale(rec: TrajectoryRecord, t: int, s: int = 0) -> DecompositionTerms:
    """Split with deterministic products: r_t = Pbar_{s+1}^t r_s + sample - drift.

    Pbar uses (I - gamma_i (Abar + lambda_i I)); the sample term sums
    gamma_j Pbar_{j+1}^t chi_j with the mean-zero increment
    chi_j = (Abar - A_{z_j}) w_{j-1} + (b_{z_j} - bbar).
    """
    return _decompose(rec, t, s, kind="martingale")


def _decompose(rec: TrajectoryRecord, t: int, s: int, kind: str) -> DecompositionTerms:
    problem = rec.problem
    if not 0 <= s <= t <= rec.horizon:
        raise ValueError("need 0 <= s <= t <= horizon")
    d = problem.dim
    eye = np.eye(d)
    abar = problem.mean_operator()
    bbar = problem.mean_vector()

    P = eye.copy()
    sample = np.zeros(d)
    drift = np.zeros(d)
    for j in range(t, s, -1):
        g = problem.gamma_seq[j]
        lam = problem.lambda_seq[j]
        z = rec.draws[j - 1]
        if kind == "reversed":
            op = problem.A_ops[z] + lam * eye
            inc = op @ rec.path[j] - problem.b_vecs[z]
        else:
            op = abar + lam * eye
            inc = (abar - problem.A_ops[z]) @ rec.iterates[j - 1] + (problem.b_vecs[z] - bbar)
        sample += g * (P @ inc)
        P = P @ (eye - g * op)
        drift += P @ (rec.path[j] - rec.path[j - 1])
    init = P @ rec.remainders[s]

    sign = -1.0 if kind == "reversed" else 1.0
    reconstructed = init + sign * sample - drift
    r_t = rec.remainders[t]
    diff = float(np.linalg.norm(r_t - reconstructed))
    denom = max(float(np.linalg.norm(r_t)), 1e-300)
    return DecompositionTerms(
        kind=kind, s=s, t=t, init=init, sample=sample, drift=drift,
        remainder=r_t, reconstructed=reconstructed, rel_err=diff / denom,
    )


def per_step_identity_error(rec: TrajectoryRecord) -> float:
    """Max relative error of the one-step split over the whole trajectory.

    r_t = (I - gamma_t A_t^reg) r_{t-1}
          - gamma_t (A_t^reg wbar_t - b_t) - (I - gamma_t A_t^reg) (wbar_t - wbar_{t-1}).
    """
    problem = rec.problem
    eye = np.eye(problem.dim)
    worst = 0.0
    for t in range(1, rec.horizon + 1):
        g = problem.gamma_seq[t]
        op = _realized_op(problem, rec, t)
        contract = eye - g * op
        pred = (
            contract @ rec.remainders[t - 1]
            - g * (op @ rec.path[t] - problem.b_vecs[rec.draws[t - 1]])
            - contract @ (rec.path[t] - rec.path[t - 1])
        )
        diff = float(np.linalg.norm(rec.remainders[t] - pred))
        denom = max(float(np.linalg.norm(rec.remainders[t])), 1e-300)
        worst = max(worst, diff / denom)
    return worst


@dataclasses.dataclass(frozen=True)
class ContractionCheck:
    j: int
    t: int
    measured: float         # ||P_j^t||_2 with realized factors
    product_bound: float    # prod_{i=j}^t (1 - gamma_i lambda_i)
    closed_form: float | None
    precondition_ok: bool   # gamma_i ||A_{z_i} + lambda_i I||_2 <= 1 throughout
    ok: bool


def contraction_bound_check(
    rec: TrajectoryRecord,
    j: int,
    t: int,
    c: float | None = None,
    t0: float | None = None,
) -> ContractionCheck:
    """Measure ||P_j^t|| against prod (1 - gamma_i lambda_i), optionally the closed form.

    The closed form ((j + t0) / (t + t0 + 1))^c applies when the schedule
    satisfies gamma_i lambda_i (i + t0) = c for i = j..t; passing c, t0
    for a schedule that does not is a ValueError.
    """
    problem = rec.problem
    if not 1 <= j <= t <= rec.horizon:
        raise ValueError("need 1 <= j <= t <= horizon")
    eye = np.eye(problem.dim)
    P = eye.copy()
    product = 1.0
    precondition_ok = True
    for i in range(j, t + 1):
        g = problem.gamma_seq[i]
        lam = problem.lambda_seq[i]
        op = _realized_op(problem, rec, i)
        if g * float(np.linalg.norm(op, 2)) > 1.0 + INEQ_SLACK:
            precondition_ok = False
        P = (eye - g * op) @ P
        product *= 1.0 - g * lam

    closed = None
    if c is not None or t0 is not None:
        if c is None or t0 is None:
            raise ValueError("closed form needs both c and t0")
        for i in range(j, t + 1):
            got = problem.gamma_seq[i] * problem.lambda_seq[i] * (i + t0)
            if not math.isclose(got, c, rel_tol=_SCHEDULE_MATCH_RTOL):
                raise ValueError(
                    f"schedule violates gamma_t lambda_t (t + t0) = c at t={i}: {got} != {c}"
                )
        closed = ((j + t0) / (t + t0 + 1.0)) ** c

    measured = float(np.linalg.norm(P, 2))
    ok = precondition_ok and measured <= product * (1.0 + INEQ_SLACK)
    if closed is not None:
        ok = ok and product <= closed * (1.0 + INEQ_SLACK)
    return ContractionCheck(
        j=j, t=t, measured=measured, product_bound=product,
        closed_form=closed, precondition_ok=precondition_ok, ok=ok,
    )


def make_power_law_seqs(a: float, b: float, theta: float, t0: float, T: int):
    """gamma_t = a (t + t0)^-theta, lambda_t = b (t + t0)^-(1-theta), t = 0..T."""
    tbar = np.arange(T + 1, dtype=float) + t0
    return a * tbar**-theta, b * tbar ** (theta - 1.0)


def random_problem(rng: np.random.Generator, d: int = 4, m: int = 3, T: int = 64) -> FiniteProblem:
    """A random well-posed instance: A_z = R_z R_z^T, entries uniform in [-1, 1].

    Step sizes are scaled so gamma_t ||A_z + lambda_t I|| < 1 for every
    outcome, keeping the contraction precondition valid by construction.
    """
    A = np.empty((m, d, d))
    for z in range(m):
        R = rng.uniform(-1.0, 1.0, (d, d))
        A[z] = R @ R.T
    b_vecs = rng.uniform(-1.0, 1.0, (m, d))
    probs = rng.uniform(0.2, 1.0, m)
    probs /= probs.sum()
    w0 = rng.uniform(-1.0, 1.0, d)
    gamma_seq, lambda_seq = make_power_law_seqs(1.0, 0.3, 0.7, 5.0, T)
    top = max(float(np.linalg.norm(A[z], 2)) for z in range(m)) + float(lambda_seq.max())
    gamma_seq = gamma_seq * (0.9 / (top * gamma_seq[1:].max()))
    return FiniteProblem(
        probs=probs, A_ops=A, b_vecs=b_vecs,
        gamma_seq=gamma_seq, lambda_seq=lambda_seq, w0=w0,
    )


# ---------------------------------------------------------------------------
# Convergence conditions for power-law schedules


@dataclasses.dataclass(frozen=True)
class PowerLawFamily:
    """gamma_t = a (t + t0)^-theta_gamma, lambda_t = b (t + t0)^-theta_lambda."""

    a: float
    b: float
    theta_gamma: float
    theta_lambda: float
    t0: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.t0 <= 0:
            raise ValueError("a, b, t0 must be positive")


@dataclasses.dataclass(frozen=True)
class ConditionReport:
    """Path-following conditions for a power-law schedule family.

    holds_step:  gamma_t -> 0 and sum gamma_t lambda_t diverges.
    holds_ratio: gamma_t / lambda_t -> 0.
    holds_drift: ||wbar_t - wbar_{t-1}|| / (gamma_t lambda_t) -> 0, for a
                 drift decaying like t^drift_exponent.
    evidence: numeric witnesses (partial sums, tail ratios).
    """

    holds_step: bool
    holds_ratio: bool
    holds_drift: bool
    drift_exponent: float
    evidence: dict

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.holds_step, self.holds_ratio, self.holds_drift)


def drift_exponent_for(r: float, theta: float) -> float:
    """Decay exponent of the path increment under lambda_t ~ t^-(1-theta).

    ||wbar_t - wbar_{t-1}||_K <= const * t^-((r - 1/2)(1 - theta) + 1)
    for source regularity r >= 1/2.
    """
    return -((r - 0.5) * (1.0 - theta) + 1.0)


def check_convergence_conditions(
    family: PowerLawFamily, drift_exponent: float
) -> ConditionReport:
    tg, tl = family.theta_gamma, family.theta_lambda
    holds_step = tg > 0 and tg + tl <= 1.0
    holds_ratio = tg > tl
    holds_drift = drift_exponent + tg + tl < 0

    ts = np.arange(1, 10**6 + 1, dtype=float) + family.t0
    gl = (family.a * family.b) * ts ** -(tg + tl)
    partial = float(np.cumsum(gl)[-1])
    half = float(np.cumsum(gl)[ts.size // 2 - 1])
    t_end = float(ts[-1])
    evidence = {
        "gamma_at_end": family.a * t_end**-tg,
        "sum_gl_half": half,
        "sum_gl_full": partial,
        "ratio_at_end": (family.a / family.b) * t_end ** (tl - tg),
        "drift_over_gl_at_end": t_end**drift_exponent / ((family.a * family.b) * t_end ** -(tg + tl)),
    }
    return ConditionReport(
        holds_step=holds_step,
        holds_ratio=holds_ratio,
        holds_drift=holds_drift,
        drift_exponent=drift_exponent,
        evidence=evidence,
    )
