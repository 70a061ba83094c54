"""The online recursion f_t = f_{t-1} - gamma_t [(f_{t-1}(x_t) - y_t) K_{x_t} + lambda_t f_{t-1}].

Two interchangeable representations:

* spectral: eigen-coordinates of f_t, O(N) per step; the default for long
  horizons, delegated to a compiled kernel when available (see _kernels).
* nodal: kernel expansion f_t = s * sum_i c_i K_{x_i} with a lazy global
  scale, O(t) per step; the literal realization, kept as a cross-check.

Schedules are the power-law family gamma_t = a / (t + t0)^theta,
lambda_t = b / (t + t0)^{1 - theta}, so gamma_t lambda_t (t + t0) = a b
exactly. Theorem-style precondition flags are computed when the schedule
is built with (r, kappa) context; they warn, they do not forbid a run.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import _kernels
from .spectral_model import Sample, SpectralModel, basis_matrix, norm_K, norm_rho

# Relative slack for the running-iterate norm check (rounding only).
ITERATE_BOUND_SLACK = 1e-12

# Nodal lazy scale is folded into the coefficients this often to avoid
# underflow of the running product of (1 - gamma lambda) factors.
SCALE_FOLD_INTERVAL = 1024

CHECKPOINT_START = 64
CHECKPOINT_RATIO = 2.0 ** 0.25


@dataclasses.dataclass(frozen=True)
class ScheduleFlags:
    """Which precondition sets hold for a schedule (given r and kappa).

    thmB_ok uses the stated condition t0^theta >= a kappa^2 + 1; the
    proofs recur t0^theta >= a (kappa^2 + b), kept as thmB_ok_proof (it
    also gates the per-step iterate bound, b2_ok). Both are reported.
    """

    range_ok: bool          # a < t0^theta and b < t0^{1-theta}
    thmA_ok: bool           # theta > 1/2 and r > 1/2 (path-following conditions)
    thmB_ok: bool
    thmB_ok_proof: bool
    thmC_ok: bool
    b2_ok: bool             # t0^theta >= a (kappa^2 + b): iterate bound regime


def auto_theta(r: float) -> float:
    """The rate-optimal exponent 2r / (2r + 1)."""
    return 2.0 * r / (2.0 * r + 1.0)


@dataclasses.dataclass(frozen=True)
class Schedule:
    a: float
    b: float
    theta: float
    t0: float
    r: float | None = None
    kappa: float | None = None
    flags: ScheduleFlags | None = dataclasses.field(default=None, compare=False)

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if self.flags is None and self.kappa is not None and self.r is not None:
            object.__setattr__(self, "flags", self._compute_flags())

    def _compute_flags(self) -> ScheduleFlags:
        a, b, theta, t0 = self.a, self.b, self.theta, self.t0
        r, kappa = self.r, self.kappa
        ksq = kappa * kappa
        ab_one = math.isclose(a * b, 1.0, rel_tol=1e-12)
        theta_opt = math.isclose(theta, auto_theta(r), rel_tol=1e-12)
        t0th = t0**theta
        return ScheduleFlags(
            range_ok=(a < t0th and b < t0 ** (1.0 - theta)),
            thmA_ok=(theta > 0.5 and r > 0.5),
            thmB_ok=(0.5 < r <= 1.5 and a >= 1.0 and ab_one and theta_opt
                     and t0th >= a * ksq + 1.0),
            thmB_ok_proof=(0.5 < r <= 1.5 and a >= 1.0 and ab_one and theta_opt
                           and t0th >= a * (ksq + b)),
            thmC_ok=(0.5 <= r <= 1.0 and a >= 4.0 and ab_one and theta_opt
                     and t0th >= 2.0 + 8.0 * ksq * a),
            b2_ok=(t0th >= a * (ksq + b)),
        )

    def gamma(self, t):
        return self.a * (np.asarray(t, dtype=float) + self.t0) ** -self.theta

    def lam(self, t):
        return self.b * (np.asarray(t, dtype=float) + self.t0) ** -(1.0 - self.theta)


def make_schedule(
    a: float,
    b: float,
    theta: float,
    t0: float,
    r: float | None = None,
    kappa: float | None = None,
) -> Schedule:
    return Schedule(a=a, b=b, theta=theta, t0=t0, r=r, kappa=kappa)


def schedule_values(schedule: Schedule, t: int) -> tuple[float, float]:
    """(gamma_t, lambda_t) for a step index t >= 1."""
    if t < 1:
        raise ValueError("step index must be >= 1")
    return float(schedule.gamma(t)), float(schedule.lam(t))


def minimal_t0(
    a: float,
    b: float,
    theta: float,
    kappa: float,
    r: float | None = None,
) -> int:
    """Smallest integer t0 satisfying every precondition the (r, a) regime supports.

    Always enforces the iterate-bound regime t0^theta >= a (kappa^2 + b);
    adds the K-norm theorem requirement (a kappa^2 + 1) when r in (1/2, 3/2]
    and a >= 1, and the rho-norm requirement (2 + 8 kappa^2 a) when
    r in [1/2, 1] and a >= 4. Also enforces a < t0^theta, b < t0^{1-theta}.
    """
    ksq = kappa * kappa
    req = a * (ksq + b)
    if r is not None and 0.5 < r <= 1.5 and a >= 1.0:
        req = max(req, a * ksq + 1.0)
    if r is not None and 0.5 <= r <= 1.0 and a >= 4.0:
        req = max(req, 2.0 + 8.0 * ksq * a)
    t0 = max(1, math.ceil(req ** (1.0 / theta)))
    while a >= t0**theta or (theta < 1.0 and b >= t0 ** (1.0 - theta)):
        t0 *= 2
    return t0


# ---------------------------------------------------------------------------
# Nodal representation


class NodalState:
    """f_t = scale * sum_i coeffs[i] K_{support[i]} with a lazy global scale.

    Per step the whole expansion shrinks by (1 - gamma lambda), realized by
    scaling `scale` once, and one coefficient is appended. The K-norm is
    maintained incrementally through the Gram quadratic form, reusing the
    kernel row already needed to evaluate f_{t-1}(x_t).
    """

    def __init__(self, model: SpectralModel, capacity: int = 0):
        self.model = model
        self.t = 0
        self.scale = 1.0
        cap = max(capacity, 8)
        self._xs = np.empty(cap)
        self._coeffs = np.empty(cap)
        self._phi = np.empty((cap, model.modes))
        self._q = 0.0  # coeffs^T Gram coeffs, in unscaled coordinates

    @property
    def support(self) -> np.ndarray:
        return self._xs[: self.t]

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs[: self.t]

    def _grow(self):
        cap = 2 * self._xs.size
        for name in ("_xs", "_coeffs"):
            buf = np.empty(cap)
            buf[: self.t] = getattr(self, name)[: self.t]
            setattr(self, name, buf)
        phi = np.empty((cap, self.model.modes))
        phi[: self.t] = self._phi[: self.t]
        self._phi = phi

    def fold_scale(self):
        self._coeffs[: self.t] *= self.scale
        self._q *= self.scale * self.scale
        self.scale = 1.0

    def norm_K(self) -> float:
        return abs(self.scale) * math.sqrt(max(self._q, 0.0))

    def to_spectral(self) -> np.ndarray:
        """Eigen-coordinates: a_alpha = scale * mu_alpha * sum_i c_i phi_alpha(x_i)."""
        if self.t == 0:
            return np.zeros(self.model.modes)
        proj = self._phi[: self.t].T @ self._coeffs[: self.t]
        return self.scale * self.model.mu * proj

    def eval(self, x: float) -> float:
        if self.t == 0:
            return 0.0
        weighted = self.model.mu * basis_matrix(self.model.modes, x)
        krow = self._phi[: self.t] @ weighted
        return self.scale * float(self._coeffs[: self.t] @ krow)


def step_nodal(
    state: NodalState,
    model: SpectralModel,
    sample: Sample,
    gamma: float,
    lam: float,
) -> NodalState:
    """One recursion step in the kernel expansion; O(t) per step.

    The scale multiplies by (1 - gamma lambda) and the appended coefficient
    is -gamma (f_{t-1}(x_t) - y_t) / scale_new, so the stored expansion
    realizes f_t exactly.
    """
    if gamma * lam >= 1.0:
        raise ValueError("divergent contraction: gamma * lambda >= 1")
    if model is not state.model:
        raise ValueError("state was built for a different model")
    t = state.t
    if t == state._xs.size:
        state._grow()

    phi_t = basis_matrix(model.modes, sample.x)
    weighted = model.mu * phi_t
    if t:
        krow = state._phi[:t] @ weighted
        dot_ck = float(state._coeffs[:t] @ krow)
    else:
        dot_ck = 0.0
    resid = state.scale * dot_ck - sample.y

    new_scale = state.scale * (1.0 - gamma * lam)
    c_t = -gamma * resid / new_scale
    kxx = float(phi_t @ weighted)
    state._q += 2.0 * c_t * dot_ck + c_t * c_t * kxx

    state._xs[t] = sample.x
    state._coeffs[t] = c_t
    state._phi[t] = phi_t
    state.scale = new_scale
    state.t = t + 1
    if state.t % SCALE_FOLD_INTERVAL == 0:
        state.fold_scale()
    return state


def finalize(state: NodalState) -> NodalState:
    """Fold the lazy scale so scale == 1 and coeffs are the literal weights."""
    state.fold_scale()
    return state


# ---------------------------------------------------------------------------
# Spectral representation


@dataclasses.dataclass
class SpectralState:
    coeffs: np.ndarray
    t: int = 0

    @classmethod
    def zero(cls, model: SpectralModel) -> "SpectralState":
        return cls(coeffs=np.zeros(model.modes), t=0)


def step_spectral(
    state: SpectralState,
    model: SpectralModel,
    sample: Sample,
    gamma: float,
    lam: float,
) -> SpectralState:
    """Coefficient update a <- (1 - gamma lam) a - gamma (f(x) - y) mu phi(x)."""
    if gamma * lam >= 1.0:
        raise ValueError("divergent contraction: gamma * lambda >= 1")
    if state.coeffs.shape != (model.modes,):
        raise ValueError("state does not match model mode count")
    phi = basis_matrix(model.modes, sample.x)
    resid = float(state.coeffs @ phi) - sample.y
    state.coeffs = (1.0 - gamma * lam) * state.coeffs - gamma * resid * model.mu * phi
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# Full runs


@dataclasses.dataclass
class RunTrace:
    """Per-checkpoint record of one run (plus optional error decomposition).

    The decomposition arrays follow the deterministic-product error split
    (diagonal per eigen mode): initial, approximation, drift, and sample
    error, the last both directly accumulated and recovered from the
    decomposition identity. e_* are rho-norms; e_*_K the K-norm versions.
    """

    ts: np.ndarray
    err_rho: np.ndarray
    err_K: np.ndarray
    rem_rho: np.ndarray
    rem_K: np.ndarray
    fnorm_K: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    e_init: np.ndarray | None
    e_approx: np.ndarray | None
    e_drift: np.ndarray | None
    e_samp_direct: np.ndarray | None
    e_samp_identity: np.ndarray | None
    e_init_K: np.ndarray | None
    e_approx_K: np.ndarray | None
    e_drift_K: np.ndarray | None
    e_samp_direct_K: np.ndarray | None
    e_samp_identity_K: np.ndarray | None
    iterate_bound_checked: bool
    iterate_bound_violations: int
    iterate_bound_min_margin: float
    final_coeffs: np.ndarray
    representation: str
    seed: int
    backend: str


def default_checkpoints(T: int) -> np.ndarray:
    """0, then a geometric grid (ratio 2^{1/4}) from 64 up to T, then T."""
    pts = {0}
    v = float(CHECKPOINT_START)
    while round(v) <= T:
        pts.add(int(round(v)))
        v *= CHECKPOINT_RATIO
    pts.add(T)
    return np.array(sorted(pts), dtype=np.int64)


def _validate_checkpoints(checkpoints, T: int) -> np.ndarray:
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or cps.size == 0:
        raise ValueError("checkpoints must be a nonempty 1-d sequence")
    if np.any(np.diff(cps) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    if cps[0] < 0 or cps[-1] > T:
        raise ValueError("checkpoint beyond the horizon T")
    return cps


def run(
    model: SpectralModel,
    schedule: Schedule,
    representation: str = "spectral",
    T: int = 0,
    seed: int = 0,
    checkpoints=None,
    track_decomposition: bool = False,
    check_iterate_bound: bool | None = None,
    backend: str | None = None,
) -> RunTrace:
    """Iterate T steps from f_0 = 0 and record norms at the checkpoints.

    Deterministic given the seed: draws are consumed as one block of x's
    followed by one block of noise, so nodal and spectral runs with the
    same seed see identical samples. check_iterate_bound enables the
    per-step ||f_t||_K <= kappa M_rho / lambda_t assertion (default: on
    exactly when the schedule's b2_ok flag is known to hold).
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if representation not in ("spectral", "nodal"):
        raise ValueError(f"unknown representation {representation!r}")
    if schedule.gamma(1) * schedule.lam(1) >= 1.0:
        raise ValueError("divergent contraction: gamma_1 * lambda_1 >= 1")
    cps = default_checkpoints(T) if checkpoints is None else _validate_checkpoints(checkpoints, T)
    if check_iterate_bound is None:
        check_iterate_bound = bool(schedule.flags and schedule.flags.b2_ok)

    rng = np.random.default_rng(seed)
    xs = rng.random(T)
    noise = rng.uniform(-model.noise_halfwidth, model.noise_halfwidth, T)

    if representation == "spectral":
        impl = _kernels.get_backend(backend)
        out, w, b2_violations, b2_margin = impl.run_spectral(
            np.ascontiguousarray(model.mu),
            np.ascontiguousarray(model.f_rho_coeffs),
            np.ascontiguousarray(xs),
            np.ascontiguousarray(noise),
            schedule.a,
            schedule.b,
            schedule.theta,
            schedule.t0,
            cps,
            model.kappa,
            model.M_rho,
            bool(track_decomposition),
            bool(check_iterate_bound),
        )
        backend_name = _kernels.backend_name(backend)
        col = dict(zip(_kernels.TRACE_COLUMNS, out.T))

        def tracked(name):
            return col[name] if track_decomposition else None

        return RunTrace(
            ts=cps,
            err_rho=col["err_rho"],
            err_K=col["err_K"],
            rem_rho=col["rem_rho"],
            rem_K=col["rem_K"],
            fnorm_K=col["fnorm_K"],
            gamma=col["gamma"],
            lam=col["lambda"],
            e_init=tracked("e_init"),
            e_approx=tracked("e_approx"),
            e_drift=tracked("e_drift"),
            e_samp_direct=tracked("e_samp_direct"),
            e_samp_identity=tracked("e_samp_identity"),
            e_init_K=tracked("e_init_K"),
            e_approx_K=tracked("e_approx_K"),
            e_drift_K=tracked("e_drift_K"),
            e_samp_direct_K=tracked("e_samp_direct_K"),
            e_samp_identity_K=tracked("e_samp_identity_K"),
            iterate_bound_checked=check_iterate_bound,
            iterate_bound_violations=int(b2_violations),
            iterate_bound_min_margin=float(b2_margin),
            final_coeffs=w,
            representation="spectral",
            seed=seed,
            backend=backend_name,
        )

    if track_decomposition:
        raise ValueError("error decomposition tracking needs the spectral representation")
    return _run_nodal(model, schedule, xs, noise, T, seed, cps, check_iterate_bound)


def _run_nodal(model, schedule, xs, noise, T, seed, cps, check_iterate_bound):
    state = NodalState(model, capacity=T)
    phi_all = basis_matrix(model.modes, xs) if T else np.empty((0, model.modes))
    ys = (phi_all @ model.f_rho_coeffs + noise) if T else noise

    n_cp = cps.size
    cols = {
        name: np.empty(n_cp)
        for name in ("err_rho", "err_K", "rem_rho", "rem_K", "fnorm_K", "gamma", "lam")
    }
    violations = 0
    min_margin = math.inf
    cp_idx = 0

    def record(t):
        nonlocal cp_idx
        w = state.to_spectral()
        lam_t = float(schedule.lam(t))
        diff = w - model.f_rho_coeffs
        f_lam = model.f_rho_coeffs * model.mu / (model.mu + lam_t)
        rem = w - f_lam
        cols["err_rho"][cp_idx] = norm_rho(diff)
        cols["err_K"][cp_idx] = norm_K(model, diff)
        cols["rem_rho"][cp_idx] = norm_rho(rem)
        cols["rem_K"][cp_idx] = norm_K(model, rem)
        cols["fnorm_K"][cp_idx] = state.norm_K()
        cols["gamma"][cp_idx] = float(schedule.gamma(t))
        cols["lam"][cp_idx] = lam_t
        cp_idx += 1

    if cps[0] == 0:
        record(0)
    for t in range(1, T + 1):
        gamma_t, lam_t = float(schedule.gamma(t)), float(schedule.lam(t))
        step_nodal(state, model, Sample(float(xs[t - 1]), float(ys[t - 1])), gamma_t, lam_t)
        if check_iterate_bound:
            bound = model.kappa * model.M_rho / lam_t
            margin = bound - state.norm_K()
            min_margin = min(min_margin, margin)
            if margin < -ITERATE_BOUND_SLACK * bound:
                violations += 1
        if cp_idx < n_cp and t == cps[cp_idx]:
            record(t)

    return RunTrace(
        ts=cps,
        err_rho=cols["err_rho"],
        err_K=cols["err_K"],
        rem_rho=cols["rem_rho"],
        rem_K=cols["rem_K"],
        fnorm_K=cols["fnorm_K"],
        gamma=cols["gamma"],
        lam=cols["lam"],
        e_init=None,
        e_approx=None,
        e_drift=None,
        e_samp_direct=None,
        e_samp_identity=None,
        e_init_K=None,
        e_approx_K=None,
        e_drift_K=None,
        e_samp_direct_K=None,
        e_samp_identity_K=None,
        iterate_bound_checked=check_iterate_bound,
        iterate_bound_violations=violations,
        iterate_bound_min_margin=float(min_margin) if check_iterate_bound else math.nan,
        final_coeffs=state.to_spectral(),
        representation="nodal",
        seed=seed,
        backend="python",
    )
