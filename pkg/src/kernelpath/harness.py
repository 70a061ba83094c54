"""Replicated-run orchestration: error decomposition, bound evaluation, rate fits.

Runs R seeded replicates of the online recursion (parallel across
replicates), aggregates per-checkpoint medians and high-probability
quantiles, evaluates the two finite-sample bound expressions, fits
log-log convergence rates, and writes the CSV artifacts.

Aggregation policy: medians feed the rate fits (robust), the
(1-delta)-quantile feeds the bound checks, because the bounds being
checked are high-probability statements.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .online_learner import RunTrace, Schedule, default_checkpoints, run
from .spectral_model import SpectralModel

# Inequality slack absorbing floating-point rounding only.
TRIANGLE_SLACK = 1e-9

# E_init / E_approx / E_drift are deterministic given model + schedule;
# replicate spread beyond this is a bug, not randomness.
DETERMINISTIC_SPREAD_TOL = 1e-9

# Direct vs identity-based sample error; see the decomposition identity.
IDENTITY_REL_TOL = 1e-8

_FLOAT_FMT = "{:.17g}"

TRACE_CSV_COLUMNS = (
    "t", "err_rho", "err_K", "rem_rho", "rem_K",
    "E_init", "E_approx", "E_drift", "E_samp", "gamma", "lambda",
)
RUN_CSV_COLUMNS = (
    "t", "err_rho", "err_K", "rem_rho", "rem_K", "fnorm_K", "gamma", "lambda",
)
SUMMARY_CSV_COLUMNS = (
    "t", "median_err_rho", "q_err_rho", "median_err_K",
    "bound_B", "bound_C", "E_init", "E_approx", "E_drift", "E_samp",
)


def _fmt(x) -> str:
    return _FLOAT_FMT.format(float(x))


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    model: SpectralModel
    schedule: Schedule
    T: int
    replicates: int
    base_seed: int = 0
    representation: str = "spectral"
    checkpoints: np.ndarray | None = None
    delta: float = 0.1
    threads: int | None = None
    track_decomposition: bool = True
    window: tuple[float, float] | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")


def replicate_seeds(base_seed: int, count: int) -> list[int]:
    """Deterministic per-replicate integer seeds derived from one base seed."""
    return [int(s) for s in np.random.SeedSequence(base_seed).generate_state(count, np.uint64)]


# ---------------------------------------------------------------------------
# Bound expressions


@dataclasses.dataclass(frozen=True)
class BoundReport:
    theorem: str
    t: int
    delta: float
    constants: dict
    parts: dict
    value: float
    regime_ok: bool
    measured_quantile: float | None = None
    holds: bool | None = None

    def dominant_term(self) -> str:
        return max(self.parts, key=lambda k: self.parts[k])


def _theta_matches(schedule: Schedule, r: float) -> bool:
    return math.isclose(schedule.theta, 2.0 * r / (2.0 * r + 1.0), rel_tol=1e-12)


def _ab_is_one(schedule: Schedule) -> bool:
    return math.isclose(schedule.a * schedule.b, 1.0, rel_tol=1e-12)


def theorem_b_bound(
    model: SpectralModel,
    schedule: Schedule,
    t: int,
    delta: float,
    measured_quantile: float | None = None,
) -> BoundReport:
    """K-norm bound C_0/tbar + (C_1 a^{1/2-r} log(2/delta) + C_2 a) tbar^{-(2r-1)/(4r+2)}.

    C_0 = 2 t0^{(4r+3)/(4r+2)} M_rho, C_1 = (20r-2)/((2r-1)(2r+3)) ||L^-r f||,
    C_2 = 20 (kappa+1)^2 M_rho / kappa. Regime: r in (1/2, 3/2], a >= 1,
    ab = 1, theta = 2r/(2r+1), t0^theta >= a kappa^2 + 1.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    r = model.regularity_r
    a, t0 = schedule.a, schedule.t0
    kappa, m_rho = model.kappa, model.M_rho
    tbar = t + t0
    exponent = (2.0 * r - 1.0) / (4.0 * r + 2.0)
    c0 = 2.0 * t0 ** ((4.0 * r + 3.0) / (4.0 * r + 2.0)) * m_rho
    if r > 0.5:
        c1 = (20.0 * r - 2.0) / ((2.0 * r - 1.0) * (2.0 * r + 3.0)) * model.lk_power_source_norm(r)
    else:
        c1 = math.inf
    c2 = 20.0 * (kappa + 1.0) ** 2 * m_rho / kappa
    init_term = c0 / tbar
    main_term = (c1 * a ** (0.5 - r) * math.log(2.0 / delta) + c2 * a) * tbar**-exponent
    value = init_term + main_term
    regime_ok = (
        0.5 < r <= 1.5
        and a >= 1.0
        and _ab_is_one(schedule)
        and _theta_matches(schedule, r)
        and t0**schedule.theta >= a * kappa**2 + 1.0
    )
    holds = None if measured_quantile is None else bool(measured_quantile < value)
    return BoundReport(
        theorem="B",
        t=t,
        delta=delta,
        constants={"C0": c0, "C1": c1, "C2": c2, "exponent": exponent},
        parts={"init": init_term, "main": main_term},
        value=value,
        regime_ok=regime_ok,
        measured_quantile=measured_quantile,
        holds=holds,
    )


def theorem_c_bound(
    model: SpectralModel,
    schedule: Schedule,
    t: int,
    delta: float,
    measured_quantile: float | None = None,
) -> BoundReport:
    """rho-norm bound D_0/tbar + (D_1 a^-r + sqrt(a) D_2 log(2/delta)) tbar^{-r/(2r+1)}
    + (a^{3/2} D_3 sqrt(log tbar) + a^{5/2} D_4) log(2/delta)^2 tbar^{-(4r-1)/(4r+2)}.

    D_0 = 2 M_rho t0, D_1 = (5r+1)/(r(1+r)) ||L^-r f||, D_2 = 10 kappa M_rho,
    D_3 = 63 kappa^2 M_rho, D_4 = 50 kappa^2 M_rho t0^{1/2-theta}. Regime:
    r in [1/2, 1], a >= 4, ab = 1, theta = 2r/(2r+1), t0^theta >= 2 + 8 kappa^2 a.
    The statement's third exponent (4r-1)/(4r+2) is used; the alternative
    (6r-1)/(4r+2) appearing in one proof display is recorded alongside.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    r = model.regularity_r
    a, t0, theta = schedule.a, schedule.t0, schedule.theta
    kappa, m_rho = model.kappa, model.M_rho
    tbar = t + t0
    main_exp = r / (2.0 * r + 1.0)
    third_exp = (4.0 * r - 1.0) / (4.0 * r + 2.0)
    d0 = 2.0 * m_rho * t0
    d1 = (5.0 * r + 1.0) / (r * (1.0 + r)) * model.lk_power_source_norm(r)
    d2 = 10.0 * kappa * m_rho
    d3 = 63.0 * kappa**2 * m_rho
    d4 = 50.0 * kappa**2 * m_rho * t0 ** (0.5 - theta)
    log_d = math.log(2.0 / delta)
    init_term = d0 / tbar
    main_term = (d1 * a**-r + math.sqrt(a) * d2 * log_d) * tbar**-main_exp
    third_term = (
        (a**1.5 * d3 * math.sqrt(math.log(tbar)) + a**2.5 * d4) * log_d**2 * tbar**-third_exp
    )
    value = init_term + main_term + third_term
    regime_ok = (
        0.5 <= r <= 1.0
        and a >= 4.0
        and _ab_is_one(schedule)
        and _theta_matches(schedule, r)
        and t0**theta >= 2.0 + 8.0 * kappa**2 * a
    )
    holds = None if measured_quantile is None else bool(measured_quantile < value)
    return BoundReport(
        theorem="C",
        t=t,
        delta=delta,
        constants={
            "D0": d0, "D1": d1, "D2": d2, "D3": d3, "D4": d4,
            "main_exponent": main_exp,
            "third_exponent": third_exp,
            "third_exponent_alt": (6.0 * r - 1.0) / (4.0 * r + 2.0),
        },
        parts={"init": init_term, "main": main_term, "third": third_term},
        value=value,
        regime_ok=regime_ok,
        measured_quantile=measured_quantile,
        holds=holds,
    )


# ---------------------------------------------------------------------------
# Rate fitting


@dataclasses.dataclass(frozen=True)
class RateFit:
    window: tuple[float, float]
    slope: float
    intercept: float
    residual_rms: float
    theoretical_slope: float
    n_points: int


def fit_rate(points, window, theoretical_slope: float = math.nan) -> RateFit:
    """OLS of log(err) on log(t) over t in [window[0], window[1]].

    points: iterable of (t, err). Needs >= 4 in-window points, all errors
    positive.
    """
    lo, hi = window
    ts, errs = [], []
    for t, e in points:
        if t > 0 and lo <= t <= hi:
            ts.append(float(t))
            errs.append(float(e))
    if len(ts) < 4:
        raise ValueError(f"rate fit needs >= 4 points in window, got {len(ts)}")
    errs = np.asarray(errs)
    if np.any(errs <= 0):
        raise ValueError("rate fit needs positive error values")
    logt = np.log(np.asarray(ts))
    loge = np.log(errs)
    slope, intercept = np.polyfit(logt, loge, 1)
    resid = loge - (slope * logt + intercept)
    return RateFit(
        window=(float(lo), float(hi)),
        slope=float(slope),
        intercept=float(intercept),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        theoretical_slope=float(theoretical_slope),
        n_points=len(ts),
    )


def default_window(checkpoints) -> tuple[float, float]:
    """Top half of the checkpoints in log t, excluding burn-in."""
    cps = np.asarray(checkpoints)
    pos = cps[cps > 0]
    if pos.size == 0:
        raise ValueError("no positive checkpoints")
    lo = math.sqrt(float(pos[0]) * float(pos[-1]))
    return (lo, float(pos[-1]))


# ---------------------------------------------------------------------------
# Decomposition access


def decompose_errors(
    model: SpectralModel,
    schedule: Schedule,
    trace: RunTrace,
    t: int,
    norm: str = "rho",
):
    """(E_init, E_approx, E_drift, E_samp) at checkpoint t from a tracked run.

    E_samp is recovered through the decomposition identity and
    cross-checked against the direct accumulation; a mismatch beyond
    1e-6 relative signals an implementation fault and raises.
    """
    if trace.e_init is None:
        raise ValueError("run was recorded without decomposition tracking")
    if norm not in ("rho", "K"):
        raise ValueError(f"unknown norm {norm!r}")
    idx = np.nonzero(trace.ts == t)[0]
    if idx.size == 0:
        raise ValueError(f"t={t} is not a checkpoint of this trace")
    i = int(idx[0])
    if norm == "K":
        ksq = model.kappa**2
        if schedule.t0**schedule.theta < schedule.a * (ksq + schedule.b):
            import warnings

            warnings.warn(
                "K-norm decomposition outside the iterate-bound regime "
                "(t0^theta < a (kappa^2 + b)); values are exact but the "
                "norm-bound interpretation does not apply",
                RuntimeWarning,
                stacklevel=2,
            )
        e_init, e_approx, e_drift = trace.e_init_K[i], trace.e_approx_K[i], trace.e_drift_K[i]
        direct, ident = trace.e_samp_direct_K[i], trace.e_samp_identity_K[i]
    else:
        e_init, e_approx, e_drift = trace.e_init[i], trace.e_approx[i], trace.e_drift[i]
        direct, ident = trace.e_samp_direct[i], trace.e_samp_identity[i]
    scale = max(abs(direct), abs(ident))
    if scale > 1e-13 and abs(direct - ident) / scale > 1e-6:
        raise RuntimeError(
            f"sample-error identity mismatch at t={t}: direct {direct} vs identity {ident}"
        )
    return float(e_init), float(e_approx), float(e_drift), float(ident)


# ---------------------------------------------------------------------------
# Replicated experiments


@dataclasses.dataclass(frozen=True)
class ConsistencyChecks:
    """Per-experiment invariant results collected across all replicates."""

    identity_max_rel: float          # direct vs identity E_samp, worst case
    deterministic_max_spread: float  # E_init/E_approx/E_drift across replicates
    triangle_min_margin: float       # min of E_init+E_drift+E_samp - rem (slacked)
    triangle_ok: bool
    iterate_bound_violations: int
    identity_ok: bool
    deterministic_ok: bool

    def all_ok(self) -> bool:
        return (
            self.identity_ok
            and self.deterministic_ok
            and self.triangle_ok
            and self.iterate_bound_violations == 0
        )


@dataclasses.dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    seeds: list[int]
    checkpoints: np.ndarray
    traces: list[RunTrace]
    median_err_rho: np.ndarray
    q_err_rho: np.ndarray
    median_err_K: np.ndarray
    q_err_K: np.ndarray
    e_init: np.ndarray | None
    e_approx: np.ndarray | None
    e_drift: np.ndarray | None
    e_samp_median: np.ndarray | None
    bound_b: list[BoundReport]
    bound_c: list[BoundReport]
    fit_rho: RateFit | None
    fit_K: RateFit | None
    checks: ConsistencyChecks

    def bound_values(self, theorem: str) -> np.ndarray:
        reports = self.bound_b if theorem == "B" else self.bound_c
        return np.array([rep.value for rep in reports])


def run_replicates(cfg: ExperimentConfig, outdir: str | None = None) -> ExperimentResult:
    """Run R replicates, aggregate, and (optionally) write artifacts to outdir.

    Deterministic given cfg.base_seed: replicate seeds are derived once
    and each replicate's draw stream depends only on its seed, so thread
    scheduling cannot change any output byte. On failure, partial traces
    plus a FAILED.txt note are persisted when outdir is given.
    """
    cps = (
        default_checkpoints(cfg.T)
        if cfg.checkpoints is None
        else np.asarray(cfg.checkpoints, dtype=np.int64)
    )
    seeds = replicate_seeds(cfg.base_seed, cfg.replicates)
    threads = cfg.threads or os.cpu_count() or 1

    def one(seed: int) -> RunTrace:
        return run(
            cfg.model,
            cfg.schedule,
            representation=cfg.representation,
            T=cfg.T,
            seed=seed,
            checkpoints=cps,
            track_decomposition=cfg.track_decomposition,
        )

    traces: list[RunTrace] = []
    try:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(one, seeds))
    except Exception as exc:
        if outdir is not None:
            _persist_failure(outdir, seeds, traces, exc)
        raise

    result = _aggregate(cfg, seeds, cps, traces)
    if outdir is not None:
        write_artifacts(result, outdir)
    return result


def _aggregate(cfg, seeds, cps, traces) -> ExperimentResult:
    q = 1.0 - cfg.delta
    err_rho = np.stack([tr.err_rho for tr in traces])
    err_k = np.stack([tr.err_K for tr in traces])
    rem_rho = np.stack([tr.rem_rho for tr in traces])
    median_err_rho = np.median(err_rho, axis=0)
    q_err_rho = np.quantile(err_rho, q, axis=0)
    median_err_k = np.median(err_k, axis=0)
    q_err_k = np.quantile(err_k, q, axis=0)

    tracked = cfg.track_decomposition
    identity_max_rel = 0.0
    det_spread = 0.0
    tri_min = math.inf
    if tracked:
        e_init_all = np.stack([tr.e_init for tr in traces])
        e_approx_all = np.stack([tr.e_approx for tr in traces])
        e_drift_all = np.stack([tr.e_drift for tr in traces])
        e_samp_all = np.stack([tr.e_samp_direct for tr in traces])
        e_ident_all = np.stack([tr.e_samp_identity for tr in traces])

        for arr in (e_init_all, e_approx_all, e_drift_all):
            spread = np.max(np.abs(arr - arr[0]), initial=0.0)
            scale = max(float(np.max(np.abs(arr), initial=0.0)), 1e-300)
            det_spread = max(det_spread, float(spread) / scale)

        scale = np.maximum(np.maximum(e_samp_all, e_ident_all), 1e-300)
        rel = np.abs(e_samp_all - e_ident_all) / scale
        rel[np.maximum(e_samp_all, e_ident_all) <= 1e-13] = 0.0
        identity_max_rel = float(rel.max(initial=0.0))

        tri = (e_init_all + e_drift_all + e_samp_all) * (1.0 + TRIANGLE_SLACK) - rem_rho
        tri_min = float(tri.min(initial=math.inf))

        e_init = e_init_all[0]
        e_approx = e_approx_all[0]
        e_drift = e_drift_all[0]
        e_samp_median = np.median(e_samp_all, axis=0)
    else:
        e_init = e_approx = e_drift = e_samp_median = None

    b2_total = sum(tr.iterate_bound_violations for tr in traces if tr.iterate_bound_checked)
    checks = ConsistencyChecks(
        identity_max_rel=identity_max_rel,
        deterministic_max_spread=det_spread,
        triangle_min_margin=tri_min if tracked else math.nan,
        triangle_ok=(not tracked) or tri_min >= 0.0,
        iterate_bound_violations=b2_total,
        identity_ok=(not tracked) or identity_max_rel <= IDENTITY_REL_TOL,
        deterministic_ok=(not tracked) or det_spread <= DETERMINISTIC_SPREAD_TOL,
    )

    bound_b = [
        theorem_b_bound(cfg.model, cfg.schedule, int(t), cfg.delta, measured_quantile=float(mq))
        for t, mq in zip(cps, q_err_k)
    ]
    bound_c = [
        theorem_c_bound(cfg.model, cfg.schedule, int(t), cfg.delta, measured_quantile=float(mq))
        for t, mq in zip(cps, q_err_rho)
    ]

    r = cfg.model.regularity_r
    window = cfg.window if cfg.window is not None else None
    fit_rho = fit_k = None
    try:
        win = window or default_window(cps)
        fit_rho = fit_rate(
            zip(cps, median_err_rho), win, theoretical_slope=-r / (2.0 * r + 1.0)
        )
        fit_k = fit_rate(
            zip(cps, median_err_k), win,
            theoretical_slope=-(2.0 * r - 1.0) / (4.0 * r + 2.0),
        )
    except ValueError:
        pass  # short horizons have no fittable window

    return ExperimentResult(
        config=cfg,
        seeds=seeds,
        checkpoints=cps,
        traces=traces,
        median_err_rho=median_err_rho,
        q_err_rho=q_err_rho,
        median_err_K=median_err_k,
        q_err_K=q_err_k,
        e_init=e_init,
        e_approx=e_approx,
        e_drift=e_drift,
        e_samp_median=e_samp_median,
        bound_b=bound_b,
        bound_c=bound_c,
        fit_rho=fit_rho,
        fit_K=fit_k,
        checks=checks,
    )


# ---------------------------------------------------------------------------
# Artifact writing (17 significant digits for bit-stable diffs)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_run_csv(path, trace: RunTrace) -> None:
    """The simulate-facing trace: t, errors, remainders, K-norm, schedule."""
    rows = (
        [str(int(t))] + [_fmt(v) for v in vals]
        for t, *vals in zip(
            trace.ts, trace.err_rho, trace.err_K, trace.rem_rho,
            trace.rem_K, trace.fnorm_K, trace.gamma, trace.lam,
        )
    )
    _write_csv(path, RUN_CSV_COLUMNS, rows)


def write_trace_csv(path, trace: RunTrace) -> None:
    """The harness-facing trace including the error decomposition columns."""
    n = trace.ts.size
    nan = np.full(n, np.nan)
    e_init = trace.e_init if trace.e_init is not None else nan
    e_approx = trace.e_approx if trace.e_approx is not None else nan
    e_drift = trace.e_drift if trace.e_drift is not None else nan
    e_samp = trace.e_samp_direct if trace.e_samp_direct is not None else nan
    rows = (
        [str(int(t))] + [_fmt(v) for v in vals]
        for t, *vals in zip(
            trace.ts, trace.err_rho, trace.err_K, trace.rem_rho, trace.rem_K,
            e_init, e_approx, e_drift, e_samp, trace.gamma, trace.lam,
        )
    )
    _write_csv(path, TRACE_CSV_COLUMNS, rows)


def write_summary_csv(path, result: ExperimentResult) -> None:
    n = result.checkpoints.size
    nan = np.full(n, np.nan)
    e_init = result.e_init if result.e_init is not None else nan
    e_approx = result.e_approx if result.e_approx is not None else nan
    e_drift = result.e_drift if result.e_drift is not None else nan
    e_samp = result.e_samp_median if result.e_samp_median is not None else nan
    rows = (
        [str(int(t))] + [_fmt(v) for v in vals]
        for t, *vals in zip(
            result.checkpoints,
            result.median_err_rho, result.q_err_rho, result.median_err_K,
            result.bound_values("B"), result.bound_values("C"),
            e_init, e_approx, e_drift, e_samp,
        )
    )
    _write_csv(path, SUMMARY_CSV_COLUMNS, rows)


def write_ratefit(path, result: ExperimentResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label, fit in (("rho", result.fit_rho), ("K", result.fit_K)):
            fh.write(f"norm = {label}\n")
            if fit is None:
                fh.write("fit = unavailable (too few checkpoints in window)\n\n")
                continue
            fh.write(f"window = [{_fmt(fit.window[0])}, {_fmt(fit.window[1])}]\n")
            fh.write(f"n_points = {fit.n_points}\n")
            fh.write(f"slope = {_fmt(fit.slope)}\n")
            fh.write(f"intercept = {_fmt(fit.intercept)}\n")
            fh.write(f"residual_rms = {_fmt(fit.residual_rms)}\n")
            fh.write(f"theoretical_slope = {_fmt(fit.theoretical_slope)}\n\n")


def write_artifacts(result: ExperimentResult, outdir: str) -> None:
    os.makedirs(outdir, exist_ok=True)
    tdir = os.path.join(outdir, "traces")
    os.makedirs(tdir, exist_ok=True)
    for seed, trace in zip(result.seeds, result.traces):
        write_trace_csv(os.path.join(tdir, f"{seed}.csv"), trace)
    write_summary_csv(os.path.join(outdir, "summary.csv"), result)
    write_ratefit(os.path.join(outdir, "ratefit.txt"), result)


def _persist_failure(outdir, seeds, traces, exc) -> None:
    os.makedirs(outdir, exist_ok=True)
    tdir = os.path.join(outdir, "traces")
    os.makedirs(tdir, exist_ok=True)
    for seed, trace in zip(seeds, traces):
        write_trace_csv(os.path.join(tdir, f"{seed}.csv"), trace)
    with open(os.path.join(outdir, "FAILED.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"run failed after {len(traces)}/{len(seeds)} replicates\n")
        fh.write(f"error: {exc!r}\n")
