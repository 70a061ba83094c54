"""Command-line front end: simulate | path | verify-drift | verify-decomp | bounds | coverage | rates.

Exit status contract: 0 success, 1 verification failure (an inequality
or identity check did not hold), 2 usage error (bad flags, bad config,
out-of-range requests). Every run writes a manifest.txt echoing the
fully-resolved configuration into its output directory; re-running with
that manifest reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import _kernels, concentration, config as cfgmod, harness, hilbert_sa, reg_path
from .online_learner import run
from .spectral_model import make_power_law_model

_FMT = "{:.17g}".format


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _load_values(args, overrides):
    file_values = cfgmod.parse_config_file(args.config) if args.config else None
    return cfgmod.resolve(file_values, overrides)


def _outdir(args) -> str:
    out = getattr(args, "out", None) or cfgmod.default_outdir()
    os.makedirs(out, exist_ok=True)
    return out


def _manifest(outdir, vals, command, extras=()):
    comments = [f"command = {command}"]
    comments += [f"{k} = {v}" for k, v in extras]
    comments.append(f"backend = {_kernels.BACKEND}")
    cfgmod.write_manifest(outdir, vals, comments)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_simulate(args) -> int:
    overrides = {
        "r": args.r, "theta": args.theta, "a": args.a, "b": args.b,
        "t0": args.t0, "T": args.T, "seed": args.seed,
        "representation": args.rep,
    }
    vals = _load_values(args, overrides)
    model, schedule, vals = cfgmod.build_model_schedule(vals)
    trace = run(
        model,
        schedule,
        representation=vals["representation"],
        T=vals["T"],
        seed=vals["seed"],
    )
    out_file = args.out or os.path.join(cfgmod.default_outdir(), "trace.csv")
    outdir = os.path.dirname(out_file) or "."
    os.makedirs(outdir, exist_ok=True)
    harness.write_run_csv(out_file, trace)
    _manifest(outdir, vals, "simulate", [("trace", os.path.basename(out_file))])
    if trace.iterate_bound_checked:
        print(
            f"simulate: T={vals['T']} rep={vals['representation']} "
            f"iterate-bound violations={trace.iterate_bound_violations} "
            f"min margin={trace.iterate_bound_min_margin:.6g}"
        )
        if trace.iterate_bound_violations > 0:
            print("simulate: running iterate bound violated", file=sys.stderr)
            return 1
    else:
        print(f"simulate: T={vals['T']} rep={vals['representation']} (iterate bound not in regime)")
    print(f"simulate: wrote {out_file}")
    return 0


def _cmd_path(args) -> int:
    vals = _load_values(args, {})
    model, _schedule, vals = cfgmod.build_model_schedule(vals)
    if args.lambda_min <= 0 or args.lambda_max <= args.lambda_min:
        raise cfgmod.ConfigError("need 0 < lambda-min < lambda-max")
    if args.num < 2:
        raise cfgmod.ConfigError("need at least 2 grid points")
    lambdas = np.geomspace(args.lambda_min, args.lambda_max, args.num)
    rows = reg_path.path_norm_report(model, lambdas)
    outdir = _outdir(args)
    _write_csv(
        os.path.join(outdir, "path.csv"),
        ("lambda", "norm_K", "norm_rho", "approx_err_rho", "approx_err_K"),
        (
            [_FMT(r.lam), _FMT(r.norm_K), _FMT(r.norm_rho), _FMT(r.approx_err_rho), _FMT(r.approx_err_K)]
            for r in rows
        ),
    )
    _manifest(outdir, vals, "path", [
        ("lambda_min", args.lambda_min), ("lambda_max", args.lambda_max), ("num", args.num),
    ])
    bad = [r for r in rows if not r.ok]
    print(f"path: {len(rows)} grid points, {len(bad)} bound/residual failures")
    return 1 if bad else 0


def _cmd_verify_drift(args) -> int:
    vals = _load_values(args, {})
    r_values = [float(s) for s in args.r_values.split(",") if s.strip()]
    if not r_values:
        raise cfgmod.ConfigError("need at least one r value")
    requested = None
    if args.clauses:
        requested = [c.strip().upper() for c in args.clauses.split(",") if c.strip()]
        for c in requested:
            if c not in reg_path.CLAUSES:
                raise cfgmod.ConfigError(f"unknown clause {c!r}; valid: {reg_path.CLAUSES}")

    all_checks = []
    for r in r_values:
        valid = reg_path.valid_clauses(r)
        if requested is not None:
            out_of_range = [c for c in requested if c not in valid]
            if out_of_range:
                raise cfgmod.ConfigError(
                    f"clause(s) {out_of_range} out of validity range for r={r}; valid: {valid}"
                )
        model = make_power_law_model(
            modes=vals["modes"],
            mu_decay=vals["mu_decay"],
            source_decay=vals["source_decay"],
            regularity_r=r,
            noise_halfwidth=vals["sigma"],
        )
        grid = reg_path.dyadic_drift_grid(r, k_max=args.k_max)
        if requested is not None:
            grid = [g for g in grid if g[3] in requested]
        all_checks.extend(reg_path.verify_drift_inequalities(model, grid))

    outdir = _outdir(args)
    _write_csv(
        os.path.join(outdir, "drift.csv"),
        ("lambda", "mu", "r", "clause", "measured", "bound", "pass"),
        (
            [_FMT(c.lam), _FMT(c.mu_reg), _FMT(c.r), c.clause, _FMT(c.measured), _FMT(c.bound),
             str(int(c.passed))]
            for c in all_checks
        ),
    )
    _manifest(outdir, vals, "verify-drift", [
        ("r_values", args.r_values), ("k_max", args.k_max), ("clauses", args.clauses or "per-validity"),
    ])
    failures = [c for c in all_checks if not c.passed]
    print(f"verify-drift: {len(all_checks)} checks, {len(failures)} failures")
    return 1 if failures else 0


def _cmd_verify_decomp(args) -> int:
    if args.dim < 1 or args.outcomes < 1 or args.T < 1 or args.trials < 1:
        raise cfgmod.ConfigError("dim, outcomes, T, trials must all be >= 1")
    rows = []
    worst_rel = 0.0
    min_margin = math.inf
    base = np.random.SeedSequence(args.seed)
    for trial, child in enumerate(base.spawn(args.trials)):
        rng = np.random.default_rng(child)
        problem = hilbert_sa.random_problem(rng, d=args.dim, m=args.outcomes, T=args.T)
        rec = hilbert_sa.iterate(problem, seed=args.seed + 1000 * trial + 1)
        for t in sorted({max(1, args.T // 4), max(1, args.T // 2), args.T}):
            rev = hilbert_sa.decompose_reversed(rec, t)
            mart = hilbert_sa.decompose_martingale(rec, t)
            check = hilbert_sa.contraction_bound_check(rec, 1, t)
            margin = check.product_bound - check.measured
            worst_rel = max(worst_rel, rev.rel_err, mart.rel_err)
            min_margin = min(min_margin, margin)
            rows.append([
                str(trial), str(t), _FMT(rev.rel_err), _FMT(mart.rel_err), _FMT(margin),
            ])
    outdir = _outdir(args)
    _write_csv(
        os.path.join(outdir, "decomp.csv"),
        ("trial", "t", "reversed_rel_err", "martingale_rel_err", "pi_bound_margin"),
        rows,
    )
    vals = cfgmod.resolve(None, {"seed": args.seed})
    _manifest(outdir, vals, "verify-decomp", [
        ("dim", args.dim), ("outcomes", args.outcomes), ("T", args.T), ("trials", args.trials),
    ])
    ok = worst_rel <= 1e-10 and min_margin >= -1e-12
    print(
        f"verify-decomp: {len(rows)} identity checks, worst rel err {worst_rel:.3e}, "
        f"min product-bound margin {min_margin:.3e}"
    )
    return 0 if ok else 1


def _cmd_bounds(args) -> int:
    if args.eps_min <= 0 or args.eps_max <= args.eps_min:
        raise cfgmod.ConfigError("need 0 < eps-min < eps-max")
    if args.num < 1:
        raise cfgmod.ConfigError("need at least 1 grid point")
    if not 0.0 < args.delta < 1.0:
        raise cfgmod.ConfigError("delta must lie in (0, 1)")
    if args.M <= 0 or args.sigma <= 0:
        raise cfgmod.ConfigError("M and sigma must be positive")
    eps_grid = np.geomspace(args.eps_min, args.eps_max, args.num)
    sigma_sq = args.sigma**2
    rows = []
    violations = 0
    for eps in eps_grid:
        be = concentration.bennett_tail(args.M, sigma_sq, float(eps))
        bs = concentration.bernstein_tail(args.M, sigma_sq, float(eps))
        if be > bs * (1.0 + 1e-12):
            violations += 1
        rows.append([_FMT(eps), _FMT(be), _FMT(bs)])
    outdir = _outdir(args)
    _write_csv(os.path.join(outdir, "bounds.csv"), ("eps", "bennett", "bernstein"), rows)
    vals = cfgmod.resolve(None, {"delta": args.delta})
    _manifest(outdir, vals, "bounds", [
        ("M", args.M), ("sigma", args.sigma),
        ("eps_min", args.eps_min), ("eps_max", args.eps_max), ("num", args.num),
    ])
    radius = concentration.high_prob_radius(args.M, args.sigma, args.delta)
    print(f"bounds: {args.num} grid points, radius(delta={args.delta}) = {radius:.6g}")
    if violations:
        print(f"bounds: bennett > bernstein at {violations} points", file=sys.stderr)
        return 1
    return 0


def _cmd_coverage(args) -> int:
    if args.generator == "rademacher":
        spec = concentration.rademacher_spec(args.scale)
    elif args.generator == "sphere":
        spec = concentration.sphere_spec(args.dim, args.scale)
    else:
        raise cfgmod.ConfigError(f"unknown generator {args.generator!r}")
    res = concentration.coverage_test(spec, args.t, args.delta, args.paths, seed=args.seed)
    outdir = _outdir(args)
    _write_csv(
        os.path.join(outdir, "coverage.csv"),
        ("generator", "t", "delta", "n_paths", "radius", "violations", "rate", "upper_cl"),
        [[res.spec_name, str(res.t), _FMT(res.delta), str(res.n_paths), _FMT(res.radius),
          str(res.violations), _FMT(res.rate), _FMT(res.upper_cl)]],
    )
    vals = cfgmod.resolve(None, {"delta": args.delta, "seed": args.seed})
    _manifest(outdir, vals, "coverage", [
        ("generator", args.generator), ("paths", args.paths), ("t", args.t),
        ("scale", args.scale), ("dim", args.dim),
    ])
    print(
        f"coverage: {res.spec_name} t={res.t} paths={res.n_paths} "
        f"violations={res.violations} rate={res.rate:.4g} upper_cl={res.upper_cl:.4g}"
    )
    return 0 if res.covered() else 1


def _cmd_rates(args) -> int:
    overrides = {
        "T": args.T, "replicates": args.replicates, "seed": args.seed,
        "delta": args.delta, "threads": args.threads,
    }
    vals = _load_values(args, overrides)
    model, schedule, vals = cfgmod.build_model_schedule(vals)
    window = cfgmod.window_from(vals)
    cfg = harness.ExperimentConfig(
        model=model,
        schedule=schedule,
        T=vals["T"],
        replicates=vals["replicates"],
        base_seed=vals["seed"],
        representation=vals["representation"],
        delta=vals["delta"],
        threads=vals["threads"],
        window=window,
    )
    outdir = _outdir(args)
    result = harness.run_replicates(cfg, outdir=outdir)
    _manifest(outdir, vals, "rates")

    failures = []
    if not result.checks.identity_ok:
        failures.append(f"sample-error identity mismatch {result.checks.identity_max_rel:.3e}")
    if not result.checks.deterministic_ok:
        failures.append(
            f"deterministic error spread {result.checks.deterministic_max_spread:.3e}"
        )
    if not result.checks.triangle_ok:
        failures.append(f"triangle inequality margin {result.checks.triangle_min_margin:.3e}")
    if result.checks.iterate_bound_violations:
        failures.append(
            f"{result.checks.iterate_bound_violations} running iterate-bound violations"
        )
    for rep in result.bound_c:
        if rep.regime_ok and rep.t >= 4096 and rep.holds is False:
            failures.append(f"rho-norm bound violated at t={rep.t}")

    for label, fit in (("rho", result.fit_rho), ("K", result.fit_K)):
        if fit is not None:
            print(
                f"rates: {label}-norm slope {fit.slope:+.4f} "
                f"(theory {fit.theoretical_slope:+.4f}, window [{fit.window[0]:.0f}, {fit.window[1]:.0f}])"
            )
    print(f"rates: wrote summary for {vals['replicates']} replicates, T={vals['T']} to {outdir}")
    if failures:
        for f in failures:
            print(f"rates: FAIL {f}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelpath",
        description="Online kernel regression along a regularization path: "
        "simulation, exact verification suites, bound evaluation, rate fits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", help="output directory (default: $KERNELPATH_OUTDIR or ./runs)")

    p = sub.add_parser("simulate", help="one online run; writes a trace CSV")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--r", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--t0", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rep", choices=["nodal", "spectral"])
    p.add_argument("--out", help="trace CSV file path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("path", help="regularization path norms and bound checks")
    add_config(p)
    p.add_argument("--lambda-min", type=float, default=1e-4)
    p.add_argument("--lambda-max", type=float, default=1.0)
    p.add_argument("--num", type=int, default=40)
    p.set_defaults(func=_cmd_path)

    p = sub.add_parser("verify-drift", help="path-increment inequalities on a dyadic grid")
    add_config(p)
    p.add_argument("--r-values", default="0.6,1.0,1.4", help="comma-separated r grid")
    p.add_argument("--k-max", type=int, default=10, help="dyadic depth (lambda = 2^-1..2^-k)")
    p.add_argument("--clauses", help="comma-separated subset of A,B,C,D,E (default: all valid)")
    p.set_defaults(func=_cmd_verify_drift)

    p = sub.add_parser("verify-decomp", help="exact remainder decompositions, finite instances")
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--outcomes", type=int, default=3)
    p.add_argument("--T", type=int, default=64)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_verify_decomp)

    p = sub.add_parser("bounds", help="tail-bound evaluators over an epsilon grid")
    p.add_argument("--M", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0, help="sigma_t (not squared)")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--eps-min", type=float, default=0.1)
    p.add_argument("--eps-max", type=float, default=100.0)
    p.add_argument("--num", type=int, default=50)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("coverage", help="Monte Carlo coverage of the martingale radius")
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--t", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--generator", choices=["rademacher", "sphere"], default="rademacher")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_coverage)

    p = sub.add_parser("rates", help="replicated runs, error decomposition, bounds, rate fits")
    add_config(p)
    p.add_argument("--T", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--threads", type=int, help="worker threads (default: hardware parallelism)")
    p.set_defaults(func=_cmd_rates)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, FileNotFoundError) as exc:
        print(f"kernelpath: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"kernelpath: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
