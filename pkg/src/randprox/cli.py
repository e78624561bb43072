"""Batch command-line front-end.

Subcommands: ``solve``, ``certify``, ``rates``, ``estimator-check``,
``fl-sim``, ``convex-bench``.  Every output CSV is self-describing (header
comments carry the resolved configuration, library version and seed) and a
matplotlib figure is rendered next to it unless ``--no-plot`` is given.

Options may also come from a config file of ``key = value`` lines
(``--config FILE``); explicit flags override file values.  Relative output
paths resolve against ``$RANDPROX_OUTDIR`` when it is set.

Exit codes: 0 success/pass, 1 certification fail, 2 configuration error,
3 certificate inapplicable.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .catalog import parse_problem
from .certify import certify, convex_bench
from .errors import (DiagnosticsUnavailableError, OracleUnavailableError,
                     ParameterError, RateUnavailableError, ShapeError, UsageError)
from .estimators import parse_estimator, identity_estimator
from .flsim import kappa_sweep, make_fl_config, run_fl, fl_rate
from .problem import identity_map, stacking_map
from . import rates as rates_mod
from . import solvers

_TRACE_COLUMNS = ("t", "psi", "dist_x_sq", "dist_u_sq", "bregman", "prox_h_calls", "floats_comm")

_AUTO_THEOREMS = {
    "pddy": ("t4", "t2", "t1", "t9", "t3"),
    "randprox": ("t4", "t2", "t1", "t9", "t3"),
    "skip": ("t4", "t2", "t1", "t9", "t3"),
    "fb": ("t3",),
    "lc": ("t4",),
    "minibatch": ("t5",),
    "point_saga": ("t5",),
    "cp": ("t7",),
    "admm": ("t8",),
    "dy": ("t9", "t3"),
    "prilico": ("t6",),
}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _resolve_out(path):
    outdir = os.environ.get("RANDPROX_OUTDIR")
    if outdir and not os.path.isabs(path):
        path = os.path.join(outdir, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def write_csv(path, meta: dict, columns, rows):
    with open(path, "w") as fh:
        fh.write(f"# randprox {__version__}\n")
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _figure_path(csv_path):
    base, _ = os.path.splitext(csv_path)
    return base + ".png"


def _read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_config(args, schema):
    path = getattr(args, "config", None)
    if not path:
        return
    file_vals = _read_config_file(path)
    unknown = set(file_vals) - set(schema)
    if unknown:
        raise ParameterError(f"config file has unknown keys: {sorted(unknown)}")
    for key, conv in schema.items():
        if getattr(args, key, None) is None and key in file_vals:
            setattr(args, key, conv(file_vals[key]))


def _bool(text):
    return text.strip().lower() in ("1", "true", "yes")


def _build_cfg(problem, args):
    estimator = parse_estimator(args.estimator) if args.estimator else identity_estimator()
    return solvers.configure(
        problem,
        gamma=args.gamma,
        tau=args.tau,
        estimator=estimator,
        iterations=args.iters if args.iters is not None else 1000,
        seed=args.seed if args.seed is not None else 0,
    )


def _pick_theorem(problem, cfg, algorithm, explicit):
    if explicit:
        rates_mod.rate_for(explicit)(problem, cfg)  # raises if inapplicable
        return explicit
    for tid in _AUTO_THEOREMS.get(algorithm, ()):
        try:
            rates_mod.rate_for(tid)(problem, cfg)
            return tid
        except (RateUnavailableError, ParameterError, KeyError):
            continue
    return None


def _solve_meta(args, cfg, algorithm, theorem, rate):
    meta = {
        "problem": args.problem,
        "algorithm": algorithm,
        "estimator": args.estimator or "identity",
        "gamma": _fmt(cfg.gamma),
        "tau": _fmt(cfg.tau),
        "iterations": cfg.iterations,
        "seed": cfg.seed,
        "theorem": theorem or "",
    }
    if rate is not None:
        meta["rate_c"] = _fmt(rate.c)
        meta["rate_branches"] = ";".join(_fmt(b) for b in rate.branch_values)
    return meta


def cmd_solve(args):
    if args.algorithm == "fl":
        return _solve_fl(args)
    problem = parse_problem(args.problem)
    cfg = _build_cfg(problem, args)
    if args.algorithm not in solvers.ALGORITHMS:
        raise UsageError(f"unknown algorithm {args.algorithm!r}; "
                         f"expected one of {sorted(solvers.ALGORITHMS) + ['fl']}")
    theorem = _pick_theorem(problem, cfg, args.algorithm, args.theorem)
    rate = rates_mod.rate_for(theorem)(problem, cfg) if theorem else None
    if theorem is None:
        print("warning: no certificate applies; Lyapunov column left empty", file=sys.stderr)
    trace = solvers.run(problem, cfg, args.algorithm, residual_tol=args.residual_tol,
                        theorem_id=theorem)
    rows = [(r.t, r.psi, r.dist_x_sq, r.dist_u_sq, r.bregman, r.prox_h_calls, r.floats_comm)
            for r in trace.rows]
    if args.out:
        path = _resolve_out(args.out)
        write_csv(path, _solve_meta(args, cfg, args.algorithm, theorem, rate),
                  _TRACE_COLUMNS, rows)
        if not args.no_plot:
            from .plots import trace_figure
            trace_figure(trace, _figure_path(path), rate=rate,
                         title=f"{args.algorithm} on {args.problem}")
    else:
        print(",".join(_TRACE_COLUMNS))
        for row in rows:
            print(",".join(_fmt(v) for v in row))
    return 0


def _solve_fl(args):
    fl_args = dict(item.split("=") for item in args.problem.partition(":")[2].split(",") if item)
    estimator = parse_estimator(args.estimator) if args.estimator else identity_estimator()
    fl = make_fl_config(
        n=int(fl_args.get("n", 5)), d=int(fl_args.get("d", 20)),
        mu=float(fl_args.get("mu", 1.0)), L=float(fl_args.get("L", 10.0)),
        seed=int(fl_args.get("seed", args.seed or 0)), estimator=estimator,
        gamma=args.gamma, target_eps=float(fl_args.get("eps", 1e-6)),
    )
    trace, ledger = run_fl(fl, max_rounds=args.iters or 1000, seed=args.seed or 0)
    rows = [(r.t, r.psi, r.dist_x_sq, r.dist_u_sq, r.bregman, r.prox_h_calls, r.floats_comm)
            for r in trace.rows]
    meta = {"problem": args.problem, "algorithm": "fl",
            "estimator": args.estimator or "identity",
            "gamma": _fmt(fl.gamma), "seed": args.seed or 0,
            "rounds": ledger.rounds, "comm_events": ledger.comm_events,
            "uplink_floats": ledger.uplink_floats, "downlink_floats": ledger.downlink_floats,
            "rate_c": _fmt(fl_rate(fl).c)}
    if args.out:
        path = _resolve_out(args.out)
        write_csv(path, meta, _TRACE_COLUMNS, rows)
        if not args.no_plot:
            from .plots import trace_figure
            trace_figure(trace, _figure_path(path), rate=fl_rate(fl), title="federated run")
    else:
        print(",".join(_TRACE_COLUMNS))
        for row in rows:
            print(",".join(_fmt(v) for v in row))
    return 0


def cmd_certify(args):
    problem = parse_problem(args.problem)
    cfg = _build_cfg(problem, args)
    report = certify(problem, cfg, args.algorithm, args.theorem,
                     trials=args.trials, horizon=args.iters or 500,
                     seed0=args.seed if args.seed is not None else 0)
    status = "PASS" if report.passed else "FAIL"
    print(f"[{status}] certificate {report.theorem_id}: c = {report.c:.6g}")
    print(f"  trajectory: worst margin {report.worst_margin:.6g} at t = {report.worst_t}")
    for i, slack in enumerate(report.probe_slacks):
        print(f"  per-step probe {i}: slack {slack:.6g}")
    if args.out:
        path = _resolve_out(args.out)
        ts = np.arange(len(report.mean_psi))
        rows = list(zip(ts, report.mean_psi, report.bound, report.std_error,
                        report.bound * (1 + 1e-9) + 3 * report.std_error - report.mean_psi))
        write_csv(path, {"problem": args.problem, "algorithm": args.algorithm,
                         "estimator": args.estimator or "identity",
                         "theorem": args.theorem, "trials": args.trials,
                         "gamma": _fmt(cfg.gamma), "tau": _fmt(cfg.tau),
                         "seed": cfg.seed, "c": _fmt(report.c),
                         "passed": report.passed},
                  ("t", "mean_psi", "bound", "std_error", "margin"), rows)
        if not args.no_plot:
            from .plots import certify_figure
            certify_figure(report, _figure_path(path),
                           title=f"{args.algorithm} vs certificate {args.theorem}")
    return 0 if report.passed else 1


def cmd_rates(args):
    tid = args.theorem.lower()
    gamma = args.gamma
    omega = args.omega if args.omega is not None else 0.0
    mu_hc = args.mu_hc if args.mu_hc is not None else 0.0
    mu_g = args.mu_g if args.mu_g is not None else 0.0
    tau = args.tau
    if tau is None and tid in ("t1", "t2", "t4", "t7", "t8"):
        denom = (args.norm_k_sq if args.norm_k_sq is not None else 1.0) * (1.0 + omega)
        tau = 1.0 / (gamma * denom)
    if tid == "t1":
        report = rates_mod.rate_thm1_constants(gamma, tau, args.mu, args.L, mu_g, mu_hc, omega)
    elif tid == "t2":
        report = rates_mod.rate_thm2_constants(gamma, tau, args.mu, args.L, mu_hc, omega,
                                               args.lambda_min or 0.0)
    elif tid == "t3":
        report = rates_mod.rate_thm3(gamma, args.mu, args.L, mu_hc, omega)
    elif tid == "t4":
        report = rates_mod.rate_thm4_constants(gamma, tau, args.mu, args.L, omega,
                                               args.lambda_min_plus or 0.0)
    elif tid == "t5":
        report = rates_mod.rate_thm5_constants(gamma, args.mu, args.L, mu_g, mu_hc,
                                               args.n, args.k)
    elif tid == "t6":
        report = rates_mod.rate_thm6_constants(gamma, tau or 1.0, args.mu, args.L, omega,
                                               args.norm_k_sq or 1.0,
                                               args.lambda_min_plus or 0.0)
    elif tid == "t7":
        report = rates_mod.rate_thm7_constants(gamma, tau, mu_g, mu_hc, omega, tid="t7")
    elif tid == "t8":
        tau8 = tau if tau is not None else 1.0 / (gamma * (1.0 + omega))
        report = rates_mod.rate_thm7_constants(gamma, tau8, mu_g, mu_hc, omega, tid="t8")
    elif tid == "t9":
        report = rates_mod.rate_thm9_constants(gamma, args.mu, args.L, mu_g, mu_hc, omega)
    elif tid == "t10":
        report = rates_mod.rate_thm10_constants(gamma, args.mu, args.L, omega)
    else:
        raise ParameterError(f"unknown certificate {args.theorem!r}")
    columns = ("theorem", "c", "branch1", "branch2", "branch3", "weight_primal", "weight_dual")
    branches = list(report.branch_values) + [None] * (3 - len(report.branch_values))
    row = (report.theorem_id, report.c, *branches, *report.lyapunov_weights)
    print(",".join(columns))
    print(",".join(_fmt(v) for v in row))
    if args.out:
        write_csv(_resolve_out(args.out), {"theorem": tid}, columns, [row])
    return 0


def cmd_estimator_check(args):
    est = parse_estimator(args.estimator)
    draws = args.draws if args.draws is not None else 10**5
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    if est.kind == "rand_k_blocks":
        n, d = est.meta["n"], args.dim or 4
        K = stacking_map(n, d)
        r = K.apply(rng.standard_normal(d)) + 0.1 * rng.standard_normal((n, d))
    elif est.kind == "shared_rand_k":
        n, d = est.meta["n"], est.meta["d"]
        K = identity_map((n, d))
        r = rng.standard_normal((n, d))
    elif est.kind == "rand_k":
        d = est.meta["d"]
        K = identity_map(d)
        r = rng.standard_normal(d)
    else:
        d = args.dim or 8
        K = identity_map(d)
        r = rng.standard_normal(d)
    from .estimators import empirical_estimator_stats
    from .problem import sqnorm
    stats = empirical_estimator_stats(est, r, K, draws, seed)
    omega, omega_ran, zeta = est.params.resolved(K.norm_sq)
    mean_tol = 3.0 * np.sqrt(max(stats.variance_ratio, 1e-30) * sqnorm(r) / draws)
    ok = (stats.mean_error_norm <= mean_tol + 1e-12
          and stats.variance_ratio <= omega + 3.0 * stats.variance_ratio_se + 1e-12
          and stats.range_slack >= -3.0 * stats.range_slack_se - 1e-12)
    columns = ("estimator", "omega", "omega_ran", "zeta", "mean_error", "variance_ratio",
               "variance_ratio_se", "range_slack", "range_slack_se", "conforms")
    row = (args.estimator.replace(",", ";"), omega, omega_ran, zeta, stats.mean_error_norm,
           stats.variance_ratio, stats.variance_ratio_se, stats.range_slack,
           stats.range_slack_se, int(ok))
    print(",".join(columns))
    print(",".join(_fmt(v) for v in row))
    if args.out:
        write_csv(_resolve_out(args.out), {"draws": draws, "seed": seed}, columns, [row])
    return 0 if ok else 1


def cmd_fl_sim(args):
    kappas = [float(k) for k in args.kappas.split(",")]
    result = kappa_sweep(args.kind, kappas, trials=args.trials or 10,
                         seed=args.seed if args.seed is not None else 0,
                         n=args.n or 5, d=args.d or 20,
                         eps=args.eps if args.eps is not None else 1e-6)
    columns = ("kappa", "param", "mean_cost", "std", "slope")
    rows = [(r.kappa, r.parameter, r.mean_cost, r.std_cost, result.slope)
            for r in result.rows]
    print(",".join(columns))
    for row in rows:
        print(",".join(_fmt(v) for v in row))
    if args.out:
        path = _resolve_out(args.out)
        write_csv(path, {"kind": args.kind, "n": args.n or 5, "d": args.d or 20,
                         "trials": args.trials or 10, "seed": args.seed or 0,
                         "eps": _fmt(args.eps if args.eps is not None else 1e-6)},
                  columns, rows)
        if not args.no_plot:
            from .plots import sweep_figure
            sweep_figure(result, _figure_path(path), title=f"{args.kind} sweep")
    return 0


def cmd_convex_bench(args):
    problem = parse_problem(args.problem)
    if problem.f.mu > 0 or problem.g.mu > 0:
        print("warning: problem is strongly convex; the sublinear bound is valid "
              "but degenerate", file=sys.stderr)
    cfg = _build_cfg(problem, args)
    report = convex_bench(problem, cfg, args.algorithm or "pddy",
                          horizon=args.iters or 1000, trials=args.trials or 1,
                          seed0=args.seed if args.seed is not None else 0)
    status = "PASS" if report.passed else "FAIL"
    print(f"[{status}] ergodic bound held at every t; final Bregman divergence "
          f"{report.final_bregman:.3e}; final dual gap {report.dual_gap_final:.3e}")
    if args.out:
        path = _resolve_out(args.out)
        rows = list(zip(report.ts, report.mean_bregman_avg, report.bound))
        write_csv(path, {"problem": args.problem, "algorithm": args.algorithm or "pddy",
                         "iterations": args.iters or 1000, "seed": args.seed or 0,
                         "passed": report.passed},
                  ("t", "bregman_avg", "bound"), rows)
        if not args.no_plot:
            from .plots import convex_bench_figure
            convex_bench_figure(report, _figure_path(path), title="ergodic decay")
    return 0 if report.passed else 1


def _add_common(sub, with_estimator=True):
    sub.add_argument("--config", help="key = value config file; flags override it")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None, help="output CSV path")
    sub.add_argument("--no-plot", action="store_true",
                     help="skip the figure next to the CSV")
    if with_estimator:
        sub.add_argument("--estimator", default=None,
                         help='e.g. "bernoulli:p=0.1" or "rand_k:k=3,d=10"')


_COMMON_SCHEMA = {"seed": int, "out": str, "estimator": str, "gamma": float,
                  "tau": float, "iters": int, "problem": str, "algorithm": str,
                  "theorem": str, "trials": int, "residual_tol": float}


def build_parser():
    parser = argparse.ArgumentParser(prog="randprox",
                                     description="randomized primal-dual splitting toolkit")
    parser.add_argument("--version", action="version", version=f"randprox {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("solve", help="run one algorithm and write its trace")
    sp.add_argument("--problem", default=None)
    sp.add_argument("--algorithm", default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--residual-tol", type=float, default=None)
    sp.add_argument("--theorem", default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_solve)

    cp = subs.add_parser("certify", help="check a run against its certified rate")
    cp.add_argument("--problem", default=None)
    cp.add_argument("--algorithm", default=None)
    cp.add_argument("--theorem", default=None)
    cp.add_argument("--trials", type=int, default=1)
    cp.add_argument("--gamma", type=float, default=None)
    cp.add_argument("--tau", type=float, default=None)
    cp.add_argument("--iters", type=int, default=None)
    _add_common(cp)
    cp.set_defaults(func=cmd_certify)

    rp = subs.add_parser("rates", help="print a certified contraction factor")
    rp.add_argument("--theorem", required=True)
    rp.add_argument("--gamma", type=float, required=True)
    rp.add_argument("--tau", type=float, default=None)
    rp.add_argument("--mu", type=float, default=0.0)
    rp.add_argument("--L", type=float, default=0.0)
    rp.add_argument("--mu-g", type=float, default=None, dest="mu_g")
    rp.add_argument("--mu-hc", type=float, default=None, dest="mu_hc")
    rp.add_argument("--omega", type=float, default=None)
    rp.add_argument("--lambda-min", type=float, default=None, dest="lambda_min")
    rp.add_argument("--lambda-min-plus", type=float, default=None, dest="lambda_min_plus")
    rp.add_argument("--norm-k-sq", type=float, default=None, dest="norm_k_sq")
    rp.add_argument("--n", type=int, default=None)
    rp.add_argument("--k", type=int, default=None)
    rp.add_argument("--out", default=None)
    rp.add_argument("--config", default=None)
    rp.set_defaults(func=cmd_rates)

    ep = subs.add_parser("estimator-check", help="Monte-Carlo conformance of an estimator")
    ep.add_argument("estimator", help='spec string, e.g. "rand_k_blocks:k=3,n=10"')
    ep.add_argument("--dim", type=int, default=None)
    ep.add_argument("--draws", type=int, default=None)
    ep.add_argument("--seed", type=int, default=None)
    ep.add_argument("--out", default=None)
    ep.add_argument("--config", default=None)
    ep.set_defaults(func=cmd_estimator_check)

    fp = subs.add_parser("fl-sim", help="communication-cost sweep over condition numbers")
    fp.add_argument("--kind", choices=("scaffnew", "rand_k"), required=True)
    fp.add_argument("--kappas", default="16,64,256,1024")
    fp.add_argument("--n", type=int, default=None)
    fp.add_argument("--d", type=int, default=None)
    fp.add_argument("--trials", type=int, default=None)
    fp.add_argument("--eps", type=float, default=None)
    _add_common(fp, with_estimator=False)
    fp.set_defaults(func=cmd_fl_sim)

    bp = subs.add_parser("convex-bench", help="ergodic rate check on a merely convex problem")
    bp.add_argument("--problem", default=None)
    bp.add_argument("--algorithm", default=None)
    bp.add_argument("--gamma", type=float, default=None)
    bp.add_argument("--tau", type=float, default=None)
    bp.add_argument("--iters", type=int, default=None)
    bp.add_argument("--trials", type=int, default=None)
    _add_common(bp)
    bp.set_defaults(func=cmd_convex_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args, {k: v for k, v in _COMMON_SCHEMA.items() if hasattr(args, k)})
        if getattr(args, "problem", "skip") is None:
            raise ParameterError("--problem is required (flag or config file)")
        if getattr(args, "algorithm", "skip") is None and args.command in ("solve", "certify"):
            raise ParameterError("--algorithm is required (flag or config file)")
        if args.command == "certify" and args.theorem is None:
            raise ParameterError("--theorem is required for certify")
        code = args.func(args)
    except RateUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ParameterError, ShapeError, UsageError, OracleUnavailableError,
            DiagnosticsUnavailableError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
