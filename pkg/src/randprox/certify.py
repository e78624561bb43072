"""Certification engine: does a run contract at least as fast as its certificate?

A certification run averages the Lyapunov value across independent trials and
checks ``mean Psi^t <= c^t Psi^0 (1 + 1e-9) + 3 SE_t + floor`` at every
recorded iteration, then re-checks the one-step conditional contraction at a
handful of frozen random states.  Trials fan out across worker threads and
are merged by trial index, so results are deterministic.

The absolute floor ``1e-24 Psi^0`` accounts for float64 saturation: squared
distances bottom out around ``(eps ||x*||)^2`` once the iterates reach the
machine-precision fixed point, many orders of magnitude below where the
geometric envelope remains informative.  Without it, any sufficiently long
deterministic run would "violate" an envelope smaller than rounding noise.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import OracleUnavailableError
from .oracle import conditional_contraction_probe
from .problem import sqnorm
from .rates import lyapunov, rate_for
from . import solvers

_REL_SLACK = 1e-9
_FLOAT_FLOOR = 1e-24  # times Psi^0; see module docstring


@dataclass(frozen=True)
class CertifyReport:
    theorem_id: str
    c: float
    passed: bool
    worst_margin: float       # min over t of bound + slack - mean (>= 0 iff passed)
    worst_t: int
    psi0: float
    mean_psi: np.ndarray
    bound: np.ndarray
    std_error: np.ndarray
    probe_slacks: tuple       # one-step contraction slacks at frozen states


def _trial_psis(p, cfg, algorithm, theorem_id, horizon, seed):
    # tight loop: certification needs only the Lyapunov value per iteration
    from .estimators import stream

    alg = solvers.ALGORITHMS[algorithm]
    alg.check(p, cfg)
    s = alg.init(p, cfg, None, None)
    psis = np.empty(horizon + 1)
    psis[0] = lyapunov(theorem_id, p, cfg, s)
    for t in range(horizon):
        s = alg.step(p, cfg, s, stream(seed, s.t))
        psis[t + 1] = lyapunov(theorem_id, p, cfg, s)
    return psis


def _random_state(p, cfg, algorithm, rng):
    x_star, u_star = p.known_solution
    x = x_star + rng.standard_normal(np.shape(x_star))
    u = u_star + rng.standard_normal(np.shape(u_star))
    s = solvers.SolverState(x=x, u=u, v=p.K.adjoint(u))
    if algorithm == "cp":
        xhat0 = p.g.prox(x - cfg.gamma * p.K.adjoint(u), cfg.gamma)
        s = solvers.SolverState(x=x, u=u, v=p.K.adjoint(u), last_xhat=xhat0)
    return s


def certify(p, cfg, algorithm: str, theorem_id: str, trials: int, horizon: int,
            seed0: int = 0, probes: int = 5, probe_draws: int = 10**4,
            workers: int = None) -> CertifyReport:
    """Run the trajectory-level and per-step contraction checks.

    Raises ``RateUnavailableError`` when the certificate does not apply.
    """
    if p.known_solution is None:
        raise OracleUnavailableError("certification needs a problem with a known solution")
    rate = rate_for(theorem_id)(p, cfg)

    workers = workers or min(trials, os.cpu_count() or 1, 8)
    if trials == 1 or workers == 1:
        psis = [_trial_psis(p, cfg, algorithm, theorem_id, horizon, seed0 + i)
                for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_trial_psis, p, cfg, algorithm, theorem_id,
                                   horizon, seed0 + i) for i in range(trials)]
            psis = [f.result() for f in futures]
    psis = np.stack(psis)                       # (trials, horizon + 1)
    mean = psis.mean(axis=0)
    se = (psis.std(axis=0, ddof=1) / np.sqrt(trials)) if trials > 1 else np.zeros_like(mean)
    psi0 = float(mean[0])
    ts = np.arange(psis.shape[1])
    bound = psi0 * rate.c ** ts
    margins = bound * (1.0 + _REL_SLACK) + 3.0 * se + _FLOAT_FLOOR * psi0 - mean
    worst_t = int(np.argmin(margins))
    worst = float(margins[worst_t])

    probe_slacks = []
    rng = np.random.default_rng(seed0 + 10_000)
    for _ in range(probes):
        state = _random_state(p, cfg, algorithm, rng)
        res = conditional_contraction_probe(p, cfg, algorithm, state, probe_draws,
                                            theorem_id, seed=seed0)
        probe_slacks.append(res.slack)
    passed = worst >= 0.0 and all(slk >= 0.0 for slk in probe_slacks)
    return CertifyReport(theorem_id, rate.c, passed, worst, worst_t, psi0,
                         mean, bound, se, tuple(probe_slacks))


@dataclass(frozen=True)
class ConvexBenchReport:
    passed: bool
    ts: np.ndarray
    mean_bregman_avg: np.ndarray   # Bregman divergence of the running average
    bound: np.ndarray              # Psi^0 / ((2 gamma - gamma^2 L) t)
    final_bregman: float
    lower_check_ok: bool           # D_f >= ||grad gap||^2 / (2 L) along the run
    dual_gap_final: float          # mean ||u^t - u*||^2 at the horizon


def convex_bench(p, cfg, algorithm: str, horizon: int, trials: int = 1,
                 seed0: int = 0) -> ConvexBenchReport:
    """Ergodic sublinear-rate check for merely convex problems.

    Tracks the running average of the iterates and asserts
    ``mean D_f(xbar^t, x*) <= Psi^0 / ((2 gamma - gamma^2 L_f) t)`` at every
    t >= 1, plus the pointwise lower bound
    ``D_f(x^t, x*) >= ||grad f(x^t) - grad f(x*)||^2 / (2 L_f)``.
    """
    if p.known_solution is None:
        raise OracleUnavailableError("bench needs a problem with a known solution")
    x_star, u_star = p.known_solution
    g_star = p.f.grad(x_star)
    f_star = p.f.value(x_star)
    gamma, L = cfg.gamma, p.f.L
    omega = cfg.estimator.params.omega
    mu_hc = p.h_conj.mu

    def bregman(x):
        return float(p.f.value(x) - f_star - np.dot(np.ravel(g_star), np.ravel(x - x_star)))

    breg_avg = np.zeros((trials, horizon))
    lower_ok = True
    final_breg = 0.0
    dual_final = 0.0
    for trial in range(trials):
        cfg_t = solvers.SolverConfig(cfg.gamma, cfg.tau, cfg.estimator, horizon,
                                     seed0 + trial, False, cfg.allow_large_gamma)
        alg = solvers.ALGORITHMS[algorithm]
        alg.check(p, cfg_t)
        s = alg.init(p, cfg_t, None, None)
        psi0 = (sqnorm(s.x - x_star) / gamma
                + (1.0 + omega) * (1.0 / cfg.tau + 2.0 * mu_hc) * sqnorm(s.u - u_star))
        xsum = np.zeros_like(s.x)
        from .estimators import stream
        for t in range(1, horizon + 1):
            s = alg.step(p, cfg_t, s, stream(cfg_t.seed, s.t))
            xsum += s.x
            breg_avg[trial, t - 1] = bregman(xsum / t)
            db = bregman(s.x)
            gap = sqnorm(p.f.grad(s.x) - g_star)
            if db < gap / (2.0 * L) - 1e-12 * (1.0 + abs(db)):
                lower_ok = False
        final_breg += bregman(s.x) / trials
        dual_final += sqnorm(s.u - u_star) / trials
    ts = np.arange(1, horizon + 1)
    bound = psi0 / ((2.0 * gamma - gamma**2 * L) * ts)
    mean_breg = breg_avg.mean(axis=0)
    passed = bool(np.all(mean_breg <= bound * (1.0 + _REL_SLACK) + 1e-15)) and lower_ok
    return ConvexBenchReport(passed, ts, mean_breg, bound, final_breg, lower_ok, dual_final)
