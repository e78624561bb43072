"""Independent ground-truth computations used to judge solvers and estimators.

Solutions come from dense stationarity or KKT solves (or, for non-quadratic
catalog problems only, a long deterministic run gated on the residual), never
from the algorithm under test; the ``method`` field records provenance.
"""

from dataclasses import dataclass

import numpy as np

from .catalog import objective_value, solve_variant
from .errors import OracleUnavailableError, ParameterError
from .estimators import stream
from .problem import PrimalDualProblem, SmoothOracle, check_optimality_residual
from .rates import lyapunov, rate_for
from . import solvers


@dataclass(frozen=True)
class OracleSolution:
    x_star: np.ndarray
    u_star: np.ndarray
    objective: float
    method: str  # "kkt-solve" | "dense-enumeration" | "long-deterministic-run"


def kkt_solve_quadratic(p: PrimalDualProblem) -> OracleSolution:
    """Exact primal-dual solution by a direct dense solve.

    Only catalog problems carry the analytic pieces this needs; for
    dual-nonunique constrained problems the returned multiplier is the unique
    one inside ran(K) (minimum-norm solve).
    """
    qd = p.quadratic_data
    if qd is None or qd["variant"] == "l1":
        raise OracleUnavailableError("no dense solve available for this problem")
    x_star, u_star = solve_variant(qd)
    return OracleSolution(x_star, u_star, objective_value(p, x_star), "kkt-solve")


def long_run_solution(p: PrimalDualProblem, iters: int = 10**6,
                      gamma_scale: float = 0.5, residual_gate: float = 1e-8) -> OracleSolution:
    """Fallback oracle for non-quadratic catalog problems: a long deterministic run.

    Runs the full-prox iteration at a small step for ``iters`` iterations and
    cross-checks the residual gate; refuses to return an unconverged point.
    """
    if p.f.L <= 0:
        raise OracleUnavailableError("long-run oracle needs a smooth term")
    cfg = solvers.configure(p, gamma=gamma_scale / p.f.L, iterations=iters, record_trace=False)
    trace = solvers.run(p, cfg, "pddy", residual_tol=residual_gate / 10.0)
    s = trace.final_state
    res = check_optimality_residual(p, s.x, s.u)
    if res > residual_gate:
        raise OracleUnavailableError(f"long run did not converge: residual {res:.3e}")
    return OracleSolution(s.x, s.u, objective_value(p, s.x), "long-deterministic-run")


def finite_diff_check(f: SmoothOracle, x, h: float) -> float:
    """Max componentwise error between central differences and the gradient oracle."""
    if not 1e-8 <= h <= 1e-3:
        raise ParameterError("h must lie in [1e-8, 1e-3]")
    if f.value is None:
        raise OracleUnavailableError("finite differences need function values")
    x = np.asarray(x, dtype=float)
    g = np.ravel(f.grad(x))
    flat = np.ravel(x)
    worst = 0.0
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        fd = (f.value((flat + e).reshape(x.shape)) - f.value((flat - e).reshape(x.shape))) / (2 * h)
        worst = max(worst, abs(fd - g[i]))
    return worst


@dataclass(frozen=True)
class ProbeResult:
    mean_psi_next: float
    std_error: float
    c_psi: float

    @property
    def slack(self) -> float:
        """c Psi + 3 sigma - mean; nonnegative when the contraction holds."""
        return self.c_psi + 3.0 * self.std_error - self.mean_psi_next


def conditional_contraction_probe(p, cfg, algorithm: str, state, draws: int,
                                  theorem_id: str, seed: int = 0,
                                  min_draws: int = 10**4) -> ProbeResult:
    """Monte-Carlo check of the one-step conditional contraction from a frozen state.

    Resamples only the estimator draw: ``draws`` independent steps from the
    same state, averaging the next Lyapunov value, compared against
    ``c * Psi(state)``.  With a deterministic estimator a single step
    suffices and the standard error is zero.
    """
    if p.known_solution is None:
        raise OracleUnavailableError("probe needs a problem with a known solution")
    if draws < min_draws:
        raise ParameterError(f"draws must be >= {min_draws}")
    rate = rate_for(theorem_id)(p, cfg)
    psi0 = lyapunov(theorem_id, p, cfg, state)
    alg = solvers.ALGORITHMS[algorithm]
    alg.check(p, cfg)
    if cfg.estimator.is_identity:
        s1 = alg.step(p, cfg, state, stream(seed, 0))
        return ProbeResult(lyapunov(theorem_id, p, cfg, s1), 0.0, rate.c * psi0)
    vals = np.empty(draws)
    for j in range(draws):
        s1 = alg.step(p, cfg, state, stream(seed, j))
        vals[j] = lyapunov(theorem_id, p, cfg, s1)
    return ProbeResult(float(vals.mean()),
                       float(vals.std(ddof=1) / np.sqrt(draws)),
                       rate.c * psi0)
