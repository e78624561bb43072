"""Closed-form contraction factors and the Lyapunov functions they contract.

Each certificate ``t1`` ... ``t10`` covers one algorithm/problem shape and is
gated on its hypotheses: asking for a rate outside them raises
``RateUnavailableError`` naming the failed hypothesis, never a silent
``c >= 1``.  All factors contract the squared-distance Lyapunov value per
iteration, so comparisons must always use Lyapunov ratios, not distance
ratios.

Certificate conditions (informally):

- t1  generic splitting, primal strong convexity and strongly convex ``h*``
- t2  ``g = 0``; needs ``lambda_min(KK*) > 0`` or strongly convex ``h*``
- t3  ``g = 0``, ``K = Id`` (forward-backward form); ``mu_f > 0`` suffices
- t4  linear constraint ``Kx = b``; rate through ``lambda_min_plus(KK*)``
- t5  block-separable ``h`` with k-of-n sampling at ``tau = 1/(gamma n)``
- t6  squared-map constraint ``Wx = a``; rate through ``lambda_min_plus(W)``
- t7  ``f = 0`` (saddle form); needs ``mu_g > 0`` and ``mu_h* > 0``
- t8  ``f = 0``, ``K = Id`` (alternating-direction form)
- t9  ``K = Id`` (three-operator form)
- t10 distributed consensus over n nodes with a shared linear estimator
"""

import math
from dataclasses import dataclass

from .errors import DiagnosticsUnavailableError, ParameterError, RateUnavailableError
from .problem import sqnorm

_GAMMA_MARGIN = 1e-12
_PRODUCT_SLACK = 1e-9


@dataclass(frozen=True)
class RateReport:
    """A certified contraction factor and the Lyapunov weights it applies to."""

    theorem_id: str
    c: float
    branch_values: tuple
    lyapunov_weights: tuple  # (primal weight, dual weight)

    def __post_init__(self):
        if abs(self.c - max(self.branch_values)) > 1e-15:
            raise ParameterError("c must be the max of its branch values")
        if not self.c < 1.0:
            raise RateUnavailableError(self.theorem_id, f"certified factor c = {self.c} is not < 1")


def gd_contraction(gamma: float, mu_f: float, L_f: float) -> float:
    """Lipschitz constant of the gradient-descent map ``Id - gamma grad_f``.

    Equals ``max(1 - gamma mu_f, gamma L_f - 1)``; below 1 whenever
    ``0 < gamma < 2 / L_f`` and ``mu_f > 0``.
    """
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    if not 0 <= mu_f <= L_f:
        raise ParameterError("need 0 <= mu_f <= L_f")
    return max(1.0 - gamma * mu_f, gamma * L_f - 1.0)


def _gamma_in_window(gamma, L_f):
    return gamma > 0 and (L_f == 0.0 or gamma * L_f < 2.0 - _GAMMA_MARGIN)


def _gate_gamma(tid, gamma, L_f, mu_g, branches):
    """Enforce 0 < gamma < 2/L_f, with the c<1 override available when mu_g > 0."""
    if _gamma_in_window(gamma, L_f):
        return
    if gamma > 0 and mu_g > 0 and max(branches) < 1.0:
        return
    raise RateUnavailableError(tid, "0 < gamma < 2/L_f")


def _primal_branches(gamma, mu_f, L_f, mu_g):
    den = 1.0 + gamma * mu_g
    return (1.0 - gamma * mu_f) ** 2 / den, (gamma * L_f - 1.0) ** 2 / den


def _dual_branch_tau(tau, mu_hc, omega):
    return 1.0 - 2.0 * tau * mu_hc / ((1.0 + omega) * (1.0 + 2.0 * tau * mu_hc))


def rate_thm1_constants(gamma, tau, mu_f, L_f, mu_g, mu_hc, omega) -> RateReport:
    if tau <= 0:
        raise RateUnavailableError("t1", "tau > 0")
    if not (mu_f > 0 or mu_g > 0):
        raise RateUnavailableError("t1", "mu_f > 0 or mu_g > 0")
    if not mu_hc > 0:
        raise RateUnavailableError("t1", "mu_hc > 0")
    b1, b2 = _primal_branches(gamma, mu_f, L_f, mu_g)
    b3 = _dual_branch_tau(tau, mu_hc, omega)
    _gate_gamma("t1", gamma, L_f, mu_g, (b1, b2, b3))
    weights = (1.0 / gamma, (1.0 + omega) * (1.0 / tau + 2.0 * mu_hc))
    return RateReport("t1", max(b1, b2, b3), (b1, b2, b3), weights)


def rate_thm2_constants(gamma, tau, mu_f, L_f, mu_hc, omega, lambda_min) -> RateReport:
    if tau <= 0:
        raise RateUnavailableError("t2", "tau > 0")
    if not mu_f > 0:
        raise RateUnavailableError("t2", "mu_f > 0")
    if not (lambda_min > 0 or mu_hc > 0):
        raise RateUnavailableError("t2", "lambda_min(KK*) > 0 or mu_hc > 0")
    if not _gamma_in_window(gamma, L_f):
        raise RateUnavailableError("t2", "0 < gamma < 2/L_f")
    b1 = (1.0 - gamma * mu_f) ** 2
    b2 = (gamma * L_f - 1.0) ** 2
    b3 = 1.0 - (2.0 * tau * mu_hc + gamma * tau * lambda_min) / (
        (1.0 + omega) * (1.0 + 2.0 * tau * mu_hc)
    )
    weights = (1.0 / gamma, (1.0 + omega) * (1.0 / tau + 2.0 * mu_hc))
    return RateReport("t2", max(b1, b2, b3), (b1, b2, b3), weights)


def rate_thm3(gamma, mu_f, L_f, mu_hc, omega) -> RateReport:
    """Forward-backward certificate; valid even when ``mu_hc = 0``."""
    if not mu_f > 0:
        raise RateUnavailableError("t3", "mu_f > 0")
    if not _gamma_in_window(gamma, L_f):
        raise RateUnavailableError("t3", "0 < gamma < 2/L_f")
    m = 2.0 * mu_hc / gamma
    b1 = (1.0 - gamma * mu_f) ** 2
    b2 = (gamma * L_f - 1.0) ** 2
    b3 = 1.0 - (1.0 + m) / ((1.0 + omega) * (1.0 + omega + m))
    weights = (1.0 / gamma, (1.0 + omega) * (gamma * (1.0 + omega) + 2.0 * mu_hc))
    return RateReport("t3", max(b1, b2, b3), (b1, b2, b3), weights)


def rate_thm4_constants(gamma, tau, mu_f, L_f, omega, lambda_min_plus) -> RateReport:
    if tau <= 0:
        raise RateUnavailableError("t4", "tau > 0")
    if not mu_f > 0:
        raise RateUnavailableError("t4", "mu_f > 0")
    if not lambda_min_plus > 0:
        raise RateUnavailableError("t4", "lambda_min_plus(KK*) > 0")
    if not _gamma_in_window(gamma, L_f):
        raise RateUnavailableError("t4", "0 < gamma < 2/L_f")
    b1 = (1.0 - gamma * mu_f) ** 2
    b2 = (gamma * L_f - 1.0) ** 2
    b3 = 1.0 - gamma * tau * lambda_min_plus / (1.0 + omega)
    weights = (1.0 / gamma, (1.0 + omega) / tau)
    return RateReport("t4", max(b1, b2, b3), (b1, b2, b3), weights)


def rate_thm5_constants(gamma, mu_f, L_f, mu_g, mu_hc, n, k) -> RateReport:
    if not (mu_f > 0 or mu_g > 0):
        raise RateUnavailableError("t5", "mu_f > 0 or mu_g > 0")
    if not mu_hc > 0:
        raise RateUnavailableError("t5", "mu_hc > 0")
    if not 1 <= k <= n:
        raise RateUnavailableError("t5", "1 <= k <= n")
    b1, b2 = _primal_branches(gamma, mu_f, L_f, mu_g)
    b3 = 1.0 - 2.0 * k * mu_hc / (n * (gamma * n + 2.0 * mu_hc))
    _gate_gamma("t5", gamma, L_f, mu_g, (b1, b2, b3))
    weights = (1.0 / gamma, (n / k) * (gamma * n + 2.0 * mu_hc))
    return RateReport("t5", max(b1, b2, b3), (b1, b2, b3), weights)


def rate_thm6_constants(gamma, tau, mu_f, L_f, omega, w_norm, w_lambda_min_plus) -> RateReport:
    if tau <= 0:
        raise RateUnavailableError("t6", "tau > 0")
    if not mu_f > 0:
        raise RateUnavailableError("t6", "mu_f > 0")
    if not _gamma_in_window(gamma, L_f):
        raise RateUnavailableError("t6", "0 < gamma < 2/L_f")
    if gamma * tau * w_norm * (1.0 + omega) > 1.0 + _PRODUCT_SLACK:
        raise RateUnavailableError("t6", "gamma tau ||W|| (1 + omega) <= 1")
    b1 = (1.0 - gamma * mu_f) ** 2
    b2 = (gamma * L_f - 1.0) ** 2
    b3 = 1.0 - gamma * tau * w_lambda_min_plus / (1.0 + omega)
    weights = (1.0 / gamma, (1.0 + omega) / tau)
    return RateReport("t6", max(b1, b2, b3), (b1, b2, b3), weights)


def rate_thm7_constants(gamma, tau, mu_g, mu_hc, omega, tid="t7") -> RateReport:
    if gamma <= 0 or tau <= 0:
        raise RateUnavailableError(tid, "gamma > 0 and tau > 0")
    if not mu_g > 0:
        raise RateUnavailableError(tid, "mu_g > 0")
    if not mu_hc > 0:
        raise RateUnavailableError(tid, "mu_hc > 0")
    b1 = 1.0 / (1.0 + gamma * mu_g)
    b2 = _dual_branch_tau(tau, mu_hc, omega)
    if tid == "t8":
        weights = (1.0 / gamma, (1.0 + omega) * (gamma * (1.0 + omega) + 2.0 * mu_hc))
    else:
        weights = (1.0 / gamma, (1.0 + omega) * (1.0 / tau + 2.0 * mu_hc))
    return RateReport(tid, max(b1, b2), (b1, b2), weights)


def rate_thm9_constants(gamma, mu_f, L_f, mu_g, mu_hc, omega) -> RateReport:
    if not (mu_f > 0 or mu_g > 0):
        raise RateUnavailableError("t9", "mu_f > 0 or mu_g > 0")
    if not mu_hc > 0:
        raise RateUnavailableError("t9", "mu_hc > 0")
    m = 2.0 * mu_hc / gamma
    b1, b2 = _primal_branches(gamma, mu_f, L_f, mu_g)
    b3 = 1.0 - m / ((1.0 + omega) * (1.0 + omega + m))
    _gate_gamma("t9", gamma, L_f, mu_g, (b1, b2, b3))
    weights = (1.0 / gamma, (1.0 + omega) * (gamma * (1.0 + omega) + 2.0 * mu_hc))
    return RateReport("t9", max(b1, b2, b3), (b1, b2, b3), weights)


def rate_thm10_constants(gamma, mu, L, omega) -> RateReport:
    if not mu > 0:
        raise RateUnavailableError("t10", "mu > 0")
    if not _gamma_in_window(gamma, L):
        raise RateUnavailableError("t10", "0 < gamma < 2/L")
    b1 = (1.0 - gamma * mu) ** 2
    b2 = (gamma * L - 1.0) ** 2
    b3 = 1.0 - 1.0 / (1.0 + omega) ** 2
    weights = (1.0 / gamma, gamma * (1.0 + omega) ** 2)
    return RateReport("t10", max(b1, b2, b3), (b1, b2, b3), weights)


def _resolved(p, cfg):
    return cfg.estimator.params.resolved(p.K.norm_sq)


def _check_relaxation(tid, cfg):
    if getattr(cfg, "relaxation", None) is not None:
        raise RateUnavailableError(
            tid, "certificates cover only the default underrelaxation 1/(1+omega)")


def _check_product(tid, p, cfg):
    _check_relaxation(tid, cfg)
    omega, omega_ran, zeta = _resolved(p, cfg)
    product = cfg.gamma * cfg.tau * ((1.0 - zeta) * p.K.norm_sq + omega_ran)
    if product > 1.0 + _PRODUCT_SLACK:
        raise RateUnavailableError(tid, "gamma tau ((1-zeta)||K||^2 + omega_ran) <= 1")
    return omega


def rate_thm1(p, cfg) -> RateReport:
    omega = _check_product("t1", p, cfg)
    return rate_thm1_constants(cfg.gamma, cfg.tau, p.f.mu, p.f.L, p.g.mu, p.h_conj.mu, omega)


def rate_thm2(p, cfg) -> RateReport:
    if not p.g_is_zero:
        raise RateUnavailableError("t2", "g = 0")
    omega = _check_product("t2", p, cfg)
    return rate_thm2_constants(
        cfg.gamma, cfg.tau, p.f.mu, p.f.L, p.h_conj.mu, omega, p.K.lambda_min
    )


def rate_thm3_problem(p, cfg) -> RateReport:
    if not (p.g_is_zero and p.k_is_identity):
        raise RateUnavailableError("t3", "g = 0 and K = Id")
    omega = _check_product("t3", p, cfg)
    return rate_thm3(cfg.gamma, p.f.mu, p.f.L, p.h_conj.mu, omega)


def rate_thm4(p, cfg) -> RateReport:
    if not p.g_is_zero or p.constraint_rhs is None:
        raise RateUnavailableError("t4", "g = 0 and h = indicator of {b}")
    omega = _check_product("t4", p, cfg)
    return rate_thm4_constants(cfg.gamma, cfg.tau, p.f.mu, p.f.L, omega, p.K.lambda_min_plus)


def rate_thm5(p, cfg) -> RateReport:
    _check_relaxation("t5", cfg)
    meta = cfg.estimator.meta
    if cfg.estimator.kind != "rand_k_blocks" or "n" not in meta:
        raise RateUnavailableError("t5", "estimator must be a k-of-n block sampler")
    n, k = meta["n"], meta["k"]
    if abs(cfg.tau * cfg.gamma * n - 1.0) > 1e-9:
        raise RateUnavailableError("t5", "tau = 1/(gamma n)")
    return rate_thm5_constants(cfg.gamma, p.f.mu, p.f.L, p.g.mu, p.h_conj.mu, n, k)


def rate_thm6(p, cfg) -> RateReport:
    _check_relaxation("t6", cfg)
    if p.w_map is None:
        raise RateUnavailableError("t6", "problem must carry a squared-map constraint (W, a)")
    omega = cfg.estimator.params.omega
    return rate_thm6_constants(
        cfg.gamma, cfg.tau, p.f.mu, p.f.L, omega, p.w_map.norm_sq, p.w_map.lambda_min_plus
    )


def rate_thm7(p, cfg) -> RateReport:
    if not p.f_is_zero:
        raise RateUnavailableError("t7", "f = 0")
    omega = _check_product("t7", p, cfg)
    return rate_thm7_constants(cfg.gamma, cfg.tau, p.g.mu, p.h_conj.mu, omega, tid="t7")


def rate_thm8(p, cfg) -> RateReport:
    if not (p.f_is_zero and p.k_is_identity):
        raise RateUnavailableError("t8", "f = 0 and K = Id")
    omega = _check_product("t8", p, cfg)
    return rate_thm7_constants(cfg.gamma, cfg.tau, p.g.mu, p.h_conj.mu, omega, tid="t8")


def rate_thm9(p, cfg) -> RateReport:
    if not p.k_is_identity:
        raise RateUnavailableError("t9", "K = Id")
    omega = _check_product("t9", p, cfg)
    return rate_thm9_constants(cfg.gamma, p.f.mu, p.f.L, p.g.mu, p.h_conj.mu, omega)


_RATE_FUNS = {
    "t1": rate_thm1,
    "t2": rate_thm2,
    "t3": rate_thm3_problem,
    "t4": rate_thm4,
    "t5": rate_thm5,
    "t6": rate_thm6,
    "t7": rate_thm7,
    "t8": rate_thm8,
    "t9": rate_thm9,
}


def rate_for(theorem_id: str):
    tid = theorem_id.lower()
    if tid not in _RATE_FUNS:
        raise ParameterError(f"unknown certificate {theorem_id!r}; expected one of {sorted(_RATE_FUNS)}")
    return _RATE_FUNS[tid]


def lyapunov(theorem_id: str, p, cfg, s, star=None) -> float:
    """Evaluate the certificate's Lyapunov value at a solver state.

    ``star`` defaults to the problem's known solution.  Certificates t4/t6
    measure the dual distance after projecting onto the range of the
    constraint map, so they need a range projector (t4) or the square-root
    pseudo-inverse stored with the problem (t6).
    """
    tid = theorem_id.lower()
    if star is None:
        star = p.known_solution
    if star is None:
        raise DiagnosticsUnavailableError("no known solution to measure distances against")
    x_star, u_star = star
    gamma, tau = cfg.gamma, cfg.tau
    omega = cfg.estimator.params.omega
    mu_hc = p.h_conj.mu
    dx = sqnorm(s.x - x_star)

    if tid in ("t1", "t2", "t7"):
        return dx / gamma + (1.0 + omega) * (1.0 / tau + 2.0 * mu_hc) * sqnorm(s.u - u_star)
    if tid in ("t3", "t8", "t9"):
        w = (1.0 + omega) * (gamma * (1.0 + omega) + 2.0 * mu_hc)
        return dx / gamma + w * sqnorm(s.u - u_star)
    if tid == "t4":
        if p.K.range_projector is None:
            raise DiagnosticsUnavailableError("t4 diagnostics need a range projector on K")
        proj = p.K.range_projector
        du = sqnorm(proj(s.u) - proj(u_star))
        return dx / gamma + (1.0 + omega) / tau * du
    if tid == "t6":
        qd = p.quadratic_data or {}
        sqrt_pinv = qd.get("w_sqrt_pinv")
        if sqrt_pinv is None:
            raise DiagnosticsUnavailableError("t6 diagnostics need the square-root pseudo-inverse of W")
        u0 = sqrt_pinv @ s.v
        u0_star = sqrt_pinv @ qd["v_star"]
        return dx / gamma + (1.0 + omega) / tau * sqnorm(u0 - u0_star)
    if tid == "t5":
        meta = cfg.estimator.meta
        n, k = meta["n"], meta["k"]
        w = (n / k) * (gamma * n + 2.0 * mu_hc)
        return dx / gamma + w * sqnorm(s.u - u_star)
    if tid == "t10":
        return dx / gamma + gamma * (1.0 + omega) ** 2 * sqnorm(s.u - u_star)
    raise ParameterError(f"unknown certificate {theorem_id!r}")


@dataclass(frozen=True)
class ComplexitySummary:
    kind: str
    parameter_name: str
    parameter: float
    cost_per_digit: float


def complexity_summary(kind: str, kappa: float, d: int = None, mu_f: float = None,
                       L_f: float = None, lam: float = None) -> ComplexitySummary:
    """Recommended tuning and predicted per-accuracy-digit cost, up to constants.

    ``scaffnew``: probability ``p = 1/sqrt(kappa)``, expected communicating
    rounds per digit ``sqrt(kappa)``.  ``rand_k``: sparsifier size
    ``k = ceil(d / sqrt(kappa))``, uplink floats per digit ``d sqrt(kappa)``.
    ``personalized``: probability floor ``sqrt(mu_f min(L_f, lam)) / L_f``,
    rounds per digit ``sqrt(min(L_f, lam) / mu_f)``.
    """
    if kappa < 1:
        raise ParameterError("kappa must be >= 1")
    if kind == "scaffnew":
        p = 1.0 / math.sqrt(kappa)
        return ComplexitySummary(kind, "p", p, math.sqrt(kappa))
    if kind == "rand_k":
        if d is None:
            raise ParameterError("rand_k tuning needs the dimension d")
        k = min(d, max(1, math.ceil(d / math.sqrt(kappa))))
        return ComplexitySummary(kind, "k", float(k), d * math.sqrt(kappa))
    if kind == "personalized":
        if mu_f is None or L_f is None or lam is None:
            raise ParameterError("personalized tuning needs mu_f, L_f and lam")
        p = math.sqrt(mu_f * min(L_f, lam)) / L_f
        return ComplexitySummary(kind, "p_min", p, math.sqrt(min(L_f, lam) / mu_f))
    raise ParameterError(f"unknown kind {kind!r}")
