"""Iteration rules: the deterministic primal-dual splitting and every randomized variant.

All steps share the same three-phase structure: a proximal-gradient
*prediction* of the primal variable, a (possibly randomized, underrelaxed)
dual update, and a primal *correction* that back-propagates the dual move
through ``K*``.  States are immutable; each step returns a new one with
``t + 1``.

Per-iteration randomness comes from a generator re-keyed by
``(seed, t)``, so two algorithms run with the same seed draw identical coins
and subsets at every step.  The trajectory-coupling tests rely on this.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ParameterError, UsageError
from .estimators import RandomEstimator, draw_subset, identity_estimator, stream
from .problem import PrimalDualProblem, check_optimality_residual, sqnorm
from .rates import lyapunov

_GAMMA_MARGIN = 1e-12
_PRODUCT_SLACK = 1e-9


def default_tau(gamma: float, K, params) -> float:
    """Dual step size making the product constraint tight.

    Returns ``1 / (gamma ((1 - zeta) ||K||^2 + omega_ran))``; with that
    choice the dual step is as large as the convergence condition allows and
    gamma remains the only parameter to tune.
    """
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    omega, omega_ran, zeta = params.resolved(K.norm_sq)
    denom = (1.0 - zeta) * K.norm_sq + omega_ran
    if denom <= 0:
        raise ParameterError("(1 - zeta) ||K||^2 + omega_ran must be positive")
    return 1.0 / (gamma * denom)


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, estimator and run parameters for one solver run.

    ``relaxation`` overrides the dual underrelaxation factor (the default,
    ``None``, means ``1/(1 + omega)``).  Other values are exposed for
    experimentation only: no certificate covers them, and the rate functions
    refuse to certify such runs.
    """

    gamma: float
    tau: float
    estimator: RandomEstimator
    iterations: int = 1000
    seed: int = 0
    record_trace: bool = True
    allow_large_gamma: bool = False
    relaxation: Optional[float] = None

    def __post_init__(self):
        if self.gamma <= 0 or self.tau <= 0:
            raise ParameterError("gamma and tau must be positive")
        if self.iterations < 0:
            raise ParameterError("iterations must be nonnegative")
        if self.relaxation is not None and not 0.0 < self.relaxation <= 1.0:
            raise ParameterError("relaxation must lie in (0, 1]")


def configure(p: PrimalDualProblem, gamma: Optional[float] = None, tau: Optional[float] = None,
              estimator: Optional[RandomEstimator] = None, iterations: int = 1000, seed: int = 0,
              record_trace: bool = True, allow_large_gamma: bool = False) -> SolverConfig:
    """Build a validated config for a problem, applying the standard defaults.

    gamma defaults to ``1/L_f``; tau to the tight choice from
    :func:`default_tau`.  Raises when ``gamma`` leaves the ``(0, 2/L_f)``
    window (unless ``allow_large_gamma``) or when
    ``gamma tau ((1-zeta)||K||^2 + omega_ran) > 1``.
    """
    est = estimator if estimator is not None else identity_estimator()
    if gamma is None:
        if p.f.L <= 0:
            raise ParameterError("gamma must be given when the smooth term is absent")
        gamma = 1.0 / p.f.L
    if tau is None:
        tau = default_tau(gamma, p.K, est.params)
    if p.f.L > 0 and not allow_large_gamma and gamma * p.f.L >= 2.0 - _GAMMA_MARGIN:
        raise ParameterError("gamma must satisfy gamma < 2/L_f (set allow_large_gamma to override)")
    omega, omega_ran, zeta = est.params.resolved(p.K.norm_sq)
    product = gamma * tau * ((1.0 - zeta) * p.K.norm_sq + omega_ran)
    if product > 1.0 + _PRODUCT_SLACK:
        raise ParameterError(
            f"step sizes violate gamma tau ((1-zeta)||K||^2 + omega_ran) <= 1 (got {product:.6g})"
        )
    return SolverConfig(gamma, tau, est, iterations, seed, record_trace, allow_large_gamma)


@dataclass(frozen=True)
class SolverState:
    """Iterates plus the cached adjoint ``v = K* u`` and bookkeeping counters."""

    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    t: int = 0
    last_xhat: Optional[np.ndarray] = None
    prox_h_calls: int = 0
    floats_comm: int = 0
    coin_history: tuple = ()


def initial_state(p: PrimalDualProblem, x0=None, u0=None) -> SolverState:
    """Zero-initialized state (dual at zero keeps block sums at zero)."""
    x = np.zeros(p.K.domain_shape) if x0 is None else np.asarray(x0, dtype=float)
    u = np.zeros(p.K.codomain_shape) if u0 is None else np.asarray(u0, dtype=float)
    return SolverState(x=x, u=u, v=p.K.adjoint(u))


@dataclass
class TraceRow:
    t: int
    psi: Optional[float]
    dist_x_sq: Optional[float]
    dist_u_sq: Optional[float]
    bregman: Optional[float]
    prox_h_calls: int
    floats_comm: Optional[int]


class Trace:
    """Per-iteration diagnostics; missing quantities stay ``None``, never 0."""

    columns = ("t", "psi", "dist_x_sq", "dist_u_sq", "bregman", "prox_h_calls", "floats_comm")

    def __init__(self):
        self.rows: list[TraceRow] = []
        self.final_state: Optional[SolverState] = None

    def append(self, row: TraceRow):
        if self.rows and row.t <= self.rows[-1].t:
            raise ParameterError("trace iterations must increase")
        self.rows.append(row)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def __len__(self):
        return len(self.rows)


def _predict(p, cfg, s):
    """Proximal-gradient prediction of the primal variable."""
    return p.g.prox(s.x - cfg.gamma * p.f.grad(s.x) - cfg.gamma * s.v, cfg.gamma)


def pddy_step(p: PrimalDualProblem, cfg: SolverConfig, s: SolverState) -> SolverState:
    """One deterministic primal-dual splitting step (full dual prox)."""
    xhat = _predict(p, cfg, s)
    u1 = p.h_conj.prox(s.u + cfg.tau * p.K.apply(xhat), cfg.tau)
    v1 = p.K.adjoint(u1)
    x1 = xhat - cfg.gamma * (v1 - s.v)
    return replace(s, x=x1, u=u1, v=v1, t=s.t + 1, last_xhat=xhat,
                   prox_h_calls=s.prox_h_calls + 1)


def _record_coin(s, est, draw):
    if est.uses_history:
        token = est.history_token(draw)
        if token is not None:
            return s.coin_history + (token,)
    return s.coin_history


def randprox_step(p: PrimalDualProblem, cfg: SolverConfig, s: SolverState,
                  rng: np.random.Generator) -> SolverState:
    """One randomized step: the dual prox move is estimated, then underrelaxed.

    The dual residual ``r = prox_{tau h*}(u + tau K xhat) - u`` is replaced
    by ``R(r)``; the dual takes the fraction ``1/(1+omega)`` of it and the
    primal correction is amplified by ``(1+omega)`` to compensate.  With the
    identity estimator this is exactly the deterministic step.  A zero coin
    draw skips the dual prox evaluation altogether.
    """
    est = cfg.estimator
    omega = est.params.omega
    xhat = _predict(p, cfg, s)
    draw = est.draw(rng, s.coin_history)
    history = _record_coin(s, est, draw)
    if est.skips_prox_when_zero and est.draw_is_zero(draw):
        return replace(s, x=xhat, t=s.t + 1, last_xhat=xhat, coin_history=history)
    uhat = p.h_conj.prox(s.u + cfg.tau * p.K.apply(xhat), cfg.tau)
    if cfg.relaxation is not None:
        # experimental underrelaxation override; not covered by any certificate
        rho = cfg.relaxation
        u1 = s.u + rho * est.apply(draw, uhat - s.u)
        correction = cfg.gamma / rho
    elif est.is_identity:
        u1 = uhat
        correction = cfg.gamma * (1.0 + omega)
    else:
        u1 = s.u + est.apply(draw, uhat - s.u) / (1.0 + omega)
        correction = cfg.gamma * (1.0 + omega)
    v1 = p.K.adjoint(u1)
    x1 = xhat - correction * (v1 - s.v)
    return replace(s, x=x1, u=u1, v=v1, t=s.t + 1, last_xhat=xhat,
                   prox_h_calls=s.prox_h_calls + 1, coin_history=history)


def _dy_core(p, cfg, s, rng, name):
    """Shared body of the K = Id variants (forward-backward / ADMM / three-operator)."""
    est = cfg.estimator
    omega = est.params.omega
    sg = cfg.gamma * (1.0 + omega)
    xhat = p.g.prox(s.x - cfg.gamma * p.f.grad(s.x) - cfg.gamma * s.u, cfg.gamma)
    draw = est.draw(rng, s.coin_history)
    history = _record_coin(s, est, draw)
    if est.skips_prox_when_zero and est.draw_is_zero(draw):
        return replace(s, x=xhat, v=s.u, t=s.t + 1, last_xhat=xhat, coin_history=history)
    r = xhat - p.h.prox(xhat + sg * s.u, sg)
    d = r if est.is_identity else est.apply(draw, r)
    u1 = s.u + d / (cfg.gamma * (1.0 + omega) ** 2)
    x1 = xhat - d / (1.0 + omega)
    return replace(s, x=x1, u=u1, v=u1, t=s.t + 1, last_xhat=xhat,
                   prox_h_calls=s.prox_h_calls + 1, coin_history=history)


def randprox_fb_step(p, cfg, s, rng) -> SolverState:
    """Randomized forward-backward step (requires g = 0 and K = Id)."""
    return _dy_core(p, cfg, s, rng, "fb")


def randprox_dy_step(p, cfg, s, rng) -> SolverState:
    """Randomized three-operator step (requires K = Id)."""
    return _dy_core(p, cfg, s, rng, "dy")


def randprox_admm_step(p, cfg, s, rng) -> SolverState:
    """Randomized alternating-direction step (requires f = 0 and K = Id)."""
    return _dy_core(p, cfg, s, rng, "admm")


def randprox_lc_step(p, cfg, s, rng) -> SolverState:
    """Randomized step for the linear constraint ``Kx = b`` (g = 0, h = indicator of {b}).

    The dual prox unrolls into the affine residual ``K xhat - b``, so the
    estimator acts on the constraint violation directly.
    """
    est = cfg.estimator
    omega = est.params.omega
    b = p.constraint_rhs
    xhat = s.x - cfg.gamma * p.f.grad(s.x) - cfg.gamma * s.v
    draw = est.draw(rng, s.coin_history)
    history = _record_coin(s, est, draw)
    if est.skips_prox_when_zero and est.draw_is_zero(draw):
        return replace(s, x=xhat, t=s.t + 1, last_xhat=xhat, coin_history=history)
    r = p.K.apply(xhat) - b
    d = r if est.is_identity else est.apply(draw, r)
    u1 = s.u + (cfg.tau / (1.0 + omega)) * d
    v1 = p.K.adjoint(u1)
    x1 = xhat - cfg.gamma * (1.0 + omega) * (v1 - s.v)
    return replace(s, x=x1, u=u1, v=v1, t=s.t + 1, last_xhat=xhat,
                   prox_h_calls=s.prox_h_calls + 1, coin_history=history)


def randprox_skip_step(p, cfg, s, coin: bool) -> SolverState:
    """Coin-flip step: a full dual prox update with probability p, else a pure
    primal prediction.

    On heads the primal correction uses the amplified factor ``gamma/p_min``;
    on tails no prox is evaluated and ``x`` just takes the prediction.
    """
    p_min = cfg.estimator.meta.get("p_min")
    if p_min is None:
        raise UsageError("randprox_skip_step needs a coin-flip estimator (it carries p_min)")
    xhat = _predict(p, cfg, s)
    if coin:
        u1 = p.h_conj.prox(s.u + cfg.tau * p.K.apply(xhat), cfg.tau)
        v1 = p.K.adjoint(u1)
        x1 = xhat - (cfg.gamma / p_min) * (v1 - s.v)
        return replace(s, x=x1, u=u1, v=v1, t=s.t + 1, last_xhat=xhat,
                       prox_h_calls=s.prox_h_calls + 1)
    return replace(s, x=xhat, t=s.t + 1, last_xhat=xhat)


def randprox_minibatch_step(p, cfg, s, subset) -> SolverState:
    """Update only the sampled dual blocks of a block-separable problem.

    Requires the product-space shape (stacking K, per-block conjugate
    oracles) and ``tau = 1/(gamma n)``.  Untouched blocks are copied; the
    primal correction scales by ``gamma n / k``.
    """
    if p.h_conj_blocks is None:
        raise UsageError("minibatch step needs per-block conjugate prox oracles")
    n = len(p.h_conj_blocks)
    k = cfg.estimator.meta.get("k")
    subset = np.asarray(subset, dtype=int)
    if k is not None and len(subset) != k:
        raise UsageError(f"subset has size {len(subset)}, estimator declares k={k}")
    xhat = _predict(p, cfg, s)
    u1 = s.u.copy()
    if p.h_conj_prox_batch is not None:
        u1[subset] = p.h_conj_prox_batch(s.u[subset] + cfg.tau * xhat, subset, cfg.tau)
    else:
        for i in subset:
            u1[i] = p.h_conj_blocks[i].prox(s.u[i] + cfg.tau * xhat, cfg.tau)
    v1 = p.K.adjoint(u1)
    x1 = xhat - (cfg.gamma * n / len(subset)) * (v1 - s.v)
    return replace(s, x=x1, u=u1, v=v1, t=s.t + 1, last_xhat=xhat,
                   prox_h_calls=s.prox_h_calls + len(subset))


def point_saga_step(p, cfg, s, index: int) -> SolverState:
    """Sampled-prox step that keeps one dual block per component function.

    The primal moves through the prox of the sampled component at step
    ``gamma n``; the block's dual is the implied subgradient and the running
    sum ``v`` is maintained incrementally.
    """
    if p.h_blocks is None:
        raise UsageError("point_saga step needs per-block prox oracles")
    n = len(p.h_blocks)
    sn = cfg.gamma * n
    xhat = _predict(p, cfg, s)
    x1 = p.h_blocks[index].prox(sn * s.u[index] + xhat, sn)
    ui1 = s.u[index] + (xhat - x1) / sn
    u1 = s.u.copy()
    u1[index] = ui1
    v1 = s.v + (ui1 - s.u[index])
    return replace(s, x=x1, u=u1, v=v1, t=s.t + 1, last_xhat=xhat,
                   prox_h_calls=s.prox_h_calls + 1)


def randprox_cp_step(p, cfg, s, rng) -> SolverState:
    """Randomized saddle-point step for f = 0 (the primal prox leads).

    The state's ``last_xhat`` is the leading iterate; it must be initialized
    as ``prox_{gamma g}(x0 - gamma K* u0)`` (see :func:`init_state`).
    """
    est = cfg.estimator
    omega = est.params.omega
    xhat = s.last_xhat
    if xhat is None:
        raise UsageError("cp step needs an initialized leading iterate")
    draw = est.draw(rng, s.coin_history)
    history = _record_coin(s, est, draw)
    if est.skips_prox_when_zero and est.draw_is_zero(draw):
        xhat1 = p.g.prox(xhat - cfg.gamma * p.K.adjoint(s.u), cfg.gamma)
        return replace(s, x=xhat, t=s.t + 1, last_xhat=xhat1, coin_history=history)
    uhat = p.h_conj.prox(s.u + cfg.tau * p.K.apply(xhat), cfg.tau)
    if est.is_identity:
        d = uhat - s.u
        u1 = uhat
    else:
        d = est.apply(draw, uhat - s.u)
        u1 = s.u + d / (1.0 + omega)
    x1 = xhat - cfg.gamma * p.K.adjoint(d)
    xhat1 = p.g.prox(xhat - cfg.gamma * p.K.adjoint(u1 + d), cfg.gamma)
    return replace(s, x=x1, u=u1, v=p.K.adjoint(u1), t=s.t + 1, last_xhat=xhat1,
                   prox_h_calls=s.prox_h_calls + 1, coin_history=history)


def randprilico_step(p, cfg, s, rng) -> SolverState:
    """Randomized primal-only step for the squared-map constraint ``Wx = a``.

    Works directly with ``v`` (the adjoint image of the dual); the estimator
    must commute with the square root of W for the reduction to the
    constraint form to hold.
    """
    est = cfg.estimator
    if not est.commutes_with_sqrt:
        raise UsageError("this step needs an estimator that commutes with sqrt(W)")
    W, a = p.w_map, p.w_rhs
    omega = est.params.omega
    xhat = s.x - cfg.gamma * p.f.grad(s.x) - cfg.gamma * s.v
    draw = est.draw(rng, s.coin_history)
    history = _record_coin(s, est, draw)
    if est.skips_prox_when_zero and est.draw_is_zero(draw):
        return replace(s, x=xhat, t=s.t + 1, last_xhat=xhat, coin_history=history)
    r = W.apply(xhat) - a
    d = cfg.tau * (r if est.is_identity else est.apply(draw, r))
    v1 = s.v + d / (1.0 + omega)
    x1 = xhat - cfg.gamma * d
    return replace(s, x=x1, u=v1, v=v1, t=s.t + 1, last_xhat=xhat,
                   prox_h_calls=s.prox_h_calls + 1, coin_history=history)


# --- algorithm registry -----------------------------------------------------


def _require(cond, message):
    if not cond:
        raise UsageError(message)


def _check_any(p, cfg):
    pass


def _check_fb(p, cfg):
    _require(p.g_is_zero and p.k_is_identity, "fb requires g = 0 and K = Id")


def _check_dy(p, cfg):
    _require(p.k_is_identity, "dy requires K = Id")


def _check_admm(p, cfg):
    _require(p.f_is_zero and p.k_is_identity, "admm requires f = 0 and K = Id")


def _check_cp(p, cfg):
    _require(p.f_is_zero, "cp requires f = 0")


def _check_lc(p, cfg):
    _require(p.g_is_zero and p.constraint_rhs is not None,
             "lc requires g = 0 and h = indicator of {b}")


def _check_skip(p, cfg):
    _require(cfg.estimator.kind == "bernoulli", "skip requires a coin-flip estimator")


def _check_minibatch(p, cfg):
    _require(p.h_conj_blocks is not None, "minibatch requires a block-separable problem")
    _require(cfg.estimator.kind == "rand_k_blocks", "minibatch requires a k-of-n block sampler")
    n = len(p.h_conj_blocks)
    _require(cfg.estimator.meta.get("n") == n, "estimator block count must match the problem")
    _require(abs(cfg.tau * cfg.gamma * n - 1.0) <= 1e-9, "minibatch requires tau = 1/(gamma n)")


def _check_point_saga(p, cfg):
    _require(p.h_blocks is not None, "point_saga requires a block-separable problem")


def _check_prilico(p, cfg):
    _require(p.w_map is not None, "prilico requires the squared-map constraint (W, a)")
    omega = cfg.estimator.params.omega
    _require(cfg.gamma * cfg.tau * p.w_map.norm_sq * (1.0 + omega) <= 1.0 + _PRODUCT_SLACK,
             "prilico requires gamma tau ||W|| (1 + omega) <= 1")


def _init_std(p, cfg, x0, u0):
    return initial_state(p, x0, u0)


def _init_cp(p, cfg, x0, u0):
    s = initial_state(p, x0, u0)
    xhat0 = p.g.prox(s.x - cfg.gamma * p.K.adjoint(s.u), cfg.gamma)
    return replace(s, last_xhat=xhat0)


def _step_pddy(p, cfg, s, rng):
    return pddy_step(p, cfg, s)


def _step_skip(p, cfg, s, rng):
    est = cfg.estimator
    draw = est.draw(rng, s.coin_history)
    s1 = randprox_skip_step(p, cfg, s, not est.draw_is_zero(draw))
    return replace(s1, coin_history=_record_coin(s, est, draw))


def _step_minibatch(p, cfg, s, rng):
    return randprox_minibatch_step(p, cfg, s, cfg.estimator.draw(rng))


def _step_point_saga(p, cfg, s, rng):
    index = int(draw_subset(rng, len(p.h_blocks), 1)[0])
    return point_saga_step(p, cfg, s, index)


@dataclass(frozen=True)
class Algorithm:
    name: str
    check: callable
    init: callable
    step: callable


ALGORITHMS = {
    "pddy": Algorithm("pddy", _check_any, _init_std, _step_pddy),
    "randprox": Algorithm("randprox", _check_any, _init_std, randprox_step),
    "fb": Algorithm("fb", _check_fb, _init_std, randprox_fb_step),
    "lc": Algorithm("lc", _check_lc, _init_std, randprox_lc_step),
    "skip": Algorithm("skip", _check_skip, _init_std, _step_skip),
    "minibatch": Algorithm("minibatch", _check_minibatch, _init_std, _step_minibatch),
    "point_saga": Algorithm("point_saga", _check_point_saga, _init_std, _step_point_saga),
    "cp": Algorithm("cp", _check_cp, _init_cp, randprox_cp_step),
    "admm": Algorithm("admm", _check_admm, _init_std, randprox_admm_step),
    "dy": Algorithm("dy", _check_dy, _init_std, randprox_dy_step),
    "prilico": Algorithm("prilico", _check_prilico, _init_std, randprilico_step),
}


def init_state(p, cfg, algorithm: str, x0=None, u0=None) -> SolverState:
    return _algorithm(algorithm).init(p, cfg, x0, u0)


def _algorithm(name: str) -> Algorithm:
    if name not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}")
    return ALGORITHMS[name]


def _trace_context(p):
    if p.known_solution is None:
        return None
    x_star, u_star = p.known_solution
    if p.f.value is not None:
        return x_star, u_star, p.f.grad(x_star), p.f.value(x_star)
    return x_star, u_star, None, None


def _trace_row(p, cfg, s, theorem_id, ctx) -> TraceRow:
    psi = dist_x = dist_u = bregman = None
    if ctx is not None:
        x_star, u_star, g_star, f_star = ctx
        dist_x = sqnorm(s.x - x_star)
        dist_u = sqnorm(s.u - u_star) if s.u.shape == np.shape(u_star) else None
        if theorem_id is not None:
            psi = lyapunov(theorem_id, p, cfg, s)
        if g_star is not None:
            bregman = float(p.f.value(s.x) - f_star
                            - np.dot(np.ravel(g_star), np.ravel(s.x - x_star)))
    return TraceRow(s.t, psi, dist_x, dist_u, bregman, s.prox_h_calls,
                    s.floats_comm if s.floats_comm else None)


def run(p: PrimalDualProblem, cfg: SolverConfig, algorithm: str,
        max_iters: Optional[int] = None, residual_tol: Optional[float] = None,
        theorem_id: Optional[str] = None, x0=None, u0=None) -> Trace:
    """Iterate an algorithm and record per-iteration diagnostics.

    Stops after ``max_iters`` (default ``cfg.iterations``) or once the
    optimality residual drops below ``residual_tol``.  Lyapunov values are
    recorded only when a certificate id is given and the problem knows its
    solution.  Deterministic for a fixed seed.

    Returns the trace; the last state is available as ``trace.final_state``.
    """
    alg = _algorithm(algorithm)
    alg.check(p, cfg)
    s = alg.init(p, cfg, x0, u0)
    trace = Trace()
    ctx = _trace_context(p)
    if cfg.record_trace:
        trace.append(_trace_row(p, cfg, s, theorem_id, ctx))
    horizon = cfg.iterations if max_iters is None else max_iters
    for _ in range(horizon):
        rng = stream(cfg.seed, s.t)
        s = alg.step(p, cfg, s, rng)
        if cfg.record_trace:
            trace.append(_trace_row(p, cfg, s, theorem_id, ctx))
        if residual_tol is not None and check_optimality_residual(p, s.x, s.u) <= residual_tol:
            break
    trace.final_state = s
    return trace
