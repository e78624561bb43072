"""Problem data model: linear maps, oracles, and the primal-dual problem triple.

The solvers minimize ``f(x) + g(x) + h(Kx)`` where ``f`` is smooth with an
``L``-Lipschitz gradient, ``g`` and ``h`` have cheap proximity operators and
``K`` is a linear map.  All vectors are dense float64 arrays.  Product spaces
are arrays of shape ``(n, d)`` with the leading axis indexing blocks.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError, ShapeError

KNOWN_SOLUTION_TOL = 1e-8


def norm(a) -> float:
    return float(np.linalg.norm(np.ravel(a)))


def sqnorm(a) -> float:
    a = np.ravel(a)
    return float(np.dot(a, a))


def inner(a, b) -> float:
    return float(np.dot(np.ravel(a), np.ravel(b)))


@dataclass(frozen=True)
class LinearMap:
    """A linear operator together with the constants the rate theory consumes.

    Parameters
    ----------
    apply : callable
        The map ``K``: domain vector -> codomain vector.
    adjoint : callable
        The adjoint ``K*``: codomain vector -> domain vector.
    norm_sq : float
        ``||K||^2``, the largest eigenvalue of ``K K*``.
    lambda_min : float
        Smallest eigenvalue of ``K K*`` (0 when ``K*`` has a kernel).
    lambda_min_plus : float
        Smallest nonzero eigenvalue of ``K K*``.
    domain_shape, codomain_shape : tuple
        Array shapes of the two spaces.
    range_projector : callable, optional
        Orthogonal projector onto ``ran(K)``; enables the diagnostics that
        track the dual iterate inside the range.
    """

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    norm_sq: float
    lambda_min: float
    lambda_min_plus: float
    domain_shape: tuple
    codomain_shape: tuple
    range_projector: Optional[Callable[[np.ndarray], np.ndarray]] = None


def identity_map(shape) -> LinearMap:
    """Identity operator on arrays of the given shape."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    return LinearMap(
        apply=lambda x: x,
        adjoint=lambda u: u,
        norm_sq=1.0,
        lambda_min=1.0,
        lambda_min_plus=1.0,
        domain_shape=shape,
        codomain_shape=shape,
        range_projector=lambda u: u,
    )


def scaled_identity_map(alpha: float, shape) -> LinearMap:
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    return LinearMap(
        apply=lambda x: alpha * x,
        adjoint=lambda u: alpha * u,
        norm_sq=alpha**2,
        lambda_min=alpha**2,
        lambda_min_plus=alpha**2,
        domain_shape=shape,
        codomain_shape=shape,
        range_projector=lambda u: u,
    )


def matrix_map(M: np.ndarray, rank_tol: float = 1e-10) -> LinearMap:
    """Dense matrix as a linear map, with spectral constants from the SVD."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise ParameterError("matrix_map needs a nonempty 2-d array")
    m, d = M.shape
    U, s, _ = np.linalg.svd(M)
    # eigenvalues of K K* are the squared singular values, padded with zeros
    lam_min = float(s[m - 1] ** 2) if m <= len(s) else 0.0
    r = int(np.sum(s > rank_tol * s[0]))
    if r == 0:
        raise ParameterError("matrix_map needs a nonzero matrix")
    lam_plus = float(s[r - 1] ** 2)
    Ur = U[:, :r]

    def project(u):
        return Ur @ (Ur.T @ u)

    return LinearMap(
        apply=lambda x: M @ x,
        adjoint=lambda u: M.T @ u,
        norm_sq=float(s[0] ** 2),
        lambda_min=lam_min,
        lambda_min_plus=lam_plus,
        domain_shape=(d,),
        codomain_shape=(m,),
        range_projector=project,
    )


def stacking_map(n: int, d: int) -> LinearMap:
    """The map x -> (x, ..., x) with n copies; K* sums the blocks.

    ``K* K = n Id`` so ``||K||^2 = n``; the range is the consensus subspace.
    """
    if n < 1:
        raise ParameterError("stacking_map needs n >= 1")

    def project(u):
        return np.broadcast_to(u.mean(axis=0), u.shape).copy()

    return LinearMap(
        apply=lambda x: np.tile(x, (n, 1)),
        adjoint=lambda u: u.sum(axis=0),
        norm_sq=float(n),
        lambda_min=float(n) if n == 1 else 0.0,
        lambda_min_plus=float(n),
        domain_shape=(d,),
        codomain_shape=(n, d),
        range_projector=project,
    )


@dataclass(frozen=True)
class SmoothOracle:
    """Gradient oracle of a smooth convex function.

    ``L`` is the gradient's Lipschitz constant and ``mu`` the strong-convexity
    modulus (0 for merely convex).  ``L == 0`` encodes an absent smooth term:
    the gradient must then be identically zero.  ``value`` is optional and
    only needed for Bregman-divergence diagnostics.
    """

    grad: Callable[[np.ndarray], np.ndarray]
    L: float
    mu: float = 0.0
    value: Optional[Callable[[np.ndarray], float]] = None


def zero_smooth(shape) -> SmoothOracle:
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    return SmoothOracle(
        grad=lambda x: np.zeros(shape),
        L=0.0,
        mu=0.0,
        value=lambda x: 0.0,
    )


@dataclass(frozen=True)
class ProxOracle:
    """Proximity operator oracle.

    ``prox(x, step)`` returns ``argmin_v phi(v) + ||v - x||^2 / (2 step)``,
    i.e. the prox of ``step * phi`` at ``x``.  ``mu`` is the strong-convexity
    modulus of ``phi``; for a conjugate oracle it must be stated by the
    caller (it is never inferred from the prox).
    """

    prox: Callable[[np.ndarray, float], np.ndarray]
    mu: float = 0.0


def identity_prox() -> ProxOracle:
    """Prox of the zero function."""
    return ProxOracle(prox=lambda x, step: x, mu=0.0)


def moreau_conjugate_prox(h: ProxOracle, gamma: float, x: np.ndarray) -> np.ndarray:
    """Prox of ``gamma * h^*`` computed from the prox of ``h``.

    Uses ``prox_{gamma h*}(x) = x - gamma prox_{h/gamma}(x / gamma)``.
    """
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    return x - gamma * h.prox(x / gamma, 1.0 / gamma)


def conjugate_oracle(h: ProxOracle, mu: float = 0.0) -> ProxOracle:
    """Prox oracle for ``h^*`` derived through the Moreau identity."""
    return ProxOracle(prox=lambda x, step: moreau_conjugate_prox(h, step, x), mu=mu)


@dataclass(frozen=True)
class PrimalDualProblem:
    """Bundle of oracles and constants describing ``min f(x) + g(x) + h(Kx)``.

    ``known_solution`` is a pair ``(x_star, u_star)`` satisfying the coupled
    optimality inclusions; when present it is verified at construction to a
    fixed-point residual of 1e-8.

    The ``*_is_zero`` / ``k_is_identity`` flags let shape-restricted
    iterations refuse incompatible problems up front.  ``constraint_rhs``
    carries the right-hand side ``b`` when ``h`` is the indicator of ``{b}``;
    ``w_map`` / ``w_rhs`` carry the squared-map form ``(W, a) = (K*K, K*b)``
    of a linear constraint.  ``h_blocks`` / ``h_conj_blocks`` expose the
    per-block prox oracles of a block-separable ``h``.
    """

    f: SmoothOracle
    g: ProxOracle
    h: ProxOracle
    h_conj: ProxOracle
    K: LinearMap
    known_solution: Optional[tuple] = None
    f_is_zero: bool = False
    g_is_zero: bool = False
    k_is_identity: bool = False
    constraint_rhs: Optional[np.ndarray] = None
    w_map: Optional[LinearMap] = None
    w_rhs: Optional[np.ndarray] = None
    h_blocks: Optional[tuple] = None
    h_conj_blocks: Optional[tuple] = None
    h_conj_prox_batch: Optional[Callable] = None  # (u_sub, idx, step) -> array
    quadratic_data: Optional[dict] = None
    name: str = ""

    def __post_init__(self):
        if self.known_solution is not None:
            x_star, u_star = self.known_solution
            res = check_optimality_residual(self, x_star, u_star)
            if res > KNOWN_SOLUTION_TOL:
                raise ParameterError(
                    f"known_solution violates the optimality inclusions: residual {res:.3e}"
                )


def check_optimality_residual(p: PrimalDualProblem, x: np.ndarray, u: np.ndarray) -> float:
    """Fixed-point residual of the coupled optimality inclusions at ``(x, u)``.

    Zero exactly when ``(x, u)`` is a primal-dual solution pair.  Measured at
    reference step sizes gamma = tau = 1 through the prox characterizations::

        ||x - prox_g(x - grad_f(x) - K* u)|| + ||u - prox_{h*}(u + K x)||
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != p.K.domain_shape:
        raise ShapeError(f"x has shape {x.shape}, expected {p.K.domain_shape}")
    if u.shape != p.K.codomain_shape:
        raise ShapeError(f"u has shape {u.shape}, expected {p.K.codomain_shape}")
    r1 = norm(x - p.g.prox(x - p.f.grad(x) - p.K.adjoint(u), 1.0))
    r2 = norm(u - p.h_conj.prox(u + p.K.apply(x), 1.0))
    return r1 + r2


def estimate_norm_sq(K: LinearMap, iters: int, seed: int) -> float:
    """Power-iteration estimate of ``||K||^2`` (a Rayleigh-quotient lower bound).

    Fallback for maps without an analytic norm; before feeding the result
    into step-size bounds, inflate it (the catalog uses a factor 1.01) so the
    product constraint stays on the safe side.
    """
    if iters < 1:
        raise ParameterError("iters must be >= 1")
    dim = int(np.prod(K.domain_shape))
    if dim == 0:
        raise ParameterError("K has a zero-dimensional domain")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.domain_shape)
    x = x / norm(x)
    ray = 0.0
    for _ in range(iters):
        y = K.apply(x)
        ray = sqnorm(y) / sqnorm(x)
        x = K.adjoint(y)
        nx = norm(x)
        if nx == 0.0:
            break
        x = x / nx
    return float(ray)


_NORM_INFLATION = 1.01


def map_from_functions(apply: Callable, adjoint: Callable, domain_shape, codomain_shape,
                       norm_sq: Optional[float] = None, lambda_min: float = 0.0,
                       lambda_min_plus: float = 0.0,
                       range_projector: Optional[Callable] = None,
                       norm_iters: int = 200, seed: int = 0) -> LinearMap:
    """Wrap a matrix-free operator as a :class:`LinearMap`.

    Prefer supplying ``norm_sq`` analytically.  When it is omitted, a
    power-iteration estimate is used, inflated by 1% so downstream step-size
    products stay on the safe side of their bound (the Rayleigh quotient
    itself only ever underestimates).  The spectral lower bounds default to 0
    ("not declared"): rate certificates that need them refuse to certify
    rather than overclaim.
    """
    domain_shape = (domain_shape,) if np.isscalar(domain_shape) else tuple(domain_shape)
    codomain_shape = (codomain_shape,) if np.isscalar(codomain_shape) else tuple(codomain_shape)
    if norm_sq is None:
        probe = LinearMap(apply, adjoint, 0.0, 0.0, 1.0, domain_shape, codomain_shape)
        norm_sq = _NORM_INFLATION * estimate_norm_sq(probe, norm_iters, seed)
    return LinearMap(apply, adjoint, float(norm_sq), float(lambda_min),
                     float(lambda_min_plus), domain_shape, codomain_shape, range_projector)


def validate_problem(p: PrimalDualProblem, samples: int = 100, seed: int = 0) -> None:
    """Check the declared constants on random sample pairs.

    Verifies adjoint consistency, the operator-norm bound, the spectral lower
    bounds, gradient Lipschitz continuity and strong monotonicity, and firm
    nonexpansiveness of every prox oracle.  Raises ``ValueError`` naming the
    first violated inequality.
    """
    rng = np.random.default_rng(seed)
    K = p.K
    tiny = 1e-9

    def _fail(what, lhs, rhs):
        raise ValueError(f"problem validation failed: {what} ({lhs:.6e} vs {rhs:.6e})")

    for _ in range(samples):
        x = rng.standard_normal(K.domain_shape)
        x2 = rng.standard_normal(K.domain_shape)
        u = rng.standard_normal(K.codomain_shape)

        kx = K.apply(x)
        ku = K.adjoint(u)
        lhs, rhs = inner(kx, u), inner(x, ku)
        if abs(lhs - rhs) > 1e-10 * (1.0 + abs(lhs)):
            _fail("adjoint consistency", lhs, rhs)
        if sqnorm(kx) > K.norm_sq * sqnorm(x) * (1 + 1e-10) + tiny:
            _fail("operator norm bound", sqnorm(kx), K.norm_sq * sqnorm(x))
        if K.lambda_min * sqnorm(u) > sqnorm(ku) * (1 + 1e-10) + tiny:
            _fail("lambda_min bound", K.lambda_min * sqnorm(u), sqnorm(ku))
        ur = K.apply(rng.standard_normal(K.domain_shape))  # element of ran(K)
        if K.lambda_min_plus * sqnorm(ur) > sqnorm(K.adjoint(ur)) * (1 + 1e-10) + tiny:
            _fail("lambda_min_plus bound", K.lambda_min_plus * sqnorm(ur), sqnorm(K.adjoint(ur)))

        gdiff = p.f.grad(x) - p.f.grad(x2)
        dx = x - x2
        if norm(gdiff) > p.f.L * norm(dx) * (1 + 1e-10) + tiny:
            _fail("gradient Lipschitz", norm(gdiff), p.f.L * norm(dx))
        if inner(gdiff, dx) < p.f.mu * sqnorm(dx) * (1 - 1e-10) - tiny:
            _fail("gradient strong monotonicity", inner(gdiff, dx), p.f.mu * sqnorm(dx))

        step = float(rng.uniform(0.1, 3.0))
        for oracle, dom in ((p.g, K.domain_shape), (p.h, K.codomain_shape), (p.h_conj, K.codomain_shape)):
            a = rng.standard_normal(dom)
            b = rng.standard_normal(dom)
            pa, pb = oracle.prox(a, step), oracle.prox(b, step)
            if sqnorm(pa - pb) > inner(pa - pb, a - b) + tiny:
                _fail("firm nonexpansiveness", sqnorm(pa - pb), inner(pa - pb, a - b))
