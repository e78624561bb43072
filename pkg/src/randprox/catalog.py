"""Closed-form proximity operators and synthetic problem generators.

Every generated problem stores an exact solution computed by direct dense
linear algebra (stationarity or KKT systems), never by running one of the
solvers under test.  The analytic pieces are kept on the problem in
``quadratic_data`` so the reference oracle can recompute the solution
independently.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .problem import (PrimalDualProblem, ProxOracle, SmoothOracle, identity_map,
                      identity_prox, matrix_map, stacking_map, zero_smooth)


# --- proximity operators ------------------------------------------------------


def prox_l1(x, gamma: float):
    """Soft thresholding: componentwise sign(x) max(|x| - gamma, 0)."""
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def prox_indicator_point(x, b):
    """Projection onto the single point {b} (any step size)."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if x.shape != b.shape:
        raise ShapeError(f"x has shape {x.shape}, b has shape {b.shape}")
    return b.copy()


def prox_sq_norm(x, gamma: float, lam: float, center):
    """Prox of (lam/2)||. - center||^2: shrinks x toward center."""
    if gamma <= 0 or lam <= 0:
        raise ParameterError("gamma and lam must be positive")
    x = np.asarray(x, dtype=float)
    center = np.broadcast_to(np.asarray(center, dtype=float), x.shape)
    return (x + gamma * lam * center) / (1.0 + gamma * lam)


def prox_consensus(x):
    """Projection onto the consensus subspace: every block becomes the mean."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ShapeError("consensus prox expects a blocked (n, d) array")
    return np.broadcast_to(x.mean(axis=0), x.shape).copy()


# --- catalog entries -----------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    """A function with both its prox and the prox of its conjugate in closed form.

    ``mu`` / ``mu_conj`` are the strong-convexity moduli of the function and
    of its conjugate.
    """

    name: str
    prox: ProxOracle
    conjugate_prox: ProxOracle
    mu: float = 0.0
    mu_conj: float = 0.0


def entry_zero(shape=None) -> CatalogEntry:
    # conjugate is the indicator of {0}: its prox is constant zero
    return CatalogEntry(
        name="zero",
        prox=identity_prox(),
        conjugate_prox=ProxOracle(prox=lambda x, step: np.zeros_like(x)),
    )


def entry_l1(alpha: float = 1.0) -> CatalogEntry:
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    return CatalogEntry(
        name="l1",
        prox=ProxOracle(prox=lambda x, step: prox_l1(x, step * alpha)),
        conjugate_prox=ProxOracle(prox=lambda x, step: np.clip(x, -alpha, alpha)),
    )


def entry_indicator_point(b) -> CatalogEntry:
    b = np.asarray(b, dtype=float)
    return CatalogEntry(
        name="indicator_point",
        prox=ProxOracle(prox=lambda x, step: prox_indicator_point(x, b)),
        conjugate_prox=ProxOracle(prox=lambda u, step: u - step * b),
    )


def entry_sq_norm(lam: float, center) -> CatalogEntry:
    center = np.asarray(center, dtype=float)
    return CatalogEntry(
        name="sq_norm",
        prox=ProxOracle(prox=lambda x, step: prox_sq_norm(x, step, lam, center), mu=lam),
        conjugate_prox=ProxOracle(
            prox=lambda u, step: (u - step * center) / (1.0 + step / lam),
            mu=1.0 / lam,
        ),
        mu=lam,
        mu_conj=1.0 / lam,
    )


def entry_consensus() -> CatalogEntry:
    # conjugate is the indicator of the zero-sum subspace
    return CatalogEntry(
        name="consensus",
        prox=ProxOracle(prox=lambda x, step: prox_consensus(x)),
        conjugate_prox=ProxOracle(prox=lambda u, step: u - u.mean(axis=0)),
    )


def entry_consensus_penalty(lam: float) -> CatalogEntry:
    """(lam/2) sum_i ||x_i - mean(x)||^2 on blocked (n, d) arrays."""
    if lam <= 0:
        raise ParameterError("lam must be positive")

    def prox(x, step):
        mean = np.broadcast_to(x.mean(axis=0), x.shape)
        return mean + (x - mean) / (1.0 + step * lam)

    def conj_prox(u, step):
        dev = u - u.mean(axis=0)
        return dev * (lam / (lam + step))

    return CatalogEntry(
        name="consensus_penalty",
        prox=ProxOracle(prox=prox),
        conjugate_prox=ProxOracle(prox=conj_prox, mu=1.0 / lam),
        mu_conj=1.0 / lam,
    )


def entry_diag_quadratic(d, b) -> CatalogEntry:
    """(1/2) x^T diag(d) x - b^T x with positive diagonal d."""
    d = np.asarray(d, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(d <= 0):
        raise ParameterError("the diagonal must be positive")
    return CatalogEntry(
        name="diag_quadratic",
        prox=ProxOracle(prox=lambda x, step: (x + step * b) / (1.0 + step * d),
                        mu=float(d.min())),
        conjugate_prox=ProxOracle(prox=lambda u, step: (u * d - step * b) / (d + step),
                                  mu=1.0 / float(d.max())),
        mu=float(d.min()),
        mu_conj=1.0 / float(d.max()),
    )


CATALOG = {
    "zero": entry_zero,
    "l1": entry_l1,
    "indicator_point": entry_indicator_point,
    "sq_norm": entry_sq_norm,
    "consensus": entry_consensus,
    "consensus_penalty": entry_consensus_penalty,
    "diag_quadratic": entry_diag_quadratic,
}


# --- quadratic builders ---------------------------------------------------------


def random_spd(dim: int, mu: float, L: float, rng) -> np.ndarray:
    """Symmetric matrix with spectrum spread over [mu, L] (endpoints included)."""
    eigs = np.linspace(mu, L, dim) if dim > 1 else np.array([L])
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    A = (Q * eigs) @ Q.T
    return (A + A.T) / 2.0


def _quadratic_oracle(A, b, mu, L) -> SmoothOracle:
    return SmoothOracle(
        grad=lambda x: A @ x - b,
        L=L,
        mu=mu,
        value=lambda x: float(0.5 * x @ (A @ x) - b @ x),
    )


def _blockwise_quadratic_oracle(As, bs, mu, L) -> SmoothOracle:
    A = np.asarray(As)
    B = np.asarray(bs)
    return SmoothOracle(
        grad=lambda x: np.einsum("nij,nj->ni", A, x) - B,
        L=L,
        mu=mu,
        value=lambda x: float(0.5 * np.einsum("ni,nij,nj->", x, A, x) - np.sum(B * x)),
    )


# --- exact solutions (dense stationarity / KKT solves) ---------------------------


def solve_variant(qd: dict) -> tuple:
    """Exact (x*, u*) for a generated problem from its stored analytic pieces."""
    variant = qd["variant"]
    if variant == "plain":
        x = np.linalg.solve(qd["A"], qd["b"])
        return x, np.zeros_like(x)
    if variant == "l1":
        return qd["x_star"], qd["u_star"]  # built by construction, see make_quadratic_problem
    if variant == "linear_constraint":
        A, b, K, b_con = qd["A"], qd["b"], qd["K_mat"], qd["b_con"]
        dim, m = A.shape[0], K.shape[0]
        M = np.zeros((dim + m, dim + m))
        M[:dim, :dim] = A
        M[:dim, dim:] = K.T
        M[dim:, :dim] = K
        rhs = np.concatenate([b, b_con])
        if qd.get("rank_deficient"):
            sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)  # min-norm picks u in ran(K)
        else:
            sol = np.linalg.solve(M, rhs)
        return sol[:dim], sol[dim:]
    if variant == "personalized_fl":
        As, bs, lam = qd["As"], qd["bs"], qd["lam"]
        n, d = len(As), As[0].shape[0]
        nd = n * d
        M = np.zeros((nd, nd))
        for i in range(n):
            M[i * d:(i + 1) * d, i * d:(i + 1) * d] = As[i] + lam * np.eye(d)
        consensus = np.kron(np.full((n, n), 1.0 / n), np.eye(d))
        M -= lam * consensus
        x = np.linalg.solve(M, np.concatenate(bs)).reshape(n, d)
        u = -(np.einsum("nij,nj->ni", np.asarray(As), x) - np.asarray(bs))
        return x, u
    if variant == "consensus_fl":
        As, bs = qd["As"], qd["bs"]
        n = len(As)
        xbar = np.linalg.solve(sum(As), sum(bs))
        x = np.tile(xbar, (n, 1))
        u = -(np.einsum("nij,j->ni", np.asarray(As), xbar) - np.asarray(bs))
        return x, u
    if variant == "product":
        A, b = qd["A"], qd["b"]
        D, bs, mu_g = np.asarray(qd["D"]), np.asarray(qd["bs"]), qd["mu_g"]
        dim = b.shape[0]
        M = A + mu_g * np.eye(dim) + np.diag(D.sum(axis=0))
        x = np.linalg.solve(M, b + bs.sum(axis=0))
        u = D * x - bs
        return x, u
    if variant == "least_squares":
        M, y = qd["M"], qd["y"]
        if qd["h_kind"] == "sq_norm":
            x = np.linalg.solve(M.T @ M + np.eye(M.shape[1]), M.T @ y)
            return x, x.copy()  # stationarity forces u* = x*
        x, *_ = np.linalg.lstsq(M, y, rcond=None)  # minimum-norm solution
        return x, np.zeros_like(x)
    raise ParameterError(f"unknown variant {variant!r}")


def objective_value(p: PrimalDualProblem, x) -> float:
    """f(x) + g(x) + h(Kx) evaluated from the stored analytic pieces."""
    qd = p.quadratic_data or {}
    total = p.f.value(x) if p.f.value is not None else 0.0
    if qd.get("mu_g"):
        total += 0.5 * qd["mu_g"] * float(np.ravel(x) @ np.ravel(x))
    variant = qd.get("variant")
    kx = p.K.apply(x)
    if variant == "l1":
        total += qd["alpha"] * float(np.abs(kx).sum())
    elif variant == "personalized_fl":
        dev = kx - kx.mean(axis=0)
        total += 0.5 * qd["lam"] * float(np.ravel(dev) @ np.ravel(dev))
    elif variant == "product":
        D, bs = np.asarray(qd["D"]), np.asarray(qd["bs"])
        total += float(0.5 * np.sum(D * kx * kx) - np.sum(bs * kx))
    return float(total)


# --- problem generators -----------------------------------------------------------


_VARIANTS = ("plain", "l1", "linear_constraint", "personalized_fl", "consensus_fl")


def make_quadratic_problem(dim: int, mu: float, L: float, seed: int, variant: str = "plain",
                           alpha: float = 1.0, m: int = None, rank_deficient: bool = False,
                           n_blocks: int = 4, lam: float = 1.0) -> PrimalDualProblem:
    """Quadratic test problem ``f(x) = x'Ax/2 - b'x`` with a certified solution.

    Variants: ``plain`` (no nonsmooth part), ``l1`` (h = alpha ||.||_1,
    solution built by choosing x* first and back-solving for b),
    ``linear_constraint`` (Kx = b_con with b_con in ran(K); set
    ``rank_deficient`` to exercise a K with a nontrivial kernel),
    ``personalized_fl`` (n blocks coupled by a quadratic consensus penalty of
    weight ``lam``) and ``consensus_fl`` (hard consensus constraint).
    """
    variant = variant.replace("-", "_")
    if variant not in _VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; expected one of {_VARIANTS}")
    if not 0 < mu <= L:
        raise ParameterError("need 0 < mu <= L")
    rng = np.random.default_rng(seed)

    if variant in ("personalized_fl", "consensus_fl"):
        As = [random_spd(dim, mu, L, rng) for _ in range(n_blocks)]
        bs = [rng.standard_normal(dim) for _ in range(n_blocks)]
        f = _blockwise_quadratic_oracle(As, bs, mu, L)
        K = identity_map((n_blocks, dim))
        if variant == "personalized_fl":
            entry = entry_consensus_penalty(lam)
            qd = {"variant": variant, "As": As, "bs": bs, "lam": lam}
        else:
            entry = entry_consensus()
            qd = {"variant": variant, "As": As, "bs": bs}
        x_star, u_star = solve_variant(qd)
        return PrimalDualProblem(
            f=f, g=identity_prox(), h=entry.prox, h_conj=entry.conjugate_prox, K=K,
            known_solution=(x_star, u_star), g_is_zero=True, k_is_identity=True,
            quadratic_data=qd, name=f"quadratic[{variant}]",
        )

    A = random_spd(dim, mu, L, rng)
    b = rng.standard_normal(dim)

    if variant == "plain":
        entry = entry_zero()
        qd = {"variant": "plain", "A": A, "b": b}
        x_star, u_star = solve_variant(qd)
        return PrimalDualProblem(
            f=_quadratic_oracle(A, b, mu, L), g=identity_prox(),
            h=entry.prox, h_conj=entry.conjugate_prox, K=identity_map(dim),
            known_solution=(x_star, u_star), g_is_zero=True, k_is_identity=True,
            quadratic_data=qd, name="quadratic[plain]",
        )

    if variant == "l1":
        # choose a sparse x* and a valid subgradient u*, then set b so the
        # optimality inclusions hold by construction
        x_star = rng.standard_normal(dim)
        zero_idx = rng.choice(dim, size=dim // 2, replace=False)
        x_star[zero_idx] = 0.0
        u_star = alpha * np.sign(x_star)
        u_star[zero_idx] = alpha * rng.uniform(-0.5, 0.5, size=len(zero_idx))
        b = A @ x_star + u_star
        entry = entry_l1(alpha)
        qd = {"variant": "l1", "A": A, "b": b, "alpha": alpha,
              "x_star": x_star, "u_star": u_star}
        return PrimalDualProblem(
            f=_quadratic_oracle(A, b, mu, L), g=identity_prox(),
            h=entry.prox, h_conj=entry.conjugate_prox, K=identity_map(dim),
            known_solution=(x_star, u_star), g_is_zero=True, k_is_identity=True,
            quadratic_data=qd, name="quadratic[l1]",
        )

    # linear constraint
    m = m if m is not None else max(1, dim // 2)
    if rank_deficient:
        r = max(1, m - 1)
        K_mat = rng.standard_normal((m, r)) @ rng.standard_normal((r, dim))
    else:
        K_mat = rng.standard_normal((m, dim))
    b_con = K_mat @ rng.standard_normal(dim)
    K = matrix_map(K_mat)
    entry = entry_indicator_point(b_con)
    W_mat = K_mat.T @ K_mat
    qd = {"variant": "linear_constraint", "A": A, "b": b, "K_mat": K_mat,
          "b_con": b_con, "rank_deficient": rank_deficient, "W_mat": W_mat}
    x_star, u_star = solve_variant(qd)
    # square-root pseudo-inverse of W, for diagnostics on the squared-map form
    _, sv, Vt = np.linalg.svd(K_mat)
    r = int(np.sum(sv > 1e-10 * sv[0]))
    qd["w_sqrt_pinv"] = Vt[:r].T @ np.diag(1.0 / sv[:r]) @ Vt[:r]
    qd["v_star"] = K_mat.T @ u_star
    return PrimalDualProblem(
        f=_quadratic_oracle(A, b, mu, L), g=identity_prox(),
        h=entry.prox, h_conj=entry.conjugate_prox, K=K,
        known_solution=(x_star, u_star), g_is_zero=True,
        constraint_rhs=b_con, w_map=matrix_map(W_mat), w_rhs=K_mat.T @ b_con,
        quadratic_data=qd, name="quadratic[linear_constraint]",
    )


def make_product_quadratic_problem(dim: int, n: int, mu: float, L: float, seed: int,
                                   mu_g: float = 0.0, include_f: bool = True,
                                   d_lo: float = 0.5, d_hi: float = 2.0) -> PrimalDualProblem:
    """Block-separable problem: f(x) + g(x) + sum_i h_i(x) over n components.

    Each ``h_i`` is a diagonal quadratic with positive diagonal in
    ``[d_lo, d_hi]`` so every conjugate is ``1/d_hi``-strongly convex; ``g``
    is ``(mu_g/2)||.||^2`` when ``mu_g > 0``.  The dual space stacks n blocks
    of dimension ``dim``.
    """
    if n < 2:
        raise ParameterError("need n >= 2 blocks")
    if d_lo <= 0:
        raise ParameterError("block diagonals must stay positive")
    rng = np.random.default_rng(seed)
    D = rng.uniform(d_lo, d_hi, size=(n, dim))
    bs = rng.standard_normal((n, dim))
    entries = tuple(entry_diag_quadratic(D[i], bs[i]) for i in range(n))
    mu_hc = 1.0 / float(D.max())

    if include_f:
        if not 0 < mu <= L:
            raise ParameterError("need 0 < mu <= L")
        A = random_spd(dim, mu, L, rng)
        b = rng.standard_normal(dim)
        f = _quadratic_oracle(A, b, mu, L)
    else:
        A = np.zeros((dim, dim))
        b = np.zeros(dim)
        f = zero_smooth(dim)

    if mu_g > 0:
        g = ProxOracle(prox=lambda x, step: x / (1.0 + step * mu_g), mu=mu_g)
    else:
        g = identity_prox()

    # blockwise proxes vectorize over the leading axis (same elementwise
    # formula as the per-block oracles, so the paths agree bitwise)
    def h_prox(x, step):
        return (x + step * bs) / (1.0 + step * D)

    def h_conj_prox(u, step):
        return (u * D - step * bs) / (D + step)

    def h_conj_prox_batch(u_sub, idx, step):
        return (u_sub * D[idx] - step * bs[idx]) / (D[idx] + step)

    qd = {"variant": "product", "A": A, "b": b, "D": D, "bs": bs, "mu_g": mu_g}
    x_star, u_star = solve_variant(qd)
    return PrimalDualProblem(
        f=f, g=g,
        h=ProxOracle(prox=h_prox, mu=float(D.min())),
        h_conj=ProxOracle(prox=h_conj_prox, mu=mu_hc),
        K=stacking_map(n, dim),
        known_solution=(x_star, u_star),
        f_is_zero=not include_f, g_is_zero=mu_g == 0.0,
        h_blocks=tuple(e.prox for e in entries),
        h_conj_blocks=tuple(e.conjugate_prox for e in entries),
        h_conj_prox_batch=h_conj_prox_batch,
        quadratic_data=qd, name="product_quadratic",
    )


def make_least_squares_problem(dim: int, rank: int, L: float, seed: int,
                               h_kind: str = "none", n_rows: int = None) -> PrimalDualProblem:
    """Rank-deficient least squares ``f(x) = ||Mx - y||^2 / 2`` (merely convex).

    Nonzero squared singular values of M span [L/40, L], so the gradient is
    exactly L-Lipschitz while mu_f = 0.  ``h_kind="none"`` leaves only the
    smooth part (x* is the minimum-norm solution); ``h_kind="sq_norm"`` adds
    ``h = ||.||^2 / 2`` through K = Id, giving a unique dual solution.
    """
    if not 1 <= rank <= dim:
        raise ParameterError("need 1 <= rank <= dim")
    if h_kind not in ("none", "sq_norm"):
        raise ParameterError("h_kind must be 'none' or 'sq_norm'")
    rng = np.random.default_rng(seed)
    n_rows = n_rows if n_rows is not None else dim
    sv = np.sqrt(np.linspace(L / 40.0, L, rank))
    U, _ = np.linalg.qr(rng.standard_normal((n_rows, rank)))
    V, _ = np.linalg.qr(rng.standard_normal((dim, rank)))
    M = (U * sv) @ V.T
    y = rng.standard_normal(n_rows)
    MtM = M.T @ M
    Mty = M.T @ y
    f = SmoothOracle(
        grad=lambda x: MtM @ x - Mty,
        L=L, mu=0.0,
        value=lambda x: float(0.5 * np.sum((M @ x - y) ** 2)),
    )
    entry = entry_zero() if h_kind == "none" else entry_sq_norm(1.0, np.zeros(dim))
    qd = {"variant": "least_squares", "M": M, "y": y, "h_kind": h_kind}
    x_star, u_star = solve_variant(qd)
    return PrimalDualProblem(
        f=f, g=identity_prox(), h=entry.prox, h_conj=entry.conjugate_prox,
        K=identity_map(dim), known_solution=(x_star, u_star),
        g_is_zero=True, k_is_identity=True,
        quadratic_data=qd, name=f"least_squares[{h_kind}]",
    )


_PROBLEM_BUILDERS = {
    "quadratic": (make_quadratic_problem,
                  {"dim": int, "mu": float, "L": float, "seed": int, "variant": str,
                   "alpha": float, "m": int, "rank_deficient": bool, "n_blocks": int,
                   "lam": float}),
    "product_quadratic": (make_product_quadratic_problem,
                          {"dim": int, "n": int, "mu": float, "L": float, "seed": int,
                           "mu_g": float, "include_f": bool, "d_lo": float, "d_hi": float}),
    "least_squares": (make_least_squares_problem,
                      {"dim": int, "rank": int, "L": float, "seed": int, "h_kind": str,
                       "n_rows": int}),
}


def parse_problem(spec: str) -> PrimalDualProblem:
    """Build a catalog problem from a spec string.

    Examples: ``quadratic:dim=20,mu=0.1,L=10,seed=1,variant=linear_constraint``
    or ``least_squares:dim=20,rank=12,L=10,seed=0``.
    """
    name, _, arg_str = spec.partition(":")
    name = name.strip()
    if name not in _PROBLEM_BUILDERS:
        raise ParameterError(
            f"unknown problem {name!r}; expected one of {sorted(_PROBLEM_BUILDERS)}"
        )
    builder, schema = _PROBLEM_BUILDERS[name]
    kwargs = {}
    if arg_str:
        for item in arg_str.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in schema:
                raise ParameterError(f"problem {name!r} does not take argument {key!r}")
            typ = schema[key]
            kwargs[key] = value.strip() if typ is str else (
                value.strip().lower() in ("1", "true", "yes") if typ is bool else typ(value)
            )
    return builder(**kwargs)
