"""Unbiased stochastic estimators with conic variance.

An estimator is a random map ``R`` with ``E[R(r)] = r`` and
``E||R(r) - r||^2 <= omega ||r||^2``.  The propagation of its error through
an adjoint ``K*`` is summarized by two more constants ``omega_ran`` and
``zeta`` via ``E||K*(R(r) - r)||^2 <= omega_ran ||r||^2 - zeta ||K* r||^2``;
without map-specific knowledge the defaults ``omega_ran = ||K||^2 omega`` and
``zeta = 0`` always hold.

Randomness is never stored: ``draw`` consumes an explicit generator, and
``apply`` is deterministic given the draw, so two algorithms sharing a draw
stream can be coupled step for step.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import ParameterError
from .problem import norm, sqnorm


_MASK64 = 0xFFFFFFFFFFFFFFFF


def stream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *path)``.

    Re-keying per iteration makes draws reproducible regardless of how many
    variates earlier iterations consumed, which the trajectory-coupling
    harness relies on.
    """
    if len(path) <= 1:
        key = (int(seed) & _MASK64) << 64 | ((int(path[0]) & _MASK64) if path else 0)
        return np.random.Generator(np.random.Philox(key=key))
    key = tuple(int(k) & _MASK64 for k in (seed, *path))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def draw_subset(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Uniform k-subset of {0, ..., n-1}, sorted for a canonical form."""
    return np.sort(rng.permutation(n)[:k])


@dataclass(frozen=True)
class EstimatorParams:
    """Declared constants (omega, omega_ran, zeta) of an estimator.

    ``omega_ran=None`` means "use the default ``||K||^2 omega``", resolved
    once the operator norm is known.
    """

    omega: float
    omega_ran: Optional[float] = None
    zeta: float = 0.0

    def __post_init__(self):
        if self.omega < 0:
            raise ParameterError("omega must be nonnegative")
        if self.omega_ran is not None and self.omega_ran < 0:
            raise ParameterError("omega_ran must be nonnegative")
        if not 0.0 <= self.zeta <= 1.0:
            raise ParameterError("zeta must lie in [0, 1]")

    def resolved(self, k_norm_sq: float) -> tuple:
        """Concrete (omega, omega_ran, zeta) for a map with ``||K||^2`` given."""
        omega_ran = self.omega_ran if self.omega_ran is not None else k_norm_sq * self.omega
        return self.omega, omega_ran, self.zeta


@dataclass(frozen=True)
class RandomEstimator:
    """An unbiased conic-variance estimator.

    ``draw(rng, history)`` produces the iteration's randomness;
    ``apply(draw, r)`` evaluates the estimate.  ``skips_prox_when_zero``
    marks estimators (the coin flip) whose zero draw means the argument need
    not be evaluated at all, so the dual prox call can be skipped.
    ``is_linear`` asserts linearity under a shared draw.
    """

    kind: str
    params: EstimatorParams
    _draw: Callable[[np.random.Generator, tuple], Any]
    _apply: Callable[[Any, np.ndarray], np.ndarray]
    is_linear: bool = True
    skips_prox_when_zero: bool = False
    uses_history: bool = False
    commutes_with_sqrt: bool = False
    meta: dict = field(default_factory=dict)

    def draw(self, rng: np.random.Generator, history: tuple = ()) -> Any:
        return self._draw(rng, history)

    def apply(self, draw: Any, r: np.ndarray) -> np.ndarray:
        return self._apply(draw, r)

    def sample(self, r: np.ndarray, rng: np.random.Generator, history: tuple = ()) -> np.ndarray:
        return self._apply(self._draw(rng, history), r)

    def draw_is_zero(self, draw: Any) -> bool:
        return self.kind == "bernoulli" and not draw[0]

    def history_token(self, draw: Any) -> Optional[int]:
        if self.kind == "bernoulli":
            return int(draw[0])
        return None

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"


def identity_estimator() -> RandomEstimator:
    """The deterministic estimator R(r) = r; omega = omega_ran = zeta = 0."""
    return RandomEstimator(
        kind="identity",
        params=EstimatorParams(omega=0.0, omega_ran=0.0, zeta=0.0),
        _draw=lambda rng, hist: None,
        _apply=lambda draw, r: r,
        commutes_with_sqrt=True,
    )


def bernoulli_estimator(p: float, schedule: Optional[Callable[[tuple], float]] = None) -> RandomEstimator:
    """Coin-flip estimator: returns ``r / p_t`` with probability ``p_t``, else 0.

    ``p`` is the probability floor; ``omega = 1/p - 1``.  ``schedule`` may
    vary the per-iteration probability based on the history of past coin
    outcomes, as long as it stays within ``[p, 1]``.  When the coin is 0 the
    argument is never evaluated, so downstream prox calls are skipped.
    """
    if not 0.0 < p <= 1.0:
        raise ParameterError("p must lie in (0, 1]")
    p_min = float(p)

    def _draw(rng, history):
        p_t = float(schedule(history)) if schedule is not None else p_min
        if p_t < p_min - 1e-15 or p_t > 1.0 + 1e-15:
            raise ParameterError(f"schedule produced p_t={p_t} outside [{p_min}, 1]")
        return (bool(rng.random() < p_t), p_t)

    def _apply(draw, r):
        theta, p_t = draw
        return r / p_t if theta else np.zeros_like(r)

    return RandomEstimator(
        kind="bernoulli",
        params=EstimatorParams(omega=1.0 / p_min - 1.0),
        _draw=_draw,
        _apply=_apply,
        skips_prox_when_zero=True,
        uses_history=schedule is not None,
        commutes_with_sqrt=True,
        meta={"p_min": p_min},
    )


def forced_update_schedule(p: float, max_skips: int) -> Callable[[tuple], float]:
    """Constant-p schedule that forces p_t = 1 after ``max_skips`` zeros in a row.

    Caps the gap between successive dual updates at ``max_skips + 1``
    iterations.
    """
    if max_skips < 1:
        raise ParameterError("max_skips must be >= 1")

    def schedule(history):
        if len(history) >= max_skips and all(c == 0 for c in history[-max_skips:]):
            return 1.0
        return p

    return schedule


def rand_k_coordinates(k: int, d: int) -> RandomEstimator:
    """Uniform k-of-d coordinate sparsifier scaled by d/k; omega = d/k - 1."""
    if not 1 <= k <= d:
        raise ParameterError("need 1 <= k <= d")
    scale = d / k

    def _apply(idx, r):
        out = np.zeros_like(r)
        out[idx] = r[idx] * scale
        return out

    return RandomEstimator(
        kind="rand_k",
        params=EstimatorParams(omega=d / k - 1.0),
        _draw=lambda rng, hist: draw_subset(rng, d, k),
        _apply=_apply,
        meta={"k": k, "d": d},
    )


def rand_k_blocks(k: int, n: int) -> RandomEstimator:
    """Uniform k-of-n block sampler scaled by n/k, bound to the stacking map.

    Constants follow the sampling-aware bound rather than the naive default:
    ``omega = n/k - 1``, ``omega_ran = n(n-k)/(k(n-1))``,
    ``zeta = (n-k)/(k(n-1))``, which satisfy
    ``(1 - zeta) n + omega_ran = n``.
    """
    if n < 2:
        raise ParameterError("rand_k_blocks needs n >= 2")
    if not 1 <= k <= n:
        raise ParameterError("need 1 <= k <= n")
    scale = n / k

    def _apply(idx, r):
        out = np.zeros_like(r)
        out[idx] = r[idx] * scale
        return out

    return RandomEstimator(
        kind="rand_k_blocks",
        params=EstimatorParams(
            omega=n / k - 1.0,
            omega_ran=n * (n - k) / (k * (n - 1)),
            zeta=(n - k) / (k * (n - 1)),
        ),
        _draw=lambda rng, hist: draw_subset(rng, n, k),
        _apply=_apply,
        meta={"k": k, "n": n},
    )


def shared_rand_k(k: int, d: int, n: int) -> RandomEstimator:
    """One rand-k coordinate mask per draw, applied identically to all n blocks.

    Operates on arrays of shape (n, d); omega = d/k - 1.
    """
    if not 1 <= k <= d:
        raise ParameterError("need 1 <= k <= d")
    if n < 1:
        raise ParameterError("need n >= 1")
    scale = d / k

    def _apply(idx, r):
        out = np.zeros_like(r)
        out[..., idx] = r[..., idx] * scale
        return out

    return RandomEstimator(
        kind="shared_rand_k",
        params=EstimatorParams(omega=d / k - 1.0),
        _draw=lambda rng, hist: draw_subset(rng, d, k),
        _apply=_apply,
        meta={"k": k, "d": d, "n": n},
    )


@dataclass(frozen=True)
class EstimatorStats:
    """Monte-Carlo conformance summary of an estimator against its constants."""

    mean_error_norm: float
    variance_ratio: float
    variance_ratio_se: float
    range_slack: float
    range_slack_se: float


def empirical_estimator_stats(e: RandomEstimator, r: np.ndarray, K, draws: int, seed: int) -> EstimatorStats:
    """Estimate the unbiasedness, variance and range inequalities by sampling.

    Returns the norm of the mean error, the ratio
    ``mean ||R(r) - r||^2 / ||r||^2`` (0 by convention when r = 0), and the
    slack ``omega_ran ||r||^2 - zeta ||K* r||^2 - mean ||K*(R(r) - r)||^2``
    of the range inequality, each with its cross-draw standard error.
    """
    if draws < 1000:
        raise ParameterError("draws must be >= 1000")
    r = np.asarray(r, dtype=float)
    rng = stream(seed)
    omega, omega_ran, zeta = e.params.resolved(K.norm_sq)
    r_sq = sqnorm(r)
    k_r_sq = sqnorm(K.adjoint(r))

    err_sum = np.zeros_like(r)
    var_samples = np.empty(draws)
    ran_samples = np.empty(draws)
    for j in range(draws):
        err = e.apply(e.draw(rng), r) - r
        err_sum += err
        var_samples[j] = sqnorm(err)
        ran_samples[j] = sqnorm(K.adjoint(err))

    mean_error_norm = norm(err_sum / draws)
    if r_sq == 0.0:
        variance_ratio, variance_ratio_se = 0.0, 0.0
    else:
        variance_ratio = float(var_samples.mean() / r_sq)
        variance_ratio_se = float(var_samples.std(ddof=1) / np.sqrt(draws) / r_sq)
    bound = omega_ran * r_sq - zeta * k_r_sq
    range_slack = float(bound - ran_samples.mean())
    range_slack_se = float(ran_samples.std(ddof=1) / np.sqrt(draws))
    return EstimatorStats(mean_error_norm, variance_ratio, variance_ratio_se, range_slack, range_slack_se)


_CONSTRUCTORS = {
    "identity": (identity_estimator, ()),
    "bernoulli": (bernoulli_estimator, ("p",)),
    "rand_k": (rand_k_coordinates, ("k", "d")),
    "rand_k_blocks": (rand_k_blocks, ("k", "n")),
    "shared_rand_k": (shared_rand_k, ("k", "d", "n")),
}


def parse_estimator(spec: str) -> RandomEstimator:
    """Build an estimator from a spec string such as ``"bernoulli:p=0.1"``.

    Accepted forms: ``identity``, ``bernoulli:p=...``, ``rand_k:k=...,d=...``,
    ``rand_k_blocks:k=...,n=...``, ``shared_rand_k:k=...,d=...,n=...``.
    """
    name, _, arg_str = spec.partition(":")
    name = name.strip()
    if name not in _CONSTRUCTORS:
        raise ParameterError(
            f"unknown estimator {name!r}; expected one of {sorted(_CONSTRUCTORS)}"
        )
    ctor, keys = _CONSTRUCTORS[name]
    kwargs = {}
    if arg_str:
        for item in arg_str.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in keys:
                raise ParameterError(f"estimator {name!r} does not take argument {key!r}")
            kwargs[key] = float(value) if key == "p" else int(value)
    missing = [k for k in keys if k not in kwargs]
    if missing:
        raise ParameterError(f"estimator {name!r} missing arguments {missing}")
    return ctor(**kwargs)
