"""In-process client-server simulator with communication accounting.

``n`` nodes hold private strongly convex objectives and jointly minimize
their sum.  Each round, every node takes a local gradient step corrected by
its control variate, compresses the result with a *shared* linear estimator,
and the server broadcasts the mean of what it received.  Gradients are
evaluated only inside the node-local functions; the server-side code path
touches nothing but the compressed vectors and their mean.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .catalog import random_spd
from .errors import ParameterError, UsageError
from .estimators import RandomEstimator, stream
from .problem import sqnorm
from .rates import rate_thm10_constants
from .solvers import SolverState, Trace, TraceRow

_SHARED_KINDS = ("identity", "bernoulli", "shared_rand_k")


@dataclass(frozen=True)
class FLConfig:
    """A simulated federation: node objectives, estimator and run parameters."""

    n: int
    d: int
    A: np.ndarray          # (n, d, d) local quadratic forms
    b: np.ndarray          # (n, d)
    mu: float
    L: float
    estimator: RandomEstimator
    gamma: float
    target_eps: float
    x_star: np.ndarray     # (d,)
    u_star: np.ndarray     # (n, d), u_i* = -grad f_i(x*)

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    def local_grad(self, X: np.ndarray) -> np.ndarray:
        """Per-node gradients, shape (n, d); node i only sees row i."""
        return np.einsum("nij,nj->ni", self.A, X) - self.b


def make_fl_config(n: int, d: int, mu: float, L: float, seed: int,
                   estimator: RandomEstimator, gamma: float = None,
                   target_eps: float = 1e-6) -> FLConfig:
    """Heterogeneous quadratic federation with a certified consensus solution.

    Every node's spectrum spans exactly [mu, L]; right-hand sides differ, so
    consensus is nontrivial and the correction mechanism is exercised.
    """
    if not 0 < mu <= L:
        raise ParameterError("need 0 < mu <= L")
    if not estimator.is_linear or estimator.kind not in _SHARED_KINDS:
        raise UsageError("the federation needs a shared-randomness linear estimator")
    gamma = 1.0 / L if gamma is None else gamma
    if gamma * L >= 2.0 - 1e-12:
        raise ParameterError("gamma must satisfy gamma < 2/L")
    rng = np.random.default_rng(seed)
    A = np.stack([random_spd(d, mu, L, rng) for _ in range(n)])
    b = rng.standard_normal((n, d))
    x_star = np.linalg.solve(A.sum(axis=0), b.sum(axis=0))
    u_star = -(np.einsum("nij,j->ni", A, x_star) - b)
    return FLConfig(n, d, A, b, mu, L, estimator, gamma, target_eps, x_star, u_star)


@dataclass
class CommLedger:
    """Nondecreasing communication counters (uplink and downlink separately)."""

    rounds: int = 0
    uplink_floats: int = 0
    downlink_floats: int = 0
    comm_events: int = 0


def _server_mean(a: np.ndarray) -> np.ndarray:
    """Server aggregation: sees only the compressed vectors, emits their mean."""
    return a.mean(axis=0)


def _uplink_per_node(est: RandomEstimator, draw, d: int) -> int:
    """Structural nonzeros each node sends for one draw."""
    if est.kind == "identity":
        return d
    if est.kind == "bernoulli":
        return d if draw[0] else 0
    return len(draw)  # coordinate mask


def fl_psi(fl: FLConfig, X: np.ndarray, U: np.ndarray) -> float:
    """Per-node weighted squared distances to (x*, u_i*)."""
    omega = fl.estimator.params.omega
    return (sqnorm(X - fl.x_star) / fl.gamma
            + fl.gamma * (1.0 + omega) ** 2 * sqnorm(U - fl.u_star))


def randprox_fl_round(fl: FLConfig, s: SolverState, rng: np.random.Generator) -> SolverState:
    """One federated round: local steps, shared compression, mean broadcast.

    Node corrections use the factors 1/(gamma (1+omega)^2) on the control
    variates and 1/(1+omega) on the iterates; the zero-sum property of the
    control variates is preserved.  The state's ``floats_comm`` counter grows
    by the structural uplink nonzeros plus the broadcast size.
    """
    est = fl.estimator
    omega = est.params.omega
    X, U = s.x, s.u
    Xhat = X - fl.gamma * fl.local_grad(X) - fl.gamma * U

    draw = est.draw(rng, s.coin_history)
    history = s.coin_history + ((est.history_token(draw),) if est.uses_history else ())
    up = _uplink_per_node(est, draw, fl.d)
    if est.skips_prox_when_zero and est.draw_is_zero(draw):
        # no node communicates; the round is a pure local step
        return replace(s, x=Xhat, t=s.t + 1, last_xhat=Xhat, coin_history=history)

    a = est.apply(draw, Xhat)           # same draw at every node
    a_bar = _server_mean(a)
    d_i = a - a_bar
    U1 = U + d_i / (fl.gamma * (1.0 + omega) ** 2)
    X1 = Xhat - d_i / (1.0 + omega)
    comm = up * fl.n + fl.d             # uplink for all nodes + one broadcast
    return replace(s, x=X1, u=U1, v=U1, t=s.t + 1, last_xhat=Xhat,
                   floats_comm=s.floats_comm + comm, coin_history=history)


def fl_initial_state(fl: FLConfig) -> SolverState:
    X = np.zeros((fl.n, fl.d))
    U = np.zeros((fl.n, fl.d))
    return SolverState(x=X, u=U, v=U)


def run_fl(fl: FLConfig, max_rounds: int, seed: int) -> tuple:
    """Drive rounds until the Lyapunov value falls to ``target_eps`` of its start.

    Returns ``(trace, ledger)``.  The ledger counts a coin-flip round as a
    full-vector communication only when the coin lands heads (local steps
    otherwise); sparsifying estimators pay their mask size every round.
    Downlink broadcasts are tallied separately as d floats per communicating
    round.
    """
    est = fl.estimator
    s = fl_initial_state(fl)
    ledger = CommLedger()
    trace = Trace()
    psi0 = fl_psi(fl, s.x, s.u)
    trace.append(TraceRow(0, psi0, sqnorm(s.x - fl.x_star), sqnorm(s.u - fl.u_star),
                          None, 0, None))
    threshold = fl.target_eps * psi0
    for _ in range(max_rounds):
        before = s.floats_comm
        s = randprox_fl_round(fl, s, stream(seed, s.t))
        ledger.rounds += 1
        sent = s.floats_comm - before
        if sent > 0:
            ledger.comm_events += 1
            ledger.uplink_floats += sent - fl.d
            ledger.downlink_floats += fl.d
        psi = fl_psi(fl, s.x, s.u)
        trace.append(TraceRow(s.t, psi, sqnorm(s.x - fl.x_star),
                              sqnorm(s.u - fl.u_star), None, 0,
                              s.floats_comm if s.floats_comm else None))
        if psi <= threshold:
            break
    trace.final_state = s
    return trace, ledger


def fl_rate(fl: FLConfig):
    """Certified per-round contraction factor for the federation."""
    return rate_thm10_constants(fl.gamma, fl.mu, fl.L, fl.estimator.params.omega)


@dataclass(frozen=True)
class SweepRow:
    kappa: float
    parameter: float
    mean_cost: float
    std_cost: float


@dataclass(frozen=True)
class SweepResult:
    kind: str
    rows: tuple
    slope: float  # fitted log-log slope of mean cost versus kappa


def kappa_sweep(kind: str, kappas, trials: int, seed: int, n: int = 5, d: int = 20,
                eps: float = 1e-6, max_rounds: int = 10**6) -> SweepResult:
    """Measure communication cost against the condition number.

    ``scaffnew`` tunes the coin probability ``p = 1/sqrt(kappa)`` and counts
    communicating rounds; ``rand_k`` tunes ``k = ceil(d/sqrt(kappa))`` and
    counts uplink floats per node.  Also fits the log-log slope of mean cost
    versus kappa (0.5 predicted for both).
    """
    if kind not in ("scaffnew", "rand_k"):
        raise ParameterError("kind must be 'scaffnew' or 'rand_k'")
    kappas = [float(k) for k in kappas]
    if any(k < 4 for k in kappas):
        raise ParameterError("kappa values must be >= 4")
    if trials < 10:
        raise ParameterError("need at least 10 trials")
    from .estimators import bernoulli_estimator, shared_rand_k

    rows = []
    for ki, kappa in enumerate(kappas):
        mu, L = 1.0, kappa
        if kind == "scaffnew":
            param = 1.0 / math.sqrt(kappa)
            est = bernoulli_estimator(param)
        else:
            param = min(d, max(1, math.ceil(d / math.sqrt(kappa))))
            est = shared_rand_k(int(param), d, n)
        costs = np.empty(trials)
        for trial in range(trials):
            sub = int(np.random.SeedSequence((seed, ki, trial)).generate_state(1)[0])
            fl = make_fl_config(n, d, mu, L, sub, est, target_eps=eps)
            _, ledger = run_fl(fl, max_rounds, seed=sub)
            costs[trial] = ledger.comm_events if kind == "scaffnew" else ledger.uplink_floats / n
        rows.append(SweepRow(kappa, float(param), float(costs.mean()), float(costs.std(ddof=1))))
    logk = np.log([r.kappa for r in rows])
    logc = np.log([r.mean_cost for r in rows])
    slope = float(np.polyfit(logk, logc, 1)[0])
    return SweepResult(kind, tuple(rows), slope)
