"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output of a failing run).
"""

import time

import numpy as np
import pytest

import randprox as rp
from randprox.catalog import entry_sq_norm
from randprox.estimators import stream
from randprox import flsim


def _report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_criterion_01_deterministic_linear_convergence():
    t0 = time.time()
    p = rp.make_quadratic_problem(dim=20, mu=0.1, L=10.0, seed=1, variant="linear_constraint")
    cfg = rp.configure(p, gamma=1.0 / 10.0)  # tau defaults to the tight choice
    rate = rp.rate_thm4(p, cfg)
    trace = rp.run(p, cfg, "pddy", max_iters=2000, theorem_id="t4")
    psi = np.array(trace.column("psi"))
    bound = psi[0] * rate.c ** np.arange(len(psi))
    envelope_ok = bool(np.all(psi <= bound * (1.0 + 1e-9)))
    s = trace.final_state
    residual = rp.check_optimality_residual(p, s.x, s.u)
    elapsed = time.time() - t0
    _report("criterion 1 (deterministic linear convergence)",
            envelope_ok and residual < 1e-8 and elapsed < 1.0,
            f"c={rate.c:.4f}, residual={residual:.2e}, {elapsed:.2f}s")


def test_criterion_02_stochastic_contraction_minibatch():
    t0 = time.time()
    p = rp.make_product_quadratic_problem(dim=5, n=10, mu=0.5, L=5.0, seed=1)
    ok, details = True, []
    for k in (1, 3, 10):
        est = rp.rand_k_blocks(k, 10)
        cfg = rp.configure(p, gamma=1.0 / p.f.L, estimator=est, seed=0)
        rep = rp.certify(p, cfg, "minibatch", "t5", trials=200, horizon=500, probes=0)
        ok = ok and rep.passed
        details.append(f"k={k}: margin {rep.worst_margin:.2e}")
    # full sampling must coincide with the deterministic iteration bitwise
    est = rp.rand_k_blocks(10, 10)
    cfg = rp.configure(p, gamma=1.0 / p.f.L, estimator=est, seed=0)
    t_mb = rp.run(p, cfg, "minibatch", max_iters=100)
    t_pd = rp.run(p, rp.configure(p, gamma=1.0 / p.f.L, seed=0), "pddy", max_iters=100)
    bitwise = (np.array_equal(t_mb.final_state.x, t_pd.final_state.x)
               and np.array_equal(t_mb.final_state.u, t_pd.final_state.u))
    elapsed = time.time() - t0
    _report("criterion 2 (stochastic contraction, block sampling)",
            ok and bitwise and elapsed < 30.0,
            "; ".join(details) + f"; k=10 bitwise={bitwise}; {elapsed:.1f}s")


def _rand_k_dual_problem(seed=0):
    # quadratic f on R^6 with a smooth quadratic h through a 10 x 6 map, so the
    # dual space has dimension 10 and a coordinate sparsifier applies
    rng = np.random.default_rng(seed)
    from randprox.catalog import random_spd
    A = random_spd(6, 0.5, 5.0, rng)
    b = rng.standard_normal(6)
    K_mat = rng.standard_normal((10, 6)) / np.sqrt(10)
    lam_h, c = 1.5, rng.standard_normal(10)
    x_star = np.linalg.solve(A + lam_h * K_mat.T @ K_mat, b + lam_h * K_mat.T @ c)
    u_star = lam_h * (K_mat @ x_star - c)
    f = rp.SmoothOracle(grad=lambda x: A @ x - b, L=5.0, mu=0.5,
                        value=lambda x: float(0.5 * x @ (A @ x) - b @ x))
    he = entry_sq_norm(lam_h, c)
    return rp.PrimalDualProblem(f=f, g=rp.identity_prox(), h=he.prox,
                                h_conj=he.conjugate_prox, K=rp.matrix_map(K_mat),
                                known_solution=(x_star, u_star), g_is_zero=True)


def test_criterion_03_per_step_conditional_contraction():
    t0 = time.time()
    configs = []
    p1 = _rand_k_dual_problem(seed=2)
    configs.append((p1, rp.bernoulli_estimator(0.3), "bernoulli p=0.3"))
    configs.append((p1, rp.rand_k_coordinates(3, 10), "rand-k d=10 k=3"))
    ok, details = True, []
    for p, est, label in configs:
        cfg = rp.configure(p, gamma=1.0 / p.f.L, estimator=est, seed=0)
        rate = rp.rate_thm1(p, cfg)
        rng = np.random.default_rng(5)
        worst = np.inf
        for j in range(5):
            x_star, u_star = p.known_solution
            u = u_star + rng.standard_normal(u_star.shape)
            s = rp.SolverState(x=x_star + rng.standard_normal(x_star.shape),
                               u=u, v=p.K.adjoint(u))
            res = rp.conditional_contraction_probe(p, cfg, "randprox", s, 10**4, "t1",
                                                   seed=100 + j)
            worst = min(worst, res.slack)
        ok = ok and worst >= 0.0
        details.append(f"{label}: worst slack {worst:.3g}")

    # one-dimensional coin flip: Monte-Carlo mean matches the exact
    # two-outcome expectation to 3 sigma
    f = rp.SmoothOracle(grad=lambda x: x - 0.5, L=1.0, mu=1.0,
                        value=lambda x: float(0.5 * x @ x - 0.5 * x.sum()))
    he = entry_sq_norm(2.0, np.ones(1))
    x_star = np.array([(0.5 + 2.0) / (1.0 + 2.0)])
    u_star = 2.0 * (x_star - 1.0)
    p1d = rp.PrimalDualProblem(f=f, g=rp.identity_prox(), h=he.prox,
                               h_conj=he.conjugate_prox, K=rp.identity_map(1),
                               known_solution=(x_star, u_star),
                               g_is_zero=True, k_is_identity=True)
    est = rp.bernoulli_estimator(0.5)
    cfg = rp.configure(p1d, gamma=0.5, estimator=est, seed=0)
    s = rp.SolverState(x=x_star + 2.0, u=u_star - 1.0, v=u_star - 1.0)

    class _Rig:
        def __init__(self, v):
            self.v = v

        def random(self):
            return self.v

    from randprox.solvers import randprox_step
    heads = rp.lyapunov("t1", p1d, cfg, randprox_step(p1d, cfg, s, _Rig(0.0)))
    tails = rp.lyapunov("t1", p1d, cfg, randprox_step(p1d, cfg, s, _Rig(0.99999)))
    exact = 0.5 * heads + 0.5 * tails
    res = rp.conditional_contraction_probe(p1d, cfg, "randprox", s, 10**4, "t1", seed=9)
    enum_ok = abs(res.mean_psi_next - exact) <= 3.0 * res.std_error + 1e-12
    ok = ok and enum_ok
    details.append(f"1-D enumeration gap {abs(res.mean_psi_next - exact):.2e}")
    _report("criterion 3 (per-step conditional contraction)", ok,
            "; ".join(details) + f"; {time.time() - t0:.1f}s")


def test_criterion_04_estimator_constants():
    t0 = time.time()
    est = rp.rand_k_blocks(3, 10)
    K = rp.stacking_map(10, 4)
    omega, omega_ran, zeta = est.params.resolved(K.norm_sq)
    identity_ok = abs((1.0 - zeta) * K.norm_sq + omega_ran - 10.0) < 1e-12
    rng = np.random.default_rng(3)

    def measure(r):
        stats = rp.empirical_estimator_stats(est, r, K, draws=10**5, seed=17)
        r_sq = float(np.sum(r * r))
        bound = omega_ran * r_sq - zeta * float(np.sum(K.adjoint(r) ** 2))
        omega_ran_hat = (bound - stats.range_slack) / r_sq
        return stats, omega_ran_hat, stats.range_slack_se / r_sq

    # generic blocks: both empirical ratios sit near their declared constants
    stats, omega_ran_hat, sigma_ran = measure(rng.standard_normal((10, 4)))
    ok = (stats.variance_ratio <= 7.0 / 3.0 + 3.0 * stats.variance_ratio_se
          and omega_ran_hat <= 70.0 / 27.0 + 3.0 * sigma_ran
          and stats.range_slack >= -3.0 * stats.range_slack_se)
    # near-consensus blocks: the range inequality is close to tight, so the
    # slack check is exercised where it matters
    r2 = K.apply(rng.standard_normal(4)) + 0.2 * rng.standard_normal((10, 4))
    stats2, _, _ = measure(r2)
    ok = ok and stats2.range_slack >= -3.0 * stats2.range_slack_se and identity_ok
    elapsed = time.time() - t0
    _report("criterion 4 (estimator constants)",
            ok and elapsed < 10.0,
            f"omega_hat={stats.variance_ratio:.4f} (<=7/3={7/3:.4f}), "
            f"omega_ran_hat={omega_ran_hat:.4f} (<=70/27={70/27:.4f}), "
            f"tight-case slack={stats2.range_slack:.3g} (se {stats2.range_slack_se:.3g}), "
            f"identity_ok={identity_ok}, {elapsed:.1f}s")


def _max_rel_err(a, b):
    scale = 1.0 + max(np.abs(np.asarray(a)).max(), np.abs(np.asarray(b)).max())
    return np.abs(np.asarray(a) - np.asarray(b)).max() / scale


def test_criterion_05_reduction_lattice():
    t0 = time.time()
    results = {}

    lc = rp.make_quadratic_problem(dim=6, mu=0.5, L=5.0, seed=3, variant="linear_constraint")
    cfg = rp.configure(lc, gamma=0.1, seed=2)
    a = rp.run(lc, cfg, "randprox", max_iters=100).final_state
    b = rp.run(lc, cfg, "pddy", max_iters=100).final_state
    results["randprox(identity)=pddy [bitwise]"] = (
        np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u))

    est = rp.bernoulli_estimator(0.3)
    cfg = rp.configure(lc, gamma=0.1, estimator=est, seed=4)
    a = rp.run(lc, cfg, "randprox", max_iters=100).final_state
    b = rp.run(lc, cfg, "skip", max_iters=100).final_state
    results["randprox(bernoulli)=skip [1e-12]"] = (
        _max_rel_err(a.x, b.x) <= 1e-12 and _max_rel_err(a.u, b.u) <= 1e-12)

    pfl = rp.make_quadratic_problem(dim=3, mu=1.0, L=10.0, seed=4,
                                    variant="personalized_fl", n_blocks=4, lam=2.0)
    cfg = rp.configure(pfl, gamma=0.1, estimator=rp.bernoulli_estimator(0.4), seed=5)
    a = rp.run(pfl, cfg, "randprox", max_iters=100).final_state
    b = rp.run(pfl, cfg, "fb", max_iters=100).final_state
    results["randprox(K=Id,g=0)=fb [1e-12]"] = (
        _max_rel_err(a.x, b.x) <= 1e-12 and _max_rel_err(a.u, b.u) <= 1e-12)

    c = rp.run(pfl, cfg, "dy", max_iters=100).final_state
    results["dy(g=0)=fb [bitwise]"] = (
        np.array_equal(b.x, c.x) and np.array_equal(b.u, c.u))

    from test_solvers import dy_problem
    adm = dy_problem(seed=6, f_zero=True)
    cfg = rp.configure(adm, gamma=0.3, estimator=rp.bernoulli_estimator(0.5), seed=6)
    a = rp.run(adm, cfg, "dy", max_iters=100).final_state
    b = rp.run(adm, cfg, "admm", max_iters=100).final_state
    results["dy(f=0)=admm [bitwise]"] = (
        np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u))

    prod = rp.make_product_quadratic_problem(dim=4, n=6, mu=0.5, L=5.0, seed=7)
    cfg = rp.configure(prod, gamma=0.2, estimator=rp.rand_k_blocks(6, 6), seed=7)
    a = rp.run(prod, cfg, "minibatch", max_iters=100).final_state
    b = rp.run(prod, rp.configure(prod, gamma=0.2, seed=7), "pddy", max_iters=100).final_state
    results["minibatch(k=n)=pddy [bitwise]"] = (
        np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u))

    shifted = rp.make_product_quadratic_problem(dim=4, n=6, mu=1.0, L=1.0, seed=8,
                                                include_f=False, mu_g=0.6)
    cfg = rp.configure(shifted, gamma=0.15, estimator=rp.rand_k_blocks(1, 6), seed=8)
    a = rp.run(shifted, cfg, "minibatch", max_iters=100).final_state
    b = rp.run(shifted, cfg, "point_saga", max_iters=100).final_state
    results["minibatch(k=1,f=0,g=quadratic)=point_saga [1e-12]"] = (
        _max_rel_err(a.x, b.x) <= 1e-12 and _max_rel_err(a.u, b.u) <= 1e-12)

    prob = 0.3
    fl = rp.make_fl_config(n=4, d=5, mu=1.0, L=10.0, seed=9,
                           estimator=rp.bernoulli_estimator(prob))
    s = flsim.fl_initial_state(fl)
    X, U = s.x.copy(), s.u.copy()
    scaffnew_ok = True
    for t in range(100):
        s = rp.randprox_fl_round(fl, s, stream(12, t))
        coin = stream(12, t).random() < prob
        Xhat = X - fl.gamma * fl.local_grad(X) - fl.gamma * U
        if coin:
            xbar = Xhat.mean(axis=0)
            U = U + (prob / fl.gamma) * (Xhat - xbar)
            X = np.tile(xbar, (fl.n, 1))
        else:
            X = Xhat
        scaffnew_ok = scaffnew_ok and _max_rel_err(s.x, X) <= 1e-12 \
            and _max_rel_err(s.u, U) <= 1e-12
    results["fl(bernoulli)=scaffnew [1e-12]"] = scaffnew_ok

    elapsed = time.time() - t0
    ok = all(results.values())
    failed = [k for k, v in results.items() if not v]
    _report("criterion 5 (reduction lattice, 8 equivalences)",
            ok and elapsed < 5.0,
            (f"all 8 hold; {elapsed:.1f}s" if ok else f"failed: {failed}"))


def test_criterion_06_gradient_descent_contraction():
    t0 = time.time()
    p = rp.make_quadratic_problem(dim=10, mu=1.0, L=10.0, seed=5, variant="plain")
    rng = np.random.default_rng(6)
    ok = True
    for gamma in (0.05, 2.0 / 11.0, 0.19):
        c = rp.gd_contraction(gamma, 1.0, 10.0)
        for _ in range(1000):
            x, y = rng.standard_normal(10), rng.standard_normal(10)
            lhs = np.linalg.norm((x - gamma * p.f.grad(x)) - (y - gamma * p.f.grad(y)))
            ok = ok and lhs <= (c + 1e-12) * np.linalg.norm(x - y)
    _report("criterion 6 (gradient-step contraction factor)", ok,
            f"3 step sizes x 1000 pairs; {time.time() - t0:.1f}s")


def test_criterion_07_moreau_identity_catalog():
    t0 = time.time()
    from test_catalog import _catalog_instances
    from randprox.problem import moreau_conjugate_prox
    rng = np.random.default_rng(7)
    worst = 0.0
    for entry, shape in _catalog_instances():
        for _ in range(100):
            gamma = float(rng.uniform(0.05, 5.0))
            x = rng.standard_normal(shape)
            gap = np.abs(moreau_conjugate_prox(entry.prox, gamma, x)
                         - entry.conjugate_prox.prox(x, gamma)).max()
            worst = max(worst, gap)
    _report("criterion 7 (Moreau identity across the catalog)", worst < 1e-10,
            f"worst gap {worst:.2e}; {time.time() - t0:.1f}s")


def test_criterion_08_ergodic_convex_rate():
    t0 = time.time()
    p = rp.make_least_squares_problem(dim=20, rank=12, L=10.0, seed=0)
    cfg = rp.configure(p, gamma=1.0 / 10.0)
    rep = rp.convex_bench(p, cfg, "pddy", horizon=10**4)
    elapsed = time.time() - t0
    _report("criterion 8 (ergodic sublinear rate, merely convex)",
            rep.passed and rep.final_bregman < 1e-10 and elapsed < 5.0,
            f"bound held at all t, final Bregman {rep.final_bregman:.2e}, {elapsed:.1f}s")


def test_criterion_09_scaffnew_communication_scaling():
    t0 = time.time()
    res = rp.kappa_sweep("scaffnew", [16, 64, 256, 1024], trials=10, seed=0, n=5, d=20)
    elapsed = time.time() - t0
    _report("criterion 9 (probabilistic-communication scaling)",
            0.35 <= res.slope <= 0.65 and elapsed < 120.0,
            f"log-log slope {res.slope:.3f} in [0.35, 0.65]; {elapsed:.1f}s")


def test_criterion_10_rand_k_float_complexity():
    t0 = time.time()
    res = rp.kappa_sweep("rand_k", [16, 64, 256, 1024], trials=10, seed=0, n=5, d=20)
    # per-round uplink is exactly k n floats
    est = rp.shared_rand_k(4, 20, 5)
    fl = rp.make_fl_config(n=5, d=20, mu=1.0, L=16.0, seed=1, estimator=est,
                           target_eps=0.0)
    _, ledger = rp.run_fl(fl, max_rounds=50, seed=2)
    per_round_ok = ledger.uplink_floats == 50 * 4 * 5
    elapsed = time.time() - t0
    _report("criterion 10 (sparsified uplink float complexity)",
            0.35 <= res.slope <= 0.65 and per_round_ok and elapsed < 120.0,
            f"slope {res.slope:.3f} in [0.35, 0.65]; uplink exactly k n per round; "
            f"{elapsed:.1f}s")


def test_criterion_11_personalized_fl_sharper_rate():
    t0 = time.time()
    d, n, L, mu, lam = 2, 4, 10.0, 1.0, 2.0
    p = rp.make_quadratic_problem(dim=d, mu=mu, L=L, seed=5, variant="personalized_fl",
                                  n_blocks=n, lam=lam)
    tuning = rp.complexity_summary("personalized", L / mu, mu_f=mu, L_f=L, lam=lam)
    est = rp.bernoulli_estimator(tuning.parameter)
    cfg = rp.configure(p, gamma=1.0 / L, estimator=est, seed=0)
    omega = est.params.omega
    sharp = rp.rate_thm3(cfg.gamma, mu, L, p.h_conj.mu, omega)
    blunt_dual = 1.0 - 1.0 / (1.0 + omega) ** 2
    sharper = sharp.branch_values[2] < blunt_dual
    rep = rp.certify(p, cfg, "fb", "t3", trials=200, horizon=300, probes=2)
    elapsed = time.time() - t0
    _report("criterion 11 (personalized-consensus sharper rate)",
            sharper and rep.passed,
            f"dual branch {sharp.branch_values[2]:.4f} < {blunt_dual:.4f} (no-curvature "
            f"bound), certification margin {rep.worst_margin:.2e}; {elapsed:.1f}s")
