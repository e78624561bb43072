import numpy as np
import pytest

import randprox as rp
from randprox.errors import DiagnosticsUnavailableError, ParameterError, RateUnavailableError
from randprox.rates import (rate_thm1_constants, rate_thm2_constants, rate_thm4_constants,
                            rate_thm5_constants, rate_thm7_constants, rate_thm9_constants)


def test_gd_contraction_values():
    L, mu = 10.0, 1.0
    assert rp.gd_contraction(1.0 / L, L, L) == pytest.approx(0.0)
    g = 2.0 / (L + mu)
    assert rp.gd_contraction(g, mu, L) == pytest.approx((L - mu) / (L + mu))
    assert 1 - g * mu == pytest.approx(g * L - 1)  # branches equal at the balanced step
    assert rp.gd_contraction(0.1, 1.0, 10.0) == pytest.approx(0.9)
    with pytest.raises(ParameterError):
        rp.gd_contraction(0.1, 2.0, 1.0)


def test_gd_contraction_operational():
    # the map Id - gamma grad_f really is that Lipschitz on random pairs
    p = rp.make_quadratic_problem(dim=10, mu=1.0, L=10.0, seed=0, variant="plain")
    rng = np.random.default_rng(1)
    for gamma in (0.05, 2.0 / 11.0, 0.19):
        c = rp.gd_contraction(gamma, 1.0, 10.0)
        for _ in range(200):
            x, y = rng.standard_normal(10), rng.standard_normal(10)
            lhs = np.linalg.norm((x - gamma * p.f.grad(x)) - (y - gamma * p.f.grad(y)))
            assert lhs <= c * np.linalg.norm(x - y) + 1e-12


def test_thm1_branches():
    rep = rate_thm1_constants(gamma=0.1, tau=1.0, mu_f=1.0, L_f=10.0, mu_g=0.0,
                              mu_hc=0.5, omega=0.0)
    assert rep.branch_values[0] == pytest.approx((1 - 0.1) ** 2)
    assert rep.branch_values[1] == pytest.approx(0.0)
    assert rep.c == max(rep.branch_values)
    # large tau drives the dual branch toward omega / (1 + omega)
    omega = 3.0
    rep2 = rate_thm1_constants(0.1, 1e9, 1.0, 10.0, 0.0, 0.5, omega)
    assert rep2.branch_values[2] == pytest.approx(omega / (1 + omega), abs=1e-7)


def test_thm1_hypothesis_gates():
    with pytest.raises(RateUnavailableError) as err:
        rate_thm1_constants(0.1, 1.0, 1.0, 10.0, 0.0, 0.0, 0.0)
    assert "mu_hc" in str(err.value)
    with pytest.raises(RateUnavailableError):
        rate_thm1_constants(0.1, 1.0, 0.0, 10.0, 0.0, 0.5, 0.0)
    with pytest.raises(RateUnavailableError):  # gamma window without override
        rate_thm1_constants(0.3, 1.0, 1.0, 10.0, 0.0, 0.5, 0.0)


def test_thm1_gamma_override_with_strongly_convex_g():
    # above 2/L the rate is still certified as long as it stays below one
    rep = rate_thm1_constants(gamma=0.25, tau=1.0, mu_f=1.0, L_f=10.0, mu_g=8.0,
                              mu_hc=0.5, omega=0.0)
    assert rep.c < 1.0
    with pytest.raises(RateUnavailableError):  # same gamma, not enough curvature in g
        rate_thm1_constants(gamma=0.25, tau=1.0, mu_f=1.0, L_f=10.0, mu_g=1.0,
                            mu_hc=0.5, omega=0.0)


def test_thm1_dual_branch_monotone_in_tau():
    taus = np.linspace(0.01, 10.0, 50)
    branch = [rate_thm1_constants(0.1, t, 1.0, 10.0, 0.0, 0.5, 1.0).branch_values[2]
              for t in taus]
    assert all(b1 >= b2 - 1e-15 for b1, b2 in zip(branch, branch[1:]))


def test_thm1_bound_chain():
    # for gamma <= 2/(L+mu): c <= 1 - min(gamma(mu_f+mu_g)/(1+gamma mu_g), dual term)
    rng = np.random.default_rng(2)
    for _ in range(100):
        L = float(rng.uniform(1, 20))
        mu_f = float(rng.uniform(0.01, 1)) * L / 2
        mu_g = float(rng.uniform(0, 2))
        mu_hc = float(rng.uniform(0.01, 2))
        omega = float(rng.uniform(0, 5))
        gamma = float(rng.uniform(0.1, 1.0)) * 2.0 / (L + mu_f)
        tau = float(rng.uniform(0.05, 5))
        rep = rate_thm1_constants(gamma, tau, mu_f, L, mu_g, mu_hc, omega)
        chain = 1 - min(gamma * (mu_f + mu_g) / (1 + gamma * mu_g),
                        2 * tau * mu_hc / ((1 + omega) * (1 + 2 * tau * mu_hc)))
        assert rep.c <= chain + 1e-12


def test_thm2_branches():
    rep = rate_thm2_constants(gamma=1.0, tau=1.0, mu_f=0.5, L_f=1.0, mu_hc=0.0,
                              omega=0.0, lambda_min=1.0)
    assert rep.branch_values[2] == pytest.approx(0.0)  # gamma tau lambda_min = 1
    # lambda_min = 0 collapses to the generic dual branch with mu_g = 0
    rep2 = rate_thm2_constants(0.1, 0.7, 0.5, 10.0, 0.3, 2.0, 0.0)
    rep1 = rate_thm1_constants(0.1, 0.7, 0.5, 10.0, 0.0, 0.3, 2.0)
    assert rep2.branch_values[2] == pytest.approx(rep1.branch_values[2])
    with pytest.raises(RateUnavailableError):
        rate_thm2_constants(0.1, 1.0, 0.5, 10.0, 0.0, 0.0, 0.0)


def test_thm3_values():
    assert rp.rate_thm3(0.1, 1.0, 10.0, 0.0, 0.0).c == pytest.approx(0.81)
    rep = rp.rate_thm3(0.1, 1.0, 10.0, 0.0, 1.0)
    assert rep.branch_values[2] == pytest.approx(0.75)  # 1 - 1/(1+omega)^2
    omega = 2.5
    rep = rp.rate_thm3(0.15, 1.0, 10.0, 0.0, omega)
    assert rep.branch_values[2] == pytest.approx(1 - 1 / (1 + omega) ** 2)
    # with a strongly convex conjugate the dual branch is strictly sharper
    rep_smooth = rp.rate_thm3(0.15, 1.0, 10.0, 0.8, omega)
    assert rep_smooth.branch_values[2] < rep.branch_values[2]


def test_thm4_values():
    rep = rate_thm4_constants(gamma=1.0, tau=1.0, mu_f=0.5, L_f=1.0, omega=0.0,
                              lambda_min_plus=1.0)
    assert rep.branch_values[2] == pytest.approx(0.0)
    assert rep.lyapunov_weights == (1.0, 1.0)


def test_thm5_reduces_to_thm1_at_full_sampling():
    gamma, n, mu_hc = 0.17, 10, 0.4
    rep5 = rate_thm5_constants(gamma, 1.0, 10.0, 0.0, mu_hc, n, n)
    tau = 1.0 / (gamma * n)
    rep1 = rate_thm1_constants(gamma, tau, 1.0, 10.0, 0.0, mu_hc, 0.0)
    assert rep5.branch_values[2] == pytest.approx(rep1.branch_values[2])


def test_thm7_equivalent_min_form():
    gamma, tau, mu_g, mu_hc, omega = 0.4, 0.8, 1.3, 0.6, 1.5
    rep = rate_thm7_constants(gamma, tau, mu_g, mu_hc, omega)
    direct = 1 - min(gamma * mu_g / (1 + gamma * mu_g),
                     2 * tau * mu_hc / ((1 + omega) * (1 + 2 * tau * mu_hc)))
    assert rep.c == pytest.approx(direct)


def test_thm9_matches_thm3_when_g_zero():
    gamma, mu_f, L_f, mu_hc, omega = 0.12, 0.7, 9.0, 0.3, 2.0
    rep9 = rate_thm9_constants(gamma, mu_f, L_f, 0.0, mu_hc, omega)
    rep3 = rp.rate_thm3(gamma, mu_f, L_f, mu_hc, omega)
    # same primal branches; dual branches differ by the mu_hc bookkeeping only
    assert rep9.branch_values[0] == pytest.approx(rep3.branch_values[0])
    m = 2 * mu_hc / gamma
    assert rep9.branch_values[2] == pytest.approx(1 - m / ((1 + omega) * (1 + omega + m)))


def test_thm10_values():
    rep = rp.rate_thm10_constants(0.1, 1.0, 10.0, 0.0)
    assert rep.c == pytest.approx(max((1 - 0.1) ** 2, 0.0))
    rep = rp.rate_thm10_constants(0.1, 1.0, 10.0, 3.0)
    assert rep.branch_values[2] == pytest.approx(1 - 1 / 16)


def test_rate_report_never_silently_one():
    with pytest.raises(RateUnavailableError):
        rp.RateReport("t0", 1.0, (1.0, 0.5), (1.0, 1.0))


def test_problem_facing_wrappers():
    p = rp.make_quadratic_problem(dim=8, mu=0.5, L=5.0, seed=1, variant="linear_constraint")
    cfg = rp.configure(p, gamma=0.1)
    rep = rp.rate_thm4(p, cfg)
    assert 0 < rep.c < 1
    rep2 = rp.rate_thm2(p, cfg)
    assert 0 < rep2.c < 1
    with pytest.raises(RateUnavailableError):  # indicator conjugate has mu = 0
        rp.rate_thm1(p, cfg)
    with pytest.raises(RateUnavailableError):  # f is not zero
        rp.rate_thm7(p, cfg)
    with pytest.raises(ParameterError):
        rp.rate_for("t11")


def test_lyapunov_values():
    p = rp.make_quadratic_problem(dim=2, mu=1.0, L=1.0, seed=0, variant="plain")
    cfg = rp.SolverConfig(gamma=1.0, tau=1.0, estimator=rp.identity_estimator())
    x_star, u_star = p.known_solution
    s = rp.SolverState(x=x_star, u=u_star, v=p.K.adjoint(u_star))
    assert rp.lyapunov("t1", p, cfg, s) == pytest.approx(0.0)
    # gamma = tau = 1, omega = 0, mu_hc = 0: psi = dist_x + dist_u
    dx = x_star + np.array([2.0, 0.0])
    du = u_star + np.array([0.0, 1.0])
    s2 = rp.SolverState(x=dx, u=du, v=p.K.adjoint(du))
    assert rp.lyapunov("t1", p, cfg, s2) == pytest.approx(5.0)
    du4 = u_star + np.array([0.0, 2.0])
    s3 = rp.SolverState(x=dx, u=du4, v=p.K.adjoint(du4))
    assert rp.lyapunov("t1", p, cfg, s3) == pytest.approx(8.0)  # dual term scales by 4


def test_lyapunov_missing_solution():
    from randprox.catalog import entry_zero
    e = entry_zero()
    f = rp.SmoothOracle(grad=lambda x: x, L=1.0, mu=1.0)
    p = rp.PrimalDualProblem(f=f, g=rp.identity_prox(), h=e.prox, h_conj=e.conjugate_prox,
                             K=rp.identity_map(2), g_is_zero=True, k_is_identity=True)
    cfg = rp.SolverConfig(gamma=1.0, tau=1.0, estimator=rp.identity_estimator())
    s = rp.SolverState(x=np.zeros(2), u=np.zeros(2), v=np.zeros(2))
    with pytest.raises(DiagnosticsUnavailableError):
        rp.lyapunov("t1", p, cfg, s)


def test_complexity_summary():
    assert rp.complexity_summary("scaffnew", 100.0).parameter == pytest.approx(0.1)
    assert rp.complexity_summary("scaffnew", 1.0).parameter == pytest.approx(1.0)
    assert rp.complexity_summary("rand_k", 25.0, d=100).parameter == pytest.approx(20.0)
    s = rp.complexity_summary("personalized", 10.0, mu_f=1.0, L_f=10.0, lam=2.0)
    assert s.parameter == pytest.approx(np.sqrt(1.0 * 2.0) / 10.0)
    with pytest.raises(ParameterError):
        rp.complexity_summary("scaffnew", 0.5)
