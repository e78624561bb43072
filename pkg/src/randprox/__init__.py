"""randprox: randomized primal-dual proximal splitting with rate certification.

A solver family built around one idea: replace the dual proximal update of a
primal-dual splitting method with an unbiased stochastic estimate, underrelax
by 1/(1+omega) to control the noise, and amplify the primal correction by
(1+omega) to compensate.  The random error is proportional to a residual that
vanishes at the solution, so every variant converges to an exact minimizer,
and each ships with a closed-form linear rate plus the machinery to verify
that runs actually contract at least that fast.
"""

__version__ = "0.1.0"

from .errors import (DiagnosticsUnavailableError, OracleUnavailableError,
                     ParameterError, RateUnavailableError, ShapeError, UsageError)
from .problem import (LinearMap, PrimalDualProblem, ProxOracle, SmoothOracle,
                      check_optimality_residual, conjugate_oracle, estimate_norm_sq,
                      identity_map, identity_prox, matrix_map, moreau_conjugate_prox,
                      stacking_map, validate_problem, zero_smooth)
from .catalog import (CatalogEntry, CATALOG, make_least_squares_problem,
                      make_product_quadratic_problem, make_quadratic_problem,
                      parse_problem, prox_consensus, prox_indicator_point, prox_l1,
                      prox_sq_norm)
from .estimators import (EstimatorParams, EstimatorStats, RandomEstimator,
                         bernoulli_estimator, draw_subset, empirical_estimator_stats,
                         forced_update_schedule, identity_estimator, parse_estimator,
                         rand_k_blocks, rand_k_coordinates, shared_rand_k, stream)
from .rates import (ComplexitySummary, RateReport, complexity_summary, gd_contraction,
                    lyapunov, rate_for, rate_thm1, rate_thm2, rate_thm3, rate_thm4,
                    rate_thm5, rate_thm6, rate_thm7, rate_thm8, rate_thm9,
                    rate_thm10_constants)
from .solvers import (ALGORITHMS, SolverConfig, SolverState, Trace, configure,
                      default_tau, init_state, initial_state, pddy_step,
                      point_saga_step, randprilico_step, randprox_admm_step,
                      randprox_cp_step, randprox_dy_step, randprox_fb_step,
                      randprox_lc_step, randprox_minibatch_step, randprox_skip_step,
                      randprox_step, run)
from .oracle import (OracleSolution, ProbeResult, conditional_contraction_probe,
                     finite_diff_check, kkt_solve_quadratic, long_run_solution)
from .flsim import (CommLedger, FLConfig, fl_psi, fl_rate, kappa_sweep,
                    make_fl_config, randprox_fl_round, run_fl)
from .certify import CertifyReport, ConvexBenchReport, certify, convex_bench
