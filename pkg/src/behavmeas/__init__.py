"""Finite-support behavioral measures: graph support, occupation LPs, Hankel
factorization and kernel consistency checks."""
from .system_model import (DimensionError, ExternalTrajectory, LtiSystem, PolynomialSystem,
                           Trajectory, cost_eval, external_projection, graph_residual,
                           nonlinear_benchmark_system, scalar_quadratic_system, simulate,
                           validation_lti_system)
from .measure import (DiscreteDistribution, OccupationMarginals, PathMeasure, decompose,
                      flow_residuals, graph_ideal_residual, is_behavioral, metric_residual,
                      mixed_moments, mixture, occupation_marginals, projection_cloud,
                      psi_moment, reconstruct_markov, weak_operator_residual,
                      weak_vs_graph_counterexample)
from .hankel import (CoefficientMeasure, HankelMatrix, OffBehaviorError, PEReport,
                     behavior_rank, build_hankel, check_pe, covariance_transfer_residual,
                     factorize_measure, mean_behavior_residual, pinv_lift, pushforward_measure)
from .data_driven import (ExpectationConstraint, QuadraticPathCost, deepc_point,
                          distributional_weights)
from .occupation_lp import (FiniteOcp, Grid, LpSolution, QuadraticCost, ValueTables,
                            assemble_lp, bellman_solve, discretize, distributional_value,
                            duality_report, extract_policy, lp_solve, solve_occupation_lp)
from .stochastic import (FiniteKernel, FinitePath, FinitePathMeasure, history_kernel_residual,
                         marginal_kernel_residual, onestep_kernel_residual, sample_from_kernels)
from .rng import SplitMix64

__version__ = "0.1.0"
