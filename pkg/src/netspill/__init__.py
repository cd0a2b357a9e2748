"""Spillover estimation on partially sampled networks."""

__version__ = "0.1.0"

from .errors import (DegenerateDesignError, DimensionError, DivergenceError, FitError,
                     InfeasiblePlacementError, MissingStatsError, NetspillError,
                     QuadratureError, SingularCorrectionError)
from .network import (Decomposition, DegreeStats, Network, decompose, degree_stats,
                      in_degrees, neumann_inverse_apply, spectral_bound, spillovers)
from .dgp import (DiscreteUniform, Fixed, LinearParams, PerNode, SarParams, gen_group_network,
                  gen_network, gen_network_lognormal, gen_treatment_bernoulli,
                  gen_treatment_copula, simulate_linear, simulate_sar)
from .sampling import (FixedChoice, GroupMembership, RandomSuperset, WeightThreshold,
                       apply_rule, fraction_correct, rule_from_dict, rule_to_dict)
from .linear import (EstimateResult, RobustnessReport, apply_eta, correct_known_eta,
                     dummy_estimator, eta_hat_conditional, eta_hat_independent,
                     eta_hat_simulated, ols_spillover, realized_eta, robustness)
from .sar import (SarEstimate, build_instruments, build_instruments_corrected, debias_tsls,
                  eta_matrix_feasible, eta_matrix_oracle, tsls)
from .copula import CopulaModel, eta_hat_copula, fit_gumbel
from .inference import BootstrapConfig, VarianceReport, bootstrap_se, sandwich_known_eta
from .experiments import ExperimentConfig, ExperimentResult, emit_tables, run_experiment
