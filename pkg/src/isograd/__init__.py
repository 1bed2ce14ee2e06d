"""Stochastic convex optimization under direction-wise bounded gradient noise.

A cutting-plane solver whose gradient estimates only need tight control in one
(unknown) direction, oracle-class conversions between bounded-variance,
sub-exponential and direction-wise certified noise, an unbiased multilevel
mean estimator, hard benchmark instances, and a CLI harness for seeded
query-complexity experiments.
"""

from .errors import ConfigurationError, InputError, WarmStartError
from .gradest import (MagoConfig, directional_batch_size,
                      directional_deriv_estimate, mago_batch_size,
                      mago_estimate)
from .geometry import (Ellipsoid, FeasibilityTranscript, Halfspace, WalkConfig,
                       approx_centroid, central_cut_volume_ratio,
                       ellipsoid_step, grunbaum_call_cap, solve_feasibility)
from .instances import (HardInstance, LinearHingeInstance, QuadraticInstance,
                        SmoothedNormInstance, TestInstance, hard_objective,
                        hard_subgradient, make_hard_instance, make_instance,
                        sample_hard_X)
from .minfind import (LineSearchProblem, best_of_two, inexact_line_search,
                      tournament_min)
from .mlmc import (EstimatorFamily, TruncationPlan, VectorSampler,
                   beta_schedule, biased_family, calibrated_family,
                   coord_median, exact_family, expected_cost_ratio,
                   gaussian_sampler, mlmc_debias, point_mass_sampler,
                   truncated_mean, truncated_mean_family)
from .oracles import (GradientSample, NoiseSpec, OracleHandle,
                      esgo_isgo_params, sample, vsgo_to_isgo)
from .solver import (RunTranscript, ScoProblem, SolverConfig, candidates_stage,
                     delta_validity_bound, ensure_isotropic, sgd_baseline,
                     solve_sco)

__version__ = "0.1.0"
