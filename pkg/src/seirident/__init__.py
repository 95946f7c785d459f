"""seirident: practical identifiability of SEIR model parameters.

Quantifies how well the transmission, progression, and recovery rates of a
closed-population SEIR model can be recovered from noisy prevalence,
incidence, or cumulative-incidence time series, using two complementary
criteria: Monte-Carlo average relative estimation errors, and parameter
correlations from the inverse weighted Fisher information matrix.
"""

__version__ = "0.1.0"

from .model import (Bounds, DEFAULT_BOUNDS, PARAM_NAMES, Params, State,
                    initial_state, reproduction_number, seir_rhs, sensitivity_rhs)
from .integrate import IntegrationError, Trajectory, integrate
from .observe import (Case, DataType, Frequency, SCENARIOS, SamplingSchedule,
                      Scenario, ObservationSeries, UnsupportedCaseError,
                      all_cases, build_case, clean_case_series, observe)
from .noise import (DEFAULT_SIGMAS, NoiseSpec, ReplicateSet, add_noise,
                    generate_replicates)
from .optimize import (Objective, OptimResult, bound_transform,
                       inverse_bound_transform, nelder_mead_bounded,
                       objective_eval)
from .mc import (AreTable, EstimateCloud, FitOptions, McRunResult, McVerdict,
                 PairSlopes, classify_mc, compute_are, estimate_pair_slopes,
                 normalized_fval, run_mc)
from .cm import (CloudCmRates, CmVerdict, CorrelationMatrix, FisherInverse,
                 NoninvertibleFisherError, SensitivityMatrix, WeightingMode,
                 classify_cm, cm_at_params, cm_over_cloud, correlations,
                 fisher_inverse, sensitivity_matrix)
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .report import IdentReport, emit_plot_data, run_experiment
