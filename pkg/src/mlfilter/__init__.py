"""Maximum-likelihood recursive state estimation for state-space models.

Exact Kalman filtering for linear-Gaussian systems, a bootstrap particle
filter, incomplete-data score and observed-information machinery, a recursive
ML state estimator, and error-covariance estimation by repeated sampling and
by a monotone fixed-point recursion.
"""

from .errorcov import (CovEstimate, EstimationError, OmegaSequence,
                       crlb_efficiency_report, omega_recursion,
                       repeated_sampling_cov)
from .estimator import (MlConfig, MlResult, em_gradient_update_linear,
                        em_gradient_update_nonlinear, em_surrogate, loglik_trace,
                        ml_estimate)
from .experiments import (ExperimentConfig, coverage_study, linear_benchmark_model,
                          load_model, replicated_ml_sweep, run_linear_experiment,
                          run_nonlinear_experiment, save_model, tanh_benchmark_model)
from .kalman import (KalmanState, kalman_filter, kalman_predict, kalman_update,
                     riccati_steady_state, smoothing_cross_cov)
from .models import (LinearModel, ModelError, NonlinearModel, Trajectory,
                     linear_prior_moments, simulate, trajectory_from_csv,
                     trajectory_to_csv)
from .particle import (DegeneracyError, ParticleCloud, log_normalizing_constant,
                       normalizing_constant, pf_init, pf_posterior_mean, pf_run,
                       pf_step, weight_function)
from .score import (IdentityCheck, ScoreEval, complete_info, complete_score,
                    incomplete_loglik, linear_score, nonlinear_observed_info,
                    particle_score, score_identity_suite)

__version__ = "0.1.0"

__all__ = [
    "CovEstimate", "DegeneracyError", "EstimationError", "ExperimentConfig",
    "IdentityCheck", "KalmanState", "LinearModel", "MlConfig", "MlResult",
    "ModelError", "NonlinearModel", "OmegaSequence", "ParticleCloud", "ScoreEval",
    "Trajectory", "complete_info", "complete_score", "coverage_study",
    "crlb_efficiency_report", "replicated_ml_sweep",
    "em_gradient_update_linear", "em_gradient_update_nonlinear", "em_surrogate",
    "incomplete_loglik", "kalman_filter", "kalman_predict", "kalman_update",
    "linear_benchmark_model", "linear_prior_moments", "linear_score",
    "load_model", "log_normalizing_constant", "loglik_trace", "ml_estimate",
    "nonlinear_observed_info", "normalizing_constant", "omega_recursion",
    "particle_score", "pf_init", "pf_posterior_mean", "pf_run", "pf_step",
    "repeated_sampling_cov", "riccati_steady_state", "run_linear_experiment",
    "run_nonlinear_experiment", "save_model", "score_identity_suite", "simulate",
    "smoothing_cross_cov", "tanh_benchmark_model", "trajectory_from_csv",
    "trajectory_to_csv", "weight_function",
]
