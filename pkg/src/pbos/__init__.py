"""Predictive Bayesian optional stopping for precision-targeted experiments.

Stop a sequential experiment when the posterior credible interval for the
mean is narrow enough -- or abandon it early when calibrated rehearsal
simulations predict the precision target cannot be reached within the
resource cap.
"""

from .calibration import CalibrationRow, RegressionFit, calibrate_distribution, fit_regression
from .conjugate import (
    DataSummary,
    ModelDraw,
    NormalGammaParams,
    credible_interval_length,
    posterior_update,
    summarize,
)
from .rehearsal import CilDistribution, RehearsalConfig, percentile, run_rehearsal
from .stopping import (
    Decision,
    ExperimentOutcome,
    SessionState,
    StoppingConfig,
    bos_check,
    futility_check,
    new_session,
    run_experiment,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "NormalGammaParams",
    "DataSummary",
    "ModelDraw",
    "summarize",
    "posterior_update",
    "credible_interval_length",
    "RehearsalConfig",
    "CilDistribution",
    "run_rehearsal",
    "percentile",
    "CalibrationRow",
    "RegressionFit",
    "fit_regression",
    "calibrate_distribution",
    "StoppingConfig",
    "Decision",
    "SessionState",
    "ExperimentOutcome",
    "new_session",
    "step",
    "run_experiment",
    "bos_check",
    "futility_check",
]
