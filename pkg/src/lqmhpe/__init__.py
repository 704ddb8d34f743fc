"""Relaxed moving-horizon parameter estimation for adaptive multirotor NMPC.

Library layout: quaternion kernels (`attitude`), nonlinear dynamics and
integrators (`dynamics`), the exact affine-in-parameter lift (`relaxation`),
operator-splitting QP and SQP solvers (`qp`, `nlp`), forward-mode AD (`ad`),
the receding-horizon planner (`nmpc`), the two moving-horizon estimators
(`mhpe`), the Monte Carlo harness (`monte_carlo`), and the CLI (`cli`).
"""

from .config import load_model
from .dynamics import ModelSpec, NominalParams, State
from .mhpe import (
    EstimatorState,
    HorizonWindow,
    LqMhpe,
    NonlinearMhpe,
    estimate_lq,
    estimate_nonlinear,
    tuning_weights,
)
from .monte_carlo import TrialConfig, TrialRecord, run_battery, run_trial
from .nmpc import NmpcConfig, NmpcPlanner, ParameterEstimate, PlannedTrajectory, apply_first
from .qp import QpProblem, QpSettings, QpSolution, QpSolver
from .relaxation import ParamBox, RelaxedParams, relax, transform_bounds

__all__ = [
    "EstimatorState",
    "HorizonWindow",
    "LqMhpe",
    "ModelSpec",
    "NmpcConfig",
    "NmpcPlanner",
    "NominalParams",
    "NonlinearMhpe",
    "ParamBox",
    "ParameterEstimate",
    "PlannedTrajectory",
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "QpSolver",
    "RelaxedParams",
    "State",
    "TrialConfig",
    "TrialRecord",
    "apply_first",
    "estimate_lq",
    "estimate_nonlinear",
    "load_model",
    "relax",
    "run_battery",
    "run_trial",
    "transform_bounds",
    "tuning_weights",
]

__version__ = "0.1.0"
