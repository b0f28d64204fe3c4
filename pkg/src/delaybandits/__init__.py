"""Online learning with delayed bandit feedback: EXP3, FKM, a 2-D doubling
wrapper and multi-agent game dynamics."""
from __future__ import annotations

from ._backend import BACKEND
from .adversary import AdaptiveAdversary, AdversaryKind, ObliviousAdversary, QuadraticLosses
from .bodies import ConvexBody, project_shrunk
from .config import ExperimentKind, RunConfig
from .delays import DelaySchedule, effective_delay_sum, generate_delay, missing_set
from .doubling import RegretShape, WrapperState, maybe_restart, observe_round, wrapper_new
from .errors import ConfigurationError, ContractViolation
from .exp3 import (Exp3Learner, Exp3Snapshot, Exp3State, GammaMode, exp3_act, exp3_filter,
                   exp3_fixed_eta, exp3_new, exp3_update)
from .feedback import DeliveryQueue, FeedbackEvent, drain, enqueue
from .fkm import (FkmLearner, FkmState, fkm_act, fkm_fixed_params, fkm_new, fkm_update,
                  gradient_estimate, sample_unit_sphere, anytime_fkm_schedule)
from .games import (FiniteGame, ZeroSumGame, cce_gap, discounted_ergodic_average,
                    discounted_ergodic_distribution, ne_gap_zero_sum, play_multiagent)
from .regret import Trajectory, discounted_regret_ratio, regret
from .runner import run_experiment
from .stats import fit_regret_exponent
from .stepsize import StepSizeSchedule, step_size

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AdaptiveAdversary", "AdversaryKind", "ObliviousAdversary", "QuadraticLosses",
    "ConvexBody", "project_shrunk", "DelaySchedule", "effective_delay_sum", "generate_delay",
    "missing_set", "ConfigurationError", "ContractViolation", "Exp3Learner", "Exp3Snapshot",
    "Exp3State", "GammaMode", "exp3_act", "exp3_filter", "exp3_fixed_eta", "exp3_new",
    "exp3_update", "DeliveryQueue", "FeedbackEvent", "drain", "enqueue", "FkmLearner", "FkmState",
    "fkm_act", "fkm_fixed_params", "fkm_new", "fkm_update", "gradient_estimate",
    "sample_unit_sphere", "anytime_fkm_schedule", "Trajectory", "discounted_regret_ratio",
    "regret", "StepSizeSchedule", "step_size", "ExperimentKind", "RunConfig", "RegretShape",
    "WrapperState", "maybe_restart", "observe_round", "wrapper_new", "FiniteGame", "ZeroSumGame",
    "cce_gap", "discounted_ergodic_average", "discounted_ergodic_distribution", "ne_gap_zero_sum",
    "play_multiagent", "run_experiment", "fit_regret_exponent",
]
