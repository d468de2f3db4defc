from .core import Cmc, CountTensor, EstimatorConfig, missing_information
from .environments import EnvironmentBundle, build_example, load_environment
from .measures import InfoMeasure
from .optimizer import CemConfig, ParamSpace, cem_optimize, exhaustive_search
from .planner import PlanningProblem, plan_exit, policy_iteration
from .policies import ControlSetParams, GreedyPolicy, ParametricPolicy, ParamShape, RandomPolicy
from .rollout import RolloutConfig, RolloutPolicy, run_rollout
from .simulator import SimConfig, evaluate_objective, run_many, run_trajectory
from .utils import get_package_version

__version__ = get_package_version()

__all__ = [
    "Cmc",
    "CountTensor",
    "EstimatorConfig",
    "missing_information",
    "EnvironmentBundle",
    "build_example",
    "load_environment",
    "InfoMeasure",
    "CemConfig",
    "ParamSpace",
    "cem_optimize",
    "exhaustive_search",
    "PlanningProblem",
    "plan_exit",
    "policy_iteration",
    "ControlSetParams",
    "GreedyPolicy",
    "ParametricPolicy",
    "ParamShape",
    "RandomPolicy",
    "RolloutConfig",
    "RolloutPolicy",
    "run_rollout",
    "SimConfig",
    "evaluate_objective",
    "run_many",
    "run_trajectory",
]
