"""Trust-region Bayesian architecture search for distillation-friendly students."""

from .config import LatencyModelConfig, ProxyConfig, RunConfig, load_run_config, load_space
from .costs import ResourceProfile, TensorShape, profile
from .evaluator import synthetic_accuracy
from .objective import Metrics, ScoreBreakdown, TeacherBudget, dominates, kd_score, pareto_front
from .space import (
    ArchitectureSpec,
    EncodedPoint,
    SearchSpaceDef,
    decode,
    default_space,
    dimensionality,
    encode,
    random_arch,
)
from .turbo import Observation, OptimizerConfig, TrustRegionState, TurboOptimizer

__version__ = "0.1.0"
