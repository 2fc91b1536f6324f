"""Autoregressive concrete-creep prediction with a triple-attention transformer."""

from .curvefit import CreepCurveParams, creep_model_eval, fit_creep_curve
from .data import (
    NormStats,
    SpecimenRecord,
    TrainingSample,
    build_windows,
    normalize,
    split,
    standardize,
    synth_generate,
)
from .model import (
    AblationSpec,
    BatchInput,
    TataConfig,
    TataModel,
    build_attention_mask,
    count_params,
    positional_encoding,
)
from .accounting import count_flops
from .inference import RolloutRequest, Trajectory, evaluate_teacher_forced, mape, r_squared, rollout
from .training import TrainConfig, mse_loss, run_ablation_suite, train
from .explain import ShapResult, shapley

__version__ = "0.1.0"

__all__ = [
    "AblationSpec",
    "BatchInput",
    "CreepCurveParams",
    "NormStats",
    "RolloutRequest",
    "ShapResult",
    "SpecimenRecord",
    "TataConfig",
    "TataModel",
    "TrainConfig",
    "TrainingSample",
    "Trajectory",
    "build_attention_mask",
    "build_windows",
    "count_flops",
    "count_params",
    "creep_model_eval",
    "evaluate_teacher_forced",
    "fit_creep_curve",
    "mape",
    "mse_loss",
    "normalize",
    "positional_encoding",
    "r_squared",
    "rollout",
    "run_ablation_suite",
    "shapley",
    "split",
    "standardize",
    "synth_generate",
    "train",
]
