from .evaluate import EvaluationRun, PredictabilityResult, compare_predictability, evaluate_predictability
from .model import (
    BatchTooSmallError,
    SslConfig,
    SslModel,
    TooShortError,
    forward,
    infonce,
    infonce_loss,
    utterance_frames,
)
from .train import (
    DEFAULT_SCHEDULE,
    DivergenceError,
    TrainingItem,
    backward_and_step,
    doubling_schedule,
    load_checkpoint,
    params_digest,
    save_checkpoint,
    train,
)

__all__ = [
    "BatchTooSmallError",
    "DEFAULT_SCHEDULE",
    "DivergenceError",
    "EvaluationRun",
    "PredictabilityResult",
    "SslConfig",
    "SslModel",
    "TooShortError",
    "TrainingItem",
    "backward_and_step",
    "compare_predictability",
    "doubling_schedule",
    "evaluate_predictability",
    "forward",
    "infonce",
    "infonce_loss",
    "load_checkpoint",
    "params_digest",
    "save_checkpoint",
    "train",
    "utterance_frames",
]
