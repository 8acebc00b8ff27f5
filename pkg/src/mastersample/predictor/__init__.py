"""Success predictor: online classifier, replay memory and candidate filtering."""

from .assist import (
    FilterConfig,
    SuccessPredictorHook,
    assisted_generation_loop,
    audit_accuracy,
    filter_candidates,
    softmax,
)
from .memory import ReplayMemory, nearest_rank_percentile, relabel
from .net import PredictorNet

__all__ = [
    "FilterConfig",
    "PredictorNet",
    "ReplayMemory",
    "SuccessPredictorHook",
    "assisted_generation_loop",
    "audit_accuracy",
    "filter_candidates",
    "nearest_rank_percentile",
    "relabel",
    "softmax",
]
