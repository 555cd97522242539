"""Federated learning task: data, loss, local SGD and learning constants."""
from .data import SyntheticDataset, generate_synthetic, power_law_sizes
from .model import MODEL_DIM, N_CLASSES, N_FEATURES, clip, grad, loss, loss_and_grad, predict_proba
from .optimum import LearningParams, estimate_learning_params, estimate_optimum
from .sgd import (
    ModelState,
    RunningAverage,
    global_update,
    local_sgd,
    local_sgd_devices,
    paper_schedule,
    theorem_schedule,
    weighted_average,
)

__all__ = [
    "MODEL_DIM", "N_CLASSES", "N_FEATURES",
    "LearningParams", "ModelState", "RunningAverage", "SyntheticDataset",
    "clip", "estimate_learning_params", "estimate_optimum", "generate_synthetic",
    "global_update", "grad", "local_sgd", "local_sgd_devices", "loss", "loss_and_grad",
    "paper_schedule", "power_law_sizes", "predict_proba", "theorem_schedule",
    "weighted_average",
]
