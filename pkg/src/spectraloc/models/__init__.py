from spectraloc.models.knn import knn_predict, knn_predict_batch
from spectraloc.models.localizer import ConfigurationError, Localizer, fit_localizer
from spectraloc.models.network import NetworkParams, ShapeError, forward, init_params, loss_and_grad
from spectraloc.models.training import Adam, History, TrainConfig, TrainingError, train

__all__ = [
    "Adam", "ConfigurationError", "History", "Localizer", "NetworkParams", "ShapeError",
    "TrainConfig", "TrainingError", "fit_localizer", "forward", "init_params", "knn_predict",
    "knn_predict_batch", "loss_and_grad", "train",
]
