from .data import Dataset, MinMaxScaler, fit_scaler, make_dataset, stack_complex, unstack_complex
from .layers import conv2d_backward, conv2d_forward, dense_backward, dense_forward, relu_backward, relu_forward
from .model import Network, NetworkSpec, build_network
from .optim import AdamHyper, AdamState, adam_step, mse_loss
from .train import TrainedModel, TrainHyper, predict_channel, train

__all__ = [
    "Dataset",
    "MinMaxScaler",
    "fit_scaler",
    "make_dataset",
    "stack_complex",
    "unstack_complex",
    "conv2d_forward",
    "conv2d_backward",
    "dense_forward",
    "dense_backward",
    "relu_forward",
    "relu_backward",
    "Network",
    "NetworkSpec",
    "build_network",
    "AdamHyper",
    "AdamState",
    "adam_step",
    "mse_loss",
    "TrainedModel",
    "TrainHyper",
    "predict_channel",
    "train",
]
