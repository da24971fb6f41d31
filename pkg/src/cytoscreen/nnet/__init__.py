"""Small numpy neural-network engine: layers, SGD training, gradient checks, weight archives."""

from .archive import load_archive, load_weights, save_archive, save_weights
from .gradcheck import check_gradients, relative_error
from .layers import (Conv2D, Dense, Dropout, MaxPool2D, MaxPoolDropout, ReLU, Softmax,
                     conv_output_size, maxpool_dropout_forward)
from .losses import cross_entropy, mse, one_hot
from .network import Network
from .training import History, TrainConfig, precompute_prefix, train

__all__ = [
    "Conv2D", "Dense", "Dropout", "MaxPool2D", "MaxPoolDropout", "ReLU", "Softmax",
    "Network", "TrainConfig", "History", "train", "precompute_prefix",
    "check_gradients", "relative_error", "conv_output_size", "maxpool_dropout_forward",
    "mse", "cross_entropy", "one_hot",
    "save_archive", "load_archive", "save_weights", "load_weights",
]
