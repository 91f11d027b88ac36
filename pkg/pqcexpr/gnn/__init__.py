"""
Graph neural network surrogate for expressibility.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    GnnModel,
    GnnRegressor,
    GraphBatch,
    ModelConfig,
    SageLayer,
    adam_step,
    backward,
    collate,
    huber_loss,
    loss_and_gradients,
    model_forward,
    mp_layer_forward,
    predict,
)
from .train import EpochRecord, TrainConfig, TrainHistory, split_dataset, train
