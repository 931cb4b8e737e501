"""Differentiable sequence recommenders with hand-written backpropagation.

Encoders: an LSTM over the embedded command window, or a convolutional
encoder with max-over-time pooling. Goal-informed variants inject the
selected goal as a one-hot vector at the dense layer ("goal_dense"), as a
one-hot channel on every step input ("goal_steps"), or as an embedded
pseudo-command prepended to the window ("goal_token").
"""

from .config import ModelConfig, TrainConfig, ENCODERS, VARIANTS
from .losses import (loss_ce, loss_kl, loss_combined,
                     dlogits_ce, dlogits_kl, dlogits_combined)
from .network import init_parameters, forward, backward, zero_parameters
from .training import (EncodedExamples, encode_examples, train, fine_tune,
                       NeuralRecommender, TrainingDiverged)
from .gradcheck import numeric_gradient, check_gradients, check_all, tiny_config
from .checkpoint import save_params, load_params

__all__ = [
    "ModelConfig", "TrainConfig", "ENCODERS", "VARIANTS",
    "loss_ce", "loss_kl", "loss_combined",
    "dlogits_ce", "dlogits_kl", "dlogits_combined",
    "init_parameters", "forward", "backward", "zero_parameters",
    "EncodedExamples", "encode_examples", "train", "fine_tune",
    "NeuralRecommender", "TrainingDiverged",
    "numeric_gradient", "check_gradients", "check_all", "tiny_config",
    "save_params", "load_params",
]
