"""Minimal reverse-mode autodiff tensor core and the NN layers built on it."""

from .tensor import Tensor  # noqa: F401
from . import ops  # noqa: F401
from .layers import (  # noqa: F401
    Activation,
    AvgPool,
    BatchNorm,
    Conv3D,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    LayerKind,
    LayerNorm,
    LayerSpec,
    MaxPool3D,
    MultiHeadAttention,
    Net,
    build_layer,
)
from .optim import Adam, adam_step, bce_loss, mse_loss, TrainingDiverged  # noqa: F401
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint  # noqa: F401
from .gradcheck import finite_difference_error  # noqa: F401
