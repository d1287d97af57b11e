from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gmr import (
    GmrConfig,
    GmrParams,
    encode_local_poses,
    gmr_backward,
    gmr_forward,
    gru_cell,
    init_params,
    predict,
    swap_directions,
)
from .gradcheck import check_gradients, numerical_gradient
from .tape import Node, Tape

__all__ = [
    "Tape",
    "Node",
    "GmrConfig",
    "GmrParams",
    "encode_local_poses",
    "init_params",
    "gru_cell",
    "gmr_forward",
    "gmr_backward",
    "predict",
    "swap_directions",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "numerical_gradient",
    "check_gradients",
]
