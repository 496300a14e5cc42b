from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import Conv2d, Conv3d, GRUParams, Module
from .optim import Adam, LRSchedule
from .tensor import Parameter, Tensor, as_tensor, no_grad

__all__ = [
    "Adam", "Conv2d", "Conv3d", "GRUParams", "LRSchedule", "Module", "Parameter", "Tensor",
    "as_tensor", "load_checkpoint", "no_grad", "ops", "save_checkpoint",
]
