"""Dense 2-D tensors, a reverse-mode tape, Adam and gradient checking."""

from . import ops
from .adam import AdamState, adam_step
from .gradcheck import grad_check
from .tensor import ContractError, Tape, Tensor, backward, current_tape

__all__ = [
    "AdamState",
    "ContractError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "current_tape",
    "grad_check",
    "ops",
]
