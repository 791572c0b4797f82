"""Dense numerics: tensors, a differentiation tape, and a finite-difference oracle."""

from ._backend import COMPILED
from .gradcheck import finite_diff_grad, relative_error
from .ops import affine, softmax
from .tensor import Tape, Tensor, active_tape, as_tensor, backward, resolve_dtype

__all__ = [
    "COMPILED",
    "Tape",
    "Tensor",
    "active_tape",
    "affine",
    "as_tensor",
    "backward",
    "finite_diff_grad",
    "relative_error",
    "resolve_dtype",
    "softmax",
]
