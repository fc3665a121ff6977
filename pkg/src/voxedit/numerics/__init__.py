"""Tensor arithmetic with reverse-mode autodiff and an adaptive ODE integrator."""

from .checkpoint import load_checkpoint, save_checkpoint
from .ode import OdeSolverConfig, dopri5_integrate
from .ops import avg_pool1d, conv1d, unfold1d, upsample1d
from .optim import Adam, AdamW
from .rng import RngState
from .tensor import (Parameter, Tensor, backward, concat,
                     finite_diff_gradient, is_grad_enabled, no_grad, stack)

__all__ = [
    "Tensor", "Parameter", "backward", "concat", "stack", "no_grad",
    "is_grad_enabled", "finite_diff_gradient",
    "OdeSolverConfig", "dopri5_integrate",
    "conv1d", "unfold1d", "avg_pool1d", "upsample1d",
    "Adam", "AdamW", "RngState",
    "save_checkpoint", "load_checkpoint",
]
