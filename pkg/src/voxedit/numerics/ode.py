"""Adaptive Dormand-Prince 5(4) integrator.

Works on ``Tensor`` states so that training can differentiate through the
integration (discretize-then-optimize); step-size control decisions are made
on detached values and are never part of the gradient. Supports reverse-time
integration (t1 < t0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConfigError, DivergenceError, NumericError
from .tensor import Tensor

__all__ = ["OdeSolverConfig", "dopri5_integrate"]

# Dormand-Prince coefficients (5th-order propagation, embedded 4th-order).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_ERR = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
# PI controller exponents (order 5)
_ALPHA = 0.7 / 5.0
_BETA = 0.4 / 5.0


@dataclass
class OdeSolverConfig:
    rtol: float = 1e-5
    atol: float = 1e-5
    max_steps: int = 10_000
    initial_step: float = 1e-2

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ConfigError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.initial_step <= 0:
            raise ConfigError("initial_step must be positive")


def _combine(z: Tensor, h: float, coeffs: np.ndarray, ks: list) -> Tensor:
    acc = z
    for c, k in zip(coeffs, ks):
        if c != 0.0:
            acc = acc + k * (h * c)
    return acc


def dopri5_integrate(dynamics: Callable[[float, Tensor], Tensor], z0: Tensor,
                     t0: float, t1: float,
                     cfg: OdeSolverConfig | None = None) -> tuple[Tensor, int]:
    """Integrate dz/dt = dynamics(t, z) from t0 to t1.

    Returns the final state and the number of accepted steps. Local error per
    step is controlled against ``rtol``/``atol`` by the embedded 4th/5th-order
    pair with a PI step-size controller.

    Raises ``DivergenceError`` when the attempt budget ``max_steps`` is
    exhausted and ``NumericError`` on non-finite states.
    """
    cfg = cfg or OdeSolverConfig()
    z0 = Tensor._lift(z0)
    span = t1 - t0
    if span == 0.0:
        return z0, 0
    direction = 1.0 if span > 0 else -1.0
    h = direction * min(cfg.initial_step, abs(span))

    t = t0
    z = z0
    k1 = dynamics(t, z)
    err_prev = 1.0
    accepted = 0
    attempts = 0

    while (t1 - t) * direction > 1e-14 * max(1.0, abs(t1)):
        if attempts >= cfg.max_steps:
            raise DivergenceError(
                f"dopri5 exceeded {cfg.max_steps} step attempts at t={t:.6g}")
        attempts += 1
        if (t + h - t1) * direction > 0:
            h = t1 - t

        ks = [k1]
        for i in range(1, 7):
            zi = _combine(z, h, _A[i], ks)
            ks.append(dynamics(t + _C[i] * h, zi))
        z_new = _combine(z, h, _B5[:6], ks[:6])  # b5[6] == 0

        err = sum(c * k.data for c, k in zip(_ERR, ks) if c != 0.0) * h
        if not np.all(np.isfinite(z_new.data)):
            raise NumericError(f"dopri5 produced non-finite state at t={t:.6g}")
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(z.data), np.abs(z_new.data))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))

        if err_norm <= 1.0:
            t = t + h
            z = z_new
            k1 = ks[6]
            accepted += 1
            err_ref = max(err_norm, 1e-10)
            factor = _SAFETY * err_ref ** (-_ALPHA) * err_prev ** _BETA
            err_prev = err_ref
        else:
            factor = _SAFETY * err_norm ** (-_ALPHA)
        h = h * min(_MAX_FACTOR, max(_MIN_FACTOR, factor))

    return z, accepted
