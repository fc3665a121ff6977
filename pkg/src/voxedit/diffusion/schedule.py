"""Trigonometric noise schedule, velocity algebra, and the DDIM sampler.

The forward process mixes data and noise as x_t = alpha(t)*x0 + beta(t)*eps
with alpha(t) = cos(t*pi/2) and beta(t) = sin(t*pi/2), so alpha^2 + beta^2 = 1
for every t. The velocity target v = alpha*eps - beta*x0 makes the
reconstruction identities in ``recover`` exact.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import ContractError, DomainError
from ..numerics.rng import RngState

__all__ = ["alpha_beta", "add_noise", "v_target", "recover", "ddim_step",
           "sample", "time_grid"]


def alpha_beta(t: float) -> tuple[float, float]:
    """Schedule coefficients (cos(t*pi/2), sin(t*pi/2)) for t in [0, 1]."""
    if np.any(np.asarray(t) < 0.0) or np.any(np.asarray(t) > 1.0):
        raise DomainError(f"schedule time must lie in [0, 1], got {t}")
    if np.isscalar(t):
        return math.cos(t * math.pi / 2.0), math.sin(t * math.pi / 2.0)
    t = np.asarray(t, dtype=np.float64)
    return np.cos(t * np.pi / 2.0), np.sin(t * np.pi / 2.0)


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ContractError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def add_noise(x0, eps, t: float) -> np.ndarray:
    """Noised sample x_t = alpha(t)*x0 + beta(t)*eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_shapes(x0, eps, "add_noise")
    a, b = alpha_beta(t)
    return a * x0 + b * eps

def v_target(x0, eps, t: float) -> np.ndarray:
    """Velocity target v = alpha(t)*eps - beta(t)*x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_shapes(x0, eps, "v_target")
    a, b = alpha_beta(t)
    return a * eps - b * x0


def recover(x_t, v_hat, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Invert the mixing: x0_hat = alpha*x_t - beta*v_hat, eps_hat = beta*x_t + alpha*v_hat."""
    x_t = np.asarray(x_t, dtype=np.float64)
    v_hat = np.asarray(v_hat, dtype=np.float64)
    _check_shapes(x_t, v_hat, "recover")
    a, b = alpha_beta(t)
    return a * x_t - b * v_hat, b * x_t + a * v_hat


def ddim_step(x_t, v_hat, t: float, t_prev: float, mode: str = "deterministic",
              rng: RngState | None = None) -> np.ndarray:
    """One reverse step from time t to t_prev.

    ``deterministic`` recombines the recovered (x0_hat, eps_hat);
    ``noise_replace`` swaps eps_hat for a fresh standard-normal draw in the
    recombination only.
    """
    if not (0.0 <= t_prev < t <= 1.0):
        raise ContractError(f"ddim_step requires 0 <= t_prev < t <= 1, got {t_prev}, {t}")
    x0_hat, eps_hat = recover(x_t, v_hat, t)
    if mode == "noise_replace":
        if rng is None:
            raise ContractError("noise_replace mode needs an RngState")
        eps_hat = rng.normal(x0_hat.shape)
    elif mode != "deterministic":
        raise ContractError(f"unknown sampler mode: {mode!r}")
    a_prev, b_prev = alpha_beta(t_prev)
    return a_prev * x0_hat + b_prev * eps_hat


def time_grid(t_steps: int) -> np.ndarray:
    """Uniform descending grid 1, (T-1)/T, ..., 1/T, 0."""
    if t_steps < 1:
        raise ContractError("t_steps must be >= 1")
    return np.linspace(1.0, 0.0, t_steps + 1)


def sample(denoiser: Callable, e_s, e_c, t_steps: int,
           mode: str = "deterministic", rng: RngState | None = None,
           mel_bins: int | None = None, upsample: int = 4) -> np.ndarray:
    """Generate mel values from noise conditioned on (e_s, e_c).

    ``denoiser(x_t, t, e_s, e_c) -> v_hat`` is any callable; the content
    sequence length determines the output frame count L = upsample * len(e_c).
    Returns the x0 estimate of the final step.
    """
    if rng is None:
        raise ContractError("sampling needs an RngState")
    e_c = np.asarray(e_c, dtype=np.float64)
    if mel_bins is None:
        mel_bins = getattr(denoiser, "mel_bins", None)
        if mel_bins is None:
            raise ContractError("mel_bins must be given when the denoiser "
                                "does not expose it")
    frames = upsample * e_c.shape[-1]
    x = rng.normal((mel_bins, frames))
    grid = time_grid(t_steps)
    for t, t_prev in zip(grid[:-1], grid[1:]):
        v_hat = denoiser(x, t, e_s, e_c)
        v_hat = getattr(v_hat, "data", v_hat)
        x = ddim_step(x, v_hat, t, t_prev, mode=mode, rng=rng)
    return x
