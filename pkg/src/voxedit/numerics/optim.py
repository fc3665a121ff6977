"""Adam / AdamW optimizers over Parameter collections."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter

__all__ = ["Adam", "AdamW"]


class Adam:
    """Adam with bias correction; ``weight_decay`` is L2 added to the gradient."""

    def __init__(self, params: dict[str, Parameter], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, grad_clip: float | None = None):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._t = 0

    def _clip_gradients(self) -> None:
        if self.grad_clip is None:
            return
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float(np.sum(p.grad * p.grad))
        norm = np.sqrt(total)
        if norm > self.grad_clip:
            scale = self.grad_clip / norm
            for p in self.params.values():
                if p.grad is not None:
                    p.grad *= scale

    def _adjusted_grad(self, p: Parameter) -> np.ndarray:
        g = p.grad
        if self.weight_decay:
            g = g + self.weight_decay * p.data
        return g

    def _apply_decoupled_decay(self, p: Parameter) -> None:
        pass

    def step(self) -> None:
        self._clip_gradients()
        self._t += 1
        bc1 = 1.0 - self.beta1 ** self._t
        bc2 = 1.0 - self.beta2 ** self._t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = self._adjusted_grad(p)
            m = self._m[k]
            v = self._v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            self._apply_decoupled_decay(p)
            p.data -= self.lr * update

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


class AdamW(Adam):
    """Adam with decoupled weight decay."""

    def _adjusted_grad(self, p: Parameter) -> np.ndarray:
        return p.grad

    def _apply_decoupled_decay(self, p: Parameter) -> None:
        if self.weight_decay:
            p.data -= self.lr * self.weight_decay * p.data
