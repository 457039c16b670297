"""AdamW with decoupled weight decay over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import NumericalError


class AdamWState:
    """Per-parameter moment buffers and step counter."""

    __slots__ = ("m", "v", "t")

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0


class AdamW:
    """Decoupled-weight-decay Adam over a dict of named parameters.

    step() consumes .grad buffers (missing grad counts as zero) and clears
    them. Deterministic given the state. `names` restricts the update to a
    parameter subset, e.g. one objective's group in alternating training.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = {name: AdamWState(p.data.shape) for name, p in params.items()}

    def step(self, names=None) -> None:
        if names is None:
            names = self.params.keys()
        for name in names:
            p = self.params[name]
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            elif not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite gradient for parameter '{name}'")
            st = self.state[name]
            st.t += 1
            st.m = self.beta1 * st.m + (1.0 - self.beta1) * grad
            st.v = self.beta2 * st.v + (1.0 - self.beta2) * grad * grad
            mhat = st.m / (1.0 - self.beta1**st.t)
            vhat = st.v / (1.0 - self.beta2**st.t)
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flatten optimizer state for checkpointing."""
        out = {}
        for name, st in self.state.items():
            out[f"opt.m.{name}"] = st.m
            out[f"opt.v.{name}"] = st.v
            out[f"opt.t.{name}"] = np.asarray(st.t)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, st in self.state.items():
            st.m = np.array(arrays[f"opt.m.{name}"])
            st.v = np.array(arrays[f"opt.v.{name}"])
            st.t = int(arrays[f"opt.t.{name}"])
