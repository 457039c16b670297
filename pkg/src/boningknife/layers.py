"""Parameter registry and the shared neural building blocks.

Every learnable tensor lives in a ParamSet under a dotted name; creation
order is insertion order, which makes checkpoints and optimizer sweeps
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


class ParamSet:
    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def _register(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name '{name}'")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def weight(self, name: str, d_in: int, d_out, rng: np.random.Generator) -> Tensor:
        shape = (d_in, d_out) if isinstance(d_out, int) else (d_in, *d_out)
        return self._register(name, rng.normal(0.0, 1.0 / np.sqrt(d_in), size=shape))

    def normal(self, name: str, shape, std: float, rng: np.random.Generator) -> Tensor:
        return self._register(name, rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self._register(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self._register(name, np.ones(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def items(self):
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def as_dict(self) -> dict[str, Tensor]:
        return dict(self._params)

    def count(self) -> int:
        return sum(p.data.size for p in self._params.values())


def resolve_heads(d_model: int, requested: int) -> int:
    """Largest divisor of d_model not exceeding the requested head count."""
    for h in range(min(requested, d_model), 0, -1):
        if d_model % h == 0:
            return h
    return 1


@dataclass
class LinearParams:
    w: Tensor
    b: Tensor


def make_linear(ps: ParamSet, name: str, d_in: int, d_out: int,
                rng: np.random.Generator) -> LinearParams:
    return LinearParams(ps.weight(f"{name}.w", d_in, d_out, rng),
                        ps.zeros(f"{name}.b", (d_out,)))


def apply_linear(x: Tensor, p: LinearParams) -> Tensor:
    return ad.linear(x, p.w, p.b)


@dataclass
class MlpParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


def make_mlp(ps: ParamSet, name: str, d_in: int, d_hidden: int, d_out: int,
             rng: np.random.Generator) -> MlpParams:
    return MlpParams(
        ps.weight(f"{name}.w1", d_in, d_hidden, rng),
        ps.zeros(f"{name}.b1", (d_hidden,)),
        ps.weight(f"{name}.w2", d_hidden, d_out, rng),
        ps.zeros(f"{name}.b2", (d_out,)),
    )


def apply_mlp(x: Tensor, p: MlpParams) -> Tensor:
    return ad.linear(ad.gelu(ad.linear(x, p.w1, p.b1)), p.w2, p.b2)


@dataclass
class AttentionBlockParams:
    ln_gain: Tensor
    ln_bias: Tensor
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    heads: int


def make_attention_block(ps: ParamSet, name: str, d_model: int, heads: int,
                         rng: np.random.Generator) -> AttentionBlockParams:
    if d_model % heads != 0:
        raise ConfigError(f"d_model {d_model} not divisible by {heads} heads ({name})")
    return AttentionBlockParams(
        ps.ones(f"{name}.ln_gain", (d_model,)),
        ps.zeros(f"{name}.ln_bias", (d_model,)),
        ps.weight(f"{name}.wq", d_model, d_model, rng),
        ps.zeros(f"{name}.bq", (d_model,)),
        ps.weight(f"{name}.wk", d_model, d_model, rng),
        ps.zeros(f"{name}.bk", (d_model,)),
        ps.weight(f"{name}.wv", d_model, d_model, rng),
        ps.zeros(f"{name}.bv", (d_model,)),
        ps.weight(f"{name}.wo", d_model, d_model, rng),
        ps.zeros(f"{name}.bo", (d_model,)),
        heads,
    )


def attention_block(x: Tensor, mask_bits, p: AttentionBlockParams,
                    weights_out: list | None = None) -> Tensor:
    """Pre-layer-norm masked multi-head attention with a residual connection.

    x: [N, d]. mask_bits: [N, N] or [C, N, N]; a stacked mask yields
    [C, N, d] where the residual x broadcasts over C.
    """
    xn = ad.layer_norm(x, p.ln_gain, p.ln_bias)
    q = ad.linear(xn, p.wq, p.bq)
    k = ad.linear(xn, p.wk, p.bk)
    v = ad.linear(xn, p.wv, p.bv)
    ctx = ad.multi_head_mix(q, k, v, mask_bits, p.heads, weights_out)
    return ad.add(ad.linear(ctx, p.wo, p.bo), x)
