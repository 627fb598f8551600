"""Pointwise building blocks: linear projections, layer norm and the channel MLP."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from seqkit.tensor import Parameter, Tensor, gelu, layer_norm, linear


def join(prefix: str, name: str) -> str:
    """Dotted parameter path."""
    return f"{prefix}.{name}" if prefix else name


def uniform_parameter(
    rng: np.random.Generator,
    shape: tuple[int, ...],
    bound: float,
    dtype: npt.DTypeLike,
) -> Parameter:
    """Parameter drawn from U(-bound, +bound)."""
    return Parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)


@dataclass
class Linear:
    """Affine map over the last axis; ``weight`` is ``[out, in]``."""

    weight: Parameter
    bias: Parameter | None

    @classmethod
    def create(
        cls,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        dtype: npt.DTypeLike = np.float32,
        bias: bool = True,
        zero: bool = False,
    ) -> Linear:
        if zero:
            weight = Parameter(np.zeros((out_features, in_features)), dtype=dtype)
            b = Parameter(np.zeros(out_features), dtype=dtype) if bias else None
            return cls(weight, b)
        bound = 1.0 / math.sqrt(in_features)
        weight = uniform_parameter(rng, (out_features, in_features), bound, dtype)
        b = uniform_parameter(rng, (out_features,), bound, dtype) if bias else None
        return cls(weight, b)

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        params = {join(prefix, "weight"): self.weight}
        if self.bias is not None:
            params[join(prefix, "bias")] = self.bias
        return params


@dataclass
class LayerNorm:
    gamma: Parameter
    beta: Parameter
    eps: float = 1e-6

    @classmethod
    def create(cls, dim: int, dtype: npt.DTypeLike = np.float32, eps: float = 1e-6) -> LayerNorm:
        return cls(
            Parameter(np.ones(dim), dtype=dtype),
            Parameter(np.zeros(dim), dtype=dtype),
            eps,
        )

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        return {join(prefix, "gamma"): self.gamma, join(prefix, "beta"): self.beta}


@dataclass
class Mlp:
    """Channel MLP ``d -> ratio*d -> d`` with exact GELU in between."""

    fc1: Linear
    fc2: Linear

    @classmethod
    def create(
        cls,
        dim: int,
        ratio: float,
        rng: np.random.Generator,
        dtype: npt.DTypeLike = np.float32,
    ) -> Mlp:
        hidden = int(dim * ratio)
        return cls(
            Linear.create(dim, hidden, rng, dtype),
            Linear.create(hidden, dim, rng, dtype),
        )

    @property
    def hidden_features(self) -> int:
        return self.fc1.out_features

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        return {
            **self.fc1.named_parameters(join(prefix, "fc1")),
            **self.fc2.named_parameters(join(prefix, "fc2")),
        }
