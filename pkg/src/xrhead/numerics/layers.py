"""Small trainable building blocks composed from tensor primitives."""

from __future__ import annotations

import numpy as np

from ..errors import BatchSizeError, ShapeMismatchError
from .optim import Parameter
from .tensor import (
    Tensor,
    add,
    constant,
    matmul,
    mean_axis,
    mul,
    power,
    relu,
    sub,
)


class Affine:
    """x (b, d_in) -> x @ weight + bias, weight (d_in, d_out).

    Pass bias=False when the output feeds straight into batch norm: the
    mean subtraction cancels a bias exactly, leaving a dead parameter.
    """

    def __init__(
        self,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        name: str = "affine",
        bias: bool = True,
    ):
        self.d_in = d_in
        self.d_out = d_out
        w = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out))
        self.weight = Parameter(f"{name}.weight", Tensor(w, requires_grad=True))
        self.bias = None
        if bias:
            self.bias = Parameter(f"{name}.bias", Tensor(np.zeros((1, d_out)), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        if x.values.ndim != 2 or x.values.shape[1] != self.d_in:
            raise ShapeMismatchError(
                f"affine expects (b, {self.d_in}), got {x.values.shape}"
            )
        out = matmul(x, self.weight.tensor)
        return out if self.bias is None else add(out, self.bias.tensor)

    def params(self) -> list[Parameter]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]


class BatchNorm:
    """Per-feature batch normalization over axis 0 of x (b, dim).

    Training mode normalizes by batch mean and biased variance (1/b) and
    drifts running statistics with momentum 0.1; eval mode applies the
    running statistics as constants.  Training needs b >= 2.
    """

    def __init__(self, dim: int, name: str = "bn", eps: float = 1e-5, momentum: float = 0.1):
        self.dim = dim
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(f"{name}.gamma", Tensor(np.ones((1, dim)), requires_grad=True))
        self.beta = Parameter(f"{name}.beta", Tensor(np.zeros((1, dim)), requires_grad=True))
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if x.values.ndim != 2 or x.values.shape[1] != self.dim:
            raise ShapeMismatchError(f"batch norm expects (b, {self.dim}), got {x.values.shape}")
        if training:
            b = x.values.shape[0]
            if b < 2:
                raise BatchSizeError(f"batch norm needs at least 2 rows to train, got {b}")
            mean = mean_axis(x, 0, keepdims=True)
            centered = sub(x, mean)
            var = mean_axis(mul(centered, centered), 0, keepdims=True)
            inv = power(add(var, constant(self.eps)), -0.5)
            xhat = mul(centered, inv)
            m = self.momentum
            self.running_mean = (1.0 - m) * self.running_mean + m * mean.values[0]
            self.running_var = (1.0 - m) * self.running_var + m * var.values[0]
        else:
            inv = constant(1.0 / np.sqrt(self.running_var + self.eps))
            xhat = mul(sub(x, constant(self.running_mean)), inv)
        return add(mul(xhat, self.gamma.tensor), self.beta.tensor)

    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def state(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.running_mean = np.asarray(state["running_mean"], dtype=np.float64).copy()
        self.running_var = np.asarray(state["running_var"], dtype=np.float64).copy()


class Mlp:
    """affine -> batch norm -> relu -> affine (first affine bias-free)."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator, name: str = "mlp"):
        self.fc1 = Affine(d_in, hidden, rng, name=f"{name}.fc1", bias=False)
        self.bn = BatchNorm(hidden, name=f"{name}.bn")
        self.fc2 = Affine(hidden, d_out, rng, name=f"{name}.fc2")

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return self.fc2(relu(self.bn(self.fc1(x), training)))

    def params(self) -> list[Parameter]:
        return self.fc1.params() + self.bn.params() + self.fc2.params()
