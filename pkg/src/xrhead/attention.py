"""Token-to-part attention pooling.

Tokens are scored against num_parts + 1 slots (the extra slot absorbs
background), each token's scores are softmax-normalized, and the first
num_parts columns pool a projection of the tokens into per-part features.
Every image's pooled block is then rescaled to a fixed Frobenius norm so
downstream inner products live on a stable scale.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeMismatchError
from .numerics import (
    Affine,
    BatchNorm,
    Parameter,
    Tensor,
    bmm,
    constant,
    div,
    gather_cols,
    mul,
    power,
    relu,
    reshape,
    softmax_rows,
    sum_axis,
    transpose,
)


class PartAttention:
    """batch norm -> affine scores -> relu -> row softmax -> pooled projection."""

    def __init__(
        self,
        feat_dim: int,
        num_parts: int,
        seed: int,
        proj_dim: int | None = None,
        scale: float = 64.0,
        squared_denominator: bool = False,
    ):
        if num_parts < 1:
            raise ConfigError(f"need num_parts >= 1, got {num_parts}")
        if scale <= 0:
            raise ConfigError(f"need scale > 0, got {scale}")
        self.feat_dim = feat_dim
        self.num_parts = num_parts
        self.proj_dim = proj_dim or feat_dim
        self.scale = scale
        self.squared_denominator = squared_denominator
        rng = np.random.default_rng(seed)
        self.bn = BatchNorm(feat_dim, name="attn.bn")
        self.score = Affine(feat_dim, num_parts + 1, rng, name="attn.score")
        self.proj = Affine(feat_dim, self.proj_dim, rng, name="attn.proj")

    def params(self) -> list[Parameter]:
        return self.bn.params() + self.score.params() + self.proj.params()

    def attention(self, tokens: Tensor, training: bool) -> Tensor:
        """tokens (b, n, feat_dim) -> weights (b, n, num_parts + 1), rows sum to 1."""
        b, n, _ = self._check(tokens)
        flat = reshape(tokens, (b * n, self.feat_dim))
        scores = relu(self.score(self.bn(flat, training)))
        return reshape(softmax_rows(scores), (b, n, self.num_parts + 1))

    def forward(self, tokens: Tensor, training: bool) -> tuple[Tensor, Tensor]:
        """tokens (b, n, feat_dim) -> (parts (b, num_parts, proj_dim), weights).

        Part features are the attention-weighted sums of projected tokens,
        rescaled per image to Frobenius norm `scale` (or by the squared norm
        when squared_denominator is set).
        """
        b, n, _ = self._check(tokens)
        s = self.num_parts
        flat = reshape(tokens, (b * n, self.feat_dim))
        scores = relu(self.score(self.bn(flat, training)))
        weights = softmax_rows(scores)
        picked = reshape(gather_cols(weights, np.arange(s)), (b, n, s))
        projected = reshape(self.proj(flat), (b, n, self.proj_dim))
        pooled = bmm(transpose(picked), projected)  # (b, s, proj_dim)
        return self._rescale(pooled), reshape(weights, (b, n, s + 1))

    def forward_single(self, tokens: Tensor, training: bool = False) -> tuple[Tensor, Tensor]:
        """tokens (n, feat_dim) -> (parts (num_parts, proj_dim), weights (n, num_parts + 1))."""
        if tokens.values.ndim != 2:
            raise ShapeMismatchError(f"expected tokens (n, d), got {tokens.values.shape}")
        n = tokens.values.shape[0]
        parts, weights = self.forward(reshape(tokens, (1, n, self.feat_dim)), training)
        return (
            reshape(parts, (self.num_parts, self.proj_dim)),
            reshape(weights, (n, self.num_parts + 1)),
        )

    def _rescale(self, pooled: Tensor) -> Tensor:
        b, s, d = pooled.values.shape
        squares = reshape(mul(pooled, pooled), (b, s * d))
        total = sum_axis(squares, 1, keepdims=True)  # (b, 1) squared Frobenius norm
        if np.any(total.values == 0.0):
            raise DegenerateInputError("pooled part features have zero norm")
        denom = total if self.squared_denominator else power(total, 0.5)
        factor = div(constant(self.scale), denom)
        return mul(pooled, reshape(factor, (b, 1, 1)))

    def _check(self, tokens: Tensor):
        if tokens.values.ndim != 3 or tokens.values.shape[2] != self.feat_dim:
            raise ShapeMismatchError(
                f"expected tokens (b, n, {self.feat_dim}), got {tokens.values.shape}"
            )
        return tokens.values.shape
