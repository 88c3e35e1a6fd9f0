"""Learnable multi-part prompt bank.

Each (class, part) pair owns a private sequence of ctx_len context vectors;
appending the class embedding gives a sequence of ctx_len + 1 word vectors
that the frozen text encoder turns into one prompt feature.  Contexts train,
class embeddings stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeMismatchError
from .numerics import (
    Parameter,
    Tensor,
    concat_rows,
    constant,
    gather_rows,
    reshape,
)


@dataclass
class PromptFeatures:
    """Encoded prompts, one feature row per (class, part)."""

    tensor: Tensor  # (num_classes, num_parts, feat_dim)
    source: str  # "learned" or "manual"

    @property
    def num_classes(self) -> int:
        return self.tensor.values.shape[0]

    @property
    def num_parts(self) -> int:
        return self.tensor.values.shape[1]

    @property
    def feat_dim(self) -> int:
        return self.tensor.values.shape[2]


def manual_features(values: np.ndarray) -> PromptFeatures:
    """Wrap fixed prompt features (no gradient, nothing to train)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ShapeMismatchError(f"manual features must be (classes, parts, dim), got {values.shape}")
    return PromptFeatures(constant(values), source="manual")


class PromptBank:
    """contexts (W, S, M, word_dim) trainable, class_embeddings (W, word_dim) frozen."""

    def __init__(
        self,
        class_embeddings: np.ndarray,
        num_parts: int,
        ctx_len: int,
        seed: int,
        init_std: float = 0.02,
    ):
        class_embeddings = np.asarray(class_embeddings, dtype=np.float64)
        if class_embeddings.ndim != 2:
            raise ShapeMismatchError(
                f"class embeddings must be (classes, word_dim), got {class_embeddings.shape}"
            )
        if num_parts < 1 or ctx_len < 1:
            raise ConfigError(f"need num_parts >= 1 and ctx_len >= 1, got {num_parts}, {ctx_len}")
        self.num_classes, self.word_dim = class_embeddings.shape
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        self.num_parts = num_parts
        self.ctx_len = ctx_len
        rng = np.random.default_rng(seed)
        ctx = rng.normal(0.0, init_std, size=(self.num_classes, num_parts, ctx_len, self.word_dim))
        self.contexts = Parameter("prompts.contexts", Tensor(ctx, requires_grad=True))
        self.class_embeddings = Parameter(
            "prompts.class_embeddings", Tensor(class_embeddings, requires_grad=True), frozen=True
        )

    def params(self) -> list[Parameter]:
        return [self.contexts, self.class_embeddings]

    def sequence(self, class_id: int, part_id: int) -> Tensor:
        """One prompt sequence (ctx_len + 1, word_dim): contexts then class row."""
        w, s = self.num_classes, self.num_parts
        if not (0 <= class_id < w and 0 <= part_id < s):
            raise IndexError(f"prompt ({class_id}, {part_id}) outside ({w}, {s})")
        ctx2 = reshape(self.contexts.tensor, (w * s * self.ctx_len, self.word_dim))
        base = (class_id * s + part_id) * self.ctx_len
        rows = gather_rows(ctx2, np.arange(base, base + self.ctx_len))
        cls = gather_rows(self.class_embeddings.tensor, [class_id])
        return concat_rows([rows, cls])

    def all_sequences(self) -> Tensor:
        """All prompts stacked: (W * S, ctx_len + 1, word_dim), row i = class i // S, part i % S."""
        w, s, m, d = self.num_classes, self.num_parts, self.ctx_len, self.word_dim
        ctx2 = reshape(self.contexts.tensor, (w * s * m, d))
        cls_rep = gather_rows(self.class_embeddings.tensor, np.arange(w * s) // s)
        stacked = concat_rows([ctx2, cls_rep])
        # interleave: for prompt i, its m context rows then its class row
        order = np.empty((w * s, m + 1), dtype=np.intp)
        order[:, :m] = np.arange(w * s * m).reshape(w * s, m)
        order[:, m] = w * s * m + np.arange(w * s)
        return reshape(gather_rows(stacked, order.reshape(-1)), (w * s, m + 1, d))

    def encode(self, encoder) -> PromptFeatures:
        """Run every prompt through the frozen text encoder: (W, S, feat_dim)."""
        feats = encoder.encode(self.all_sequences())
        t = reshape(feats, (self.num_classes, self.num_parts, feats.values.shape[1]))
        return PromptFeatures(t, source="learned")
