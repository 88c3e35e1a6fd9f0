"""Frozen encoder stand-ins and the feature file format.

Real vision-language towers are out of scope; these stubs are seeded,
deterministic, and cheap, with just enough structure to behave like fixed
feature extractors.  The text stub is differentiable with respect to its
input sequence so gradients can reach learnable prompt vectors; its own
weights never train.  The image stub is forward-only numpy.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .container import Reader, Writer
from .errors import FormatError, ShapeMismatchError
from .numerics import Tensor, add, constant, matmul, mean_axis, tanh

FEATURE_MAGIC = b"XRVF"
FEATURE_VERSION = 1


class FrozenTextEncoder:
    """Positional add, mean pool over positions, then affine-tanh-affine.

    encode: sequences (b, num_positions, word_dim) -> features (b, feat_dim),
    differentiable w.r.t. the input sequences only.
    """

    def __init__(self, seed: int, word_dim: int, feat_dim: int, num_positions: int):
        self.seed = seed
        self.word_dim = word_dim
        self.feat_dim = feat_dim
        self.num_positions = num_positions
        rng = np.random.default_rng(seed)
        self._positions = rng.normal(0.0, 0.02, size=(num_positions, word_dim))
        self._w1 = rng.normal(0.0, 1.0 / np.sqrt(word_dim), size=(word_dim, feat_dim))
        self._b1 = rng.normal(0.0, 0.01, size=(1, feat_dim))
        self._w2 = rng.normal(0.0, 1.0 / np.sqrt(feat_dim), size=(feat_dim, feat_dim))
        self._b2 = rng.normal(0.0, 0.01, size=(1, feat_dim))

    def encode(self, sequences: Tensor) -> Tensor:
        if sequences.values.ndim != 3 or sequences.values.shape[1:] != (
            self.num_positions,
            self.word_dim,
        ):
            raise ShapeMismatchError(
                f"expected sequences (b, {self.num_positions}, {self.word_dim}), "
                f"got {sequences.values.shape}"
            )
        x = add(sequences, constant(self._positions))
        pooled = mean_axis(x, 1)
        h = tanh(add(matmul(pooled, constant(self._w1)), constant(self._b1)))
        return add(matmul(h, constant(self._w2)), constant(self._b2))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in (self._positions, self._w1, self._b1, self._w2, self._b2):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


class FrozenImageEncoder:
    """Per-patch affine + tanh: patches (..., patch_dim) -> (..., feat_dim)."""

    def __init__(self, seed: int, patch_dim: int, feat_dim: int):
        self.seed = seed
        self.patch_dim = patch_dim
        self.feat_dim = feat_dim
        rng = np.random.default_rng(seed)
        self._w = rng.normal(0.0, 1.0 / np.sqrt(patch_dim), size=(patch_dim, feat_dim))
        self._b = rng.normal(0.0, 0.01, size=feat_dim)

    def encode(self, patches: np.ndarray) -> np.ndarray:
        patches = np.asarray(patches, dtype=np.float64)
        if patches.shape[-1] != self.patch_dim:
            raise ShapeMismatchError(
                f"expected patches (..., {self.patch_dim}), got {patches.shape}"
            )
        return np.tanh(patches @ self._w + self._b)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self._w).tobytes())
        h.update(np.ascontiguousarray(self._b).tobytes())
        return h.hexdigest()


# --- feature files -----------------------------------------------------------


def save_features(path: str, values: np.ndarray, metadata: dict | None = None) -> None:
    """Write an f32 feature array plus JSON metadata (class/part names etc.)."""
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise FormatError("refusing to save non-finite feature values")
    w = Writer(FEATURE_MAGIC, FEATURE_VERSION)
    w.array(values, np.dtype("<f4"))
    w.metadata(metadata or {})
    with open(path, "wb") as f:
        f.write(w.bytes())


def load_features(path: str) -> tuple[np.ndarray, dict]:
    """Read a feature file back as (float64 array, metadata dict)."""
    with open(path, "rb") as f:
        data = f.read()
    r = Reader(data)
    r.magic(FEATURE_MAGIC)
    r.version(FEATURE_VERSION)
    values = r.array("features")
    meta = r.metadata()
    r.done()
    return values, meta
