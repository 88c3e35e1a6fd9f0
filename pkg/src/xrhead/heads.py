"""Prediction heads over pooled part features and prompt features.

Shapes throughout: part features v (b, s, d) from attention pooling, prompt
features t (w, s, d) from the prompt bank, logits (b, w).

The relation-matrix heads flatten all part-to-prompt inner products into one
vector per image with the fixed layout

    flat[s * (S * W) + s2 * W + w] = v[s] . t[w, s2]

(s indexes image parts, s2 prompt parts, w classes).  Variant heads read
slices of that vector: the per-class diagonal (s == s2), the concatenation
of diagonals across classes, or the full per-class block.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeMismatchError
from .numerics import (
    Mlp,
    Parameter,
    Tensor,
    add,
    gather_cols,
    gather_rows,
    l2_normalize_rows,
    matmul,
    mul,
    reshape,
    transpose,
)
from .prompts import PromptFeatures


class HeadKind(str, enum.Enum):
    ALIGN = "ALIGN"
    PWCS = "PWCS"
    MLPS = "MLPS"
    CRM_FULL = "CRM_FULL"
    CRM_BASE = "CRM_BASE"
    CRM_XCLASS = "CRM_XCLASS"
    CRM_XPART = "CRM_XPART"

    @classmethod
    def parse(cls, name: str) -> "HeadKind":
        try:
            return cls(name.upper())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown head kind {name!r}, expected one of {valid}") from None


CRM_KINDS = (HeadKind.CRM_FULL, HeadKind.CRM_BASE, HeadKind.CRM_XCLASS, HeadKind.CRM_XPART)


def flat_index(s: int, s2: int, w: int, num_parts: int, num_classes: int) -> int:
    """Position of v[s] . t[w, s2] in the flattened relation vector."""
    if not (0 <= s < num_parts and 0 <= s2 < num_parts and 0 <= w < num_classes):
        raise IndexError(f"({s}, {s2}, {w}) outside ({num_parts}, {num_parts}, {num_classes})")
    return s * (num_parts * num_classes) + s2 * num_classes + w


@dataclass
class CrossRelation:
    """Flattened part-to-prompt inner products for one image."""

    flat: Tensor  # (num_parts * num_parts * num_classes,)
    num_parts: int
    num_classes: int

    def index(self, s: int, s2: int, w: int) -> int:
        return flat_index(s, s2, w, self.num_parts, self.num_classes)

    def entry(self, s: int, s2: int, w: int) -> float:
        return float(self.flat.values[self.index(s, s2, w)])


def _check_pair(v: Tensor, t: Tensor):
    if v.values.ndim != 3:
        raise ShapeMismatchError(f"part features must be (b, s, d), got {v.values.shape}")
    if t.values.ndim != 3:
        raise ShapeMismatchError(f"prompt features must be (w, s, d), got {t.values.shape}")
    b, s, d = v.values.shape
    w, s2, d2 = t.values.shape
    if s != s2 or d != d2:
        raise ShapeMismatchError(
            f"part features {v.values.shape} and prompt features {t.values.shape} disagree"
        )
    return b, s, d, w


def relation_batch(v: Tensor, t: Tensor, normalize_prompts: bool = False) -> Tensor:
    """(b, s, d) x (w, s, d) -> (b, s*s*w) with the documented flat layout."""
    b, s, d, w = _check_pair(v, t)
    t2 = reshape(t, (w * s, d))  # row w * s + s2
    if normalize_prompts:
        t2 = l2_normalize_rows(t2)
    # reorder prompt rows to (s2 outer, w inner) so a plain matmul + reshape
    # lands every product at flat[s * (s*w) + s2 * w + w_idx]
    perm = np.arange(s * w)
    trows = gather_rows(t2, (perm % w) * s + perm // w)
    products = matmul(reshape(v, (b * s, d)), transpose(trows))  # (b*s, s*w)
    return reshape(products, (b, s * s * w))


def cross_relation(v: Tensor, t: Tensor, normalize_prompts: bool = False) -> CrossRelation:
    """Single image: v (s, d), t (w, s, d) -> CrossRelation."""
    if v.values.ndim != 2:
        raise ShapeMismatchError(f"expected part features (s, d), got {v.values.shape}")
    s, d = v.values.shape
    w = t.values.shape[0]
    flat = relation_batch(reshape(v, (1, s, d)), t, normalize_prompts)
    return CrossRelation(reshape(flat, (s * s * w,)), num_parts=s, num_classes=w)


def align_predict(v: Tensor, t: Tensor) -> Tensor:
    """Single-prompt cosine baseline: v (d,), t (w, d) -> logits (w,)."""
    if v.values.ndim != 1 or t.values.ndim != 2 or t.values.shape[1] != v.values.shape[0]:
        raise ShapeMismatchError(
            f"expected v (d,) and t (w, d), got {v.values.shape} and {t.values.shape}"
        )
    d = v.values.shape[0]
    w = t.values.shape[0]
    sims = matmul(l2_normalize_rows(reshape(v, (1, d))), transpose(l2_normalize_rows(t)))
    return reshape(sims, (w,))


def pwcs_batch(v: Tensor, t: Tensor) -> Tensor:
    """Mean per-part cosine similarity: (b, s, d) x (w, s, d) -> (b, w)."""
    b, s, d, w = _check_pair(v, t)
    vn = l2_normalize_rows(reshape(v, (b * s, d)))
    tn = l2_normalize_rows(reshape(t, (w * s, d)))
    acc = None
    for part in range(s):
        vs = gather_rows(vn, np.arange(b) * s + part)
        ts = gather_rows(tn, np.arange(w) * s + part)
        sims = matmul(vs, transpose(ts))
        acc = sims if acc is None else add(acc, sims)
    return acc * (1.0 / s)


def pwcs_predict(v: Tensor, t: Tensor) -> Tensor:
    """Single image: v (s, d), t (w, s, d) -> logits (w,)."""
    if v.values.ndim != 2:
        raise ShapeMismatchError(f"expected part features (s, d), got {v.values.shape}")
    s, d = v.values.shape
    w = t.values.shape[0]
    return reshape(pwcs_batch(reshape(v, (1, s, d)), t), (w,))


def crm_predict(rel: CrossRelation, head: "CrmHead", training: bool = False) -> Tensor:
    """Single image: a CrossRelation through a relation-matrix head -> logits (w,)."""
    n = rel.flat.values.shape[0]
    logits = head.logits_from_relation(reshape(rel.flat, (1, n)), training)
    return reshape(logits, (rel.num_classes,))


def mlps_predict(v: Tensor, head: "MlpsHead", training: bool = False) -> Tensor:
    """Single image: v (s, d) through the per-part MLP baseline -> logits (w,)."""
    if v.values.ndim != 2:
        raise ShapeMismatchError(f"expected part features (s, d), got {v.values.shape}")
    s, d = v.values.shape
    logits = head.logits(reshape(v, (1, s, d)), None, training)
    return reshape(logits, (head.num_classes,))


# --- trainable heads ----------------------------------------------------------


class AlignHead:
    """Parameter-free single-prompt baseline; requires num_parts == 1."""

    kind = HeadKind.ALIGN

    def __init__(self, num_classes: int, num_parts: int):
        if num_parts != 1:
            raise ConfigError(f"ALIGN needs num_parts == 1, got {num_parts}")
        self.num_classes = num_classes
        self.num_parts = num_parts

    def logits(self, v: Tensor, feats: PromptFeatures, training: bool) -> Tensor:
        b, s, d, w = _check_pair(v, feats.tensor)
        sims = matmul(
            l2_normalize_rows(reshape(v, (b, d))),
            transpose(l2_normalize_rows(reshape(feats.tensor, (w, d)))),
        )
        return sims

    def params(self) -> list[Parameter]:
        return []


class PwcsHead:
    """Parameter-free mean per-part cosine head."""

    kind = HeadKind.PWCS

    def __init__(self, num_classes: int, num_parts: int):
        self.num_classes = num_classes
        self.num_parts = num_parts

    def logits(self, v: Tensor, feats: PromptFeatures, training: bool) -> Tensor:
        return pwcs_batch(v, feats.tensor)

    def params(self) -> list[Parameter]:
        return []


class MlpsHead:
    """Baseline without prompts: one MLP per part, logits averaged."""

    kind = HeadKind.MLPS

    def __init__(self, num_classes: int, num_parts: int, feat_dim: int, hidden: int, seed: int):
        self.num_classes = num_classes
        self.num_parts = num_parts
        self.feat_dim = feat_dim
        rng = np.random.default_rng(seed)
        self.mlps = [
            Mlp(feat_dim, hidden, num_classes, rng, name=f"head.part{i}") for i in range(num_parts)
        ]

    def logits(self, v: Tensor, feats: PromptFeatures | None, training: bool) -> Tensor:
        b, s, d = v.values.shape
        if s != self.num_parts or d != self.feat_dim:
            raise ShapeMismatchError(
                f"expected (b, {self.num_parts}, {self.feat_dim}), got {v.values.shape}"
            )
        flat = reshape(v, (b * s, d))
        acc = None
        for part, mlp in enumerate(self.mlps):
            out = mlp(gather_rows(flat, np.arange(b) * s + part), training)
            acc = out if acc is None else add(acc, out)
        return acc * (1.0 / s)

    def params(self) -> list[Parameter]:
        return [p for mlp in self.mlps for p in mlp.params()]


class CrmHead:
    """Relation-matrix heads: a classifier over flattened inner products.

    FULL    one classifier on the whole vector, s*s*w -> w
    BASE    shared classifier on each class diagonal, s -> 1
    XCLASS  one classifier on concatenated diagonals, s*w -> w
    XPART   shared classifier on each full class block, s*s -> 1
    """

    def __init__(
        self,
        kind: HeadKind,
        num_classes: int,
        num_parts: int,
        hidden: int,
        seed: int,
        normalize_prompts: bool = False,
    ):
        if kind not in CRM_KINDS:
            raise ConfigError(f"{kind} is not a relation-matrix head")
        self.kind = kind
        self.num_classes = num_classes
        self.num_parts = num_parts
        self.normalize_prompts = normalize_prompts
        w, s = num_classes, num_parts
        rng = np.random.default_rng(seed)
        if kind == HeadKind.CRM_FULL:
            self.pick = None
            self.clf = Mlp(s * s * w, hidden, w, rng, name="head.clf")
        elif kind == HeadKind.CRM_BASE:
            # class-major diagonals: pick[w_idx * s + s_idx] = (s_idx, s_idx, w_idx)
            grid = np.arange(w * s)
            self.pick = (grid % s) * (s * w) + (grid % s) * w + grid // s
            self.clf = Mlp(s, hidden, 1, rng, name="head.clf")
        elif kind == HeadKind.CRM_XCLASS:
            grid = np.arange(w * s)
            self.pick = (grid % s) * (s * w) + (grid % s) * w + grid // s
            self.clf = Mlp(s * w, hidden, w, rng, name="head.clf")
        else:  # CRM_XPART: class-major full blocks
            grid = np.arange(w * s * s)
            w_idx, rest = grid // (s * s), grid % (s * s)
            self.pick = (rest // s) * (s * w) + (rest % s) * w + w_idx
            self.clf = Mlp(s * s, hidden, 1, rng, name="head.clf")

    def logits_from_relation(self, flat: Tensor, training: bool) -> Tensor:
        """flat (b, s*s*w) -> logits (b, w)."""
        b = flat.values.shape[0]
        w, s = self.num_classes, self.num_parts
        if flat.values.shape != (b, s * s * w):
            raise ShapeMismatchError(
                f"expected relation vectors (b, {s * s * w}), got {flat.values.shape}"
            )
        if self.kind == HeadKind.CRM_FULL:
            return self.clf(flat, training)
        picked = gather_cols(flat, self.pick)
        if self.kind == HeadKind.CRM_XCLASS:
            return self.clf(picked, training)
        per_class = self.pick.size // w
        scores = self.clf(reshape(picked, (b * w, per_class)), training)
        return reshape(scores, (b, w))

    def logits(self, v: Tensor, feats: PromptFeatures, training: bool) -> Tensor:
        flat = relation_batch(v, feats.tensor, self.normalize_prompts)
        return self.logits_from_relation(flat, training)

    def params(self) -> list[Parameter]:
        return self.clf.params()


def default_hidden(kind: HeadKind, num_parts: int) -> int:
    if kind in (HeadKind.CRM_BASE, HeadKind.CRM_XPART):
        return 4 * num_parts
    return 512


def build_head(
    kind: HeadKind,
    num_classes: int,
    num_parts: int,
    feat_dim: int,
    seed: int,
    hidden: int | None = None,
    normalize_prompts: bool = False,
):
    """Construct any head kind with its default classifier width."""
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    hidden = hidden or default_hidden(kind, num_parts)
    if kind == HeadKind.ALIGN:
        return AlignHead(num_classes, num_parts)
    if kind == HeadKind.PWCS:
        return PwcsHead(num_classes, num_parts)
    if kind == HeadKind.MLPS:
        return MlpsHead(num_classes, num_parts, feat_dim, hidden, seed)
    return CrmHead(kind, num_classes, num_parts, hidden, seed, normalize_prompts)
