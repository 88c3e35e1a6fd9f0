"""
Cross-relationship scoring and its baselines
============================================

Given part features V (S rows) and prompt features T (one row per class and
part), the relation vector collects every inner product <V[s], T[w, s2]>,
including the cross terms s != s2. A trainable classifier over that vector
is the full head; the baselines restrict what it may look at.
"""

import numpy as np

from xrhead.heads import (
    CrmHead,
    HeadKind,
    align_predict,
    build_head,
    cross_relation,
    flat_index,
    pwcs_predict,
)
from xrhead.numerics import Tensor

# worked example: 2 parts, 2 classes, identity part features. Class 0's
# prompts match parts in order; class 1's prompts are swapped.
v = np.eye(2)
t = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]])
rel = cross_relation(Tensor(v), Tensor(t))
print(f"relation vector {rel.flat.values}  length S*S*W = {rel.flat.values.size}")

# layout: flat[s * (S * W) + s2 * W + w]; the cross terms expose the swap
print("entries (s, s2, w) -> value:")
for s in range(2):
    for s2 in range(2):
        for w in range(2):
            idx = flat_index(s, s2, w, num_parts=2, num_classes=2)
            print(f"    ({s}, {s2}, {w}) at {idx}: {rel.entry(s, s2, w):+.1f}")

# part-wise cosine scoring averages only the s == s2 diagonal, so the two
# classes tie here: per-part marginals cannot see the pairing
logits = pwcs_predict(Tensor(v), Tensor(t)).values
print(f"pwcs logits     {logits}  (tie: diagonal view loses the swap)")

# with one part, part-wise scoring collapses to the plain cosine baseline
v1, t1 = np.array([[3.0, 4.0]]), Tensor(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))
print(f"S=1 pwcs        {pwcs_predict(Tensor(v1), t1).values}")
print(f"   == align     {align_predict(Tensor(v1[0]), Tensor(t1.values[:, 0, :])).values}")

# the BASE head reads exactly the s == s2 diagonal of the full vector
base = CrmHead(HeadKind.CRM_BASE, num_classes=2, num_parts=2, hidden=4, seed=0)
print(f"BASE picks      {base.pick}  -> {rel.flat.values[base.pick]}")

# every head kind maps part features to per-class logits; ALIGN is the
# single-prompt special case and insists on S = 1
from xrhead.prompts import manual_features

rng = np.random.default_rng(0)
v8 = Tensor(rng.standard_normal((2, 6, 8)))  # batch of 2, S=6 parts, dim 8
feats = manual_features(rng.standard_normal((4, 6, 8)))  # W=4 classes
for kind in HeadKind:
    parts = 1 if kind == HeadKind.ALIGN else 6
    head = build_head(kind, num_classes=4, num_parts=parts, feat_dim=8, seed=1)
    vk = Tensor(v8.values[:, :parts]) if parts == 1 else v8
    fk = manual_features(feats.tensor.values[:, :parts]) if parts == 1 else feats
    out = head.logits(vk, fk, training=False)
    print(f"{kind.value:<10s} logits {out.values.shape}  params {len(head.params())}")
