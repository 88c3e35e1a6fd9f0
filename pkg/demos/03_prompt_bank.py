"""
Multi-part learnable prompts
============================

Each class gets one prompt per part: a block of trainable context vectors
followed by the frozen class embedding. Encoding every sequence through the
frozen text encoder yields one feature row per (class, part) pair, and
gradients reach only the contexts.
"""

import numpy as np

from xrhead.encoders import FrozenTextEncoder
from xrhead.numerics import backward, tsum
from xrhead.prompts import PromptBank, manual_features

W, S, M, D = 5, 3, 4, 16  # classes, parts, context length, word dim
rng = np.random.default_rng(0)
class_embeddings = rng.standard_normal((W, D))

bank = PromptBank(class_embeddings, num_parts=S, ctx_len=M, seed=1)
print(f"contexts        {bank.contexts.tensor.values.shape}  (W, S, M, word_dim), trainable")
print(f"class rows      {bank.class_embeddings.tensor.values.shape}  frozen")

# one sequence = M context rows then the class embedding row
seq = bank.sequence(class_id=2, part_id=1)
print(f"sequence        {seq.values.shape}  (M + 1, word_dim)")
print(f"last row is     class embedding: {np.array_equal(seq.values[-1], class_embeddings[2])}")

# all W * S sequences stacked in class-major order
stacked = bank.all_sequences()
print(f"all sequences   {stacked.values.shape}  row i = (class i // S, part i % S)")

# encode through the frozen text encoder: one feature row per (class, part)
encoder = FrozenTextEncoder(seed=7, word_dim=D, feat_dim=24, num_positions=M + 1)
features = bank.encode(encoder)
print(f"prompt features {features.tensor.values.shape}  source={features.source}")

# only the contexts accumulate gradient; the class embeddings stay frozen
backward(tsum(features.tensor))
ctx_norm = np.linalg.norm(bank.contexts.tensor.grad)
print(f"context grad    {ctx_norm:.4f}")
print(f"frozen param    marked frozen: {bank.class_embeddings.frozen}")

# manual mode skips the bank entirely: fixed features, nothing to train
fixed = manual_features(rng.standard_normal((W, S, 24)))
print(f"manual features {fixed.tensor.values.shape}  source={fixed.source}")
print(f"manual grads    requires_grad={fixed.tensor.requires_grad}")
