"""Cross-relationship prediction heads over frozen encoders.

Layout:
    numerics   tensor autodiff core, layers, optimizer, gradient checking
    encoders   deterministic frozen text/image encoder stubs, feature files
    prompts    learnable multi-part prompt bank
    attention  token-to-part attention pooling
    heads      aligning, per-part cosine, relation-matrix and MLP heads
    data       synthetic fine-grained benchmark generator and dataset files
    harness    training, evaluation, comparisons, sweeps, analyses
    cli        the xrhead command line front end
"""

from . import attention, container, data, encoders, errors, harness, heads, numerics, prompts, report

__all__ = [
    "attention",
    "container",
    "data",
    "encoders",
    "errors",
    "harness",
    "heads",
    "numerics",
    "prompts",
    "report",
]
__version__ = "0.1.0"
