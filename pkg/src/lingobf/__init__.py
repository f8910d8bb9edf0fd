"""Toolkit for reasoning-equivariant obfuscation of linguistics puzzle corpora.

The pipeline: annotated problems + per-problem permutation rulesets go in,
deterministically obfuscated problem variants come out, model prompts are
built from the variants, responses are collected and exact-match scored,
and the score tensor is aggregated into original/obfuscated/robust metrics
with bootstrap distributions and a resourcedness regression on top.
"""

__version__ = "0.1.0"

from .rulesets import (
    PermutationMap,
    Ruleset,
    count_permutations,
    invert,
    load_ruleset,
    sample_distinct,
    sample_permutation,
    validate_ruleset,
)

__all__ = [
    "PermutationMap",
    "Ruleset",
    "count_permutations",
    "invert",
    "load_ruleset",
    "sample_distinct",
    "sample_permutation",
    "validate_ruleset",
    "__version__",
]
