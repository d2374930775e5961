"""Exploration over large embedded action sets with von Mises-Fisher sampling.

The package compares vMF exploration (perturb the state with a vMF draw, act
on the nearest neighbour) with Boltzmann exploration over all actions or over
the closest few, and provides the numerics, samplers, indexes, large-n
approximations and Monte Carlo harness needed to do so.
"""

from __future__ import annotations

from .errors import (
    ConcentrationOverflowError,
    DegenerateSetError,
    DegenerateTangentError,
    DomainError,
    NotFoundError,
    ParseError,
)
from .estimate import ProbabilityEstimate
from .index import EmbeddingSet, NeighborResult, build_approx, build_exact, nearest, recall_at_k, top_k
from .sphere import RandomSource, UnitVector, sample_uniform_sphere
from .vmf import VmfParams, sample, sample_batch

__version__ = "0.1.0"

__all__ = [
    "ConcentrationOverflowError",
    "DegenerateSetError",
    "DegenerateTangentError",
    "DomainError",
    "NotFoundError",
    "ParseError",
    "ProbabilityEstimate",
    "EmbeddingSet",
    "NeighborResult",
    "build_approx",
    "build_exact",
    "nearest",
    "recall_at_k",
    "top_k",
    "RandomSource",
    "UnitVector",
    "sample_uniform_sphere",
    "VmfParams",
    "sample",
    "sample_batch",
]
