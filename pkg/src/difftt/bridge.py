"""Expected-embedding coupling between the translator and the classifier.

Each per-step vocabulary distribution p is turned into a convex combination of
the classifier's embedding rows, p @ E, so the classifier can consume the
translation without an argmax and gradients flow both into p (hence the
translator) and into E.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .mt import SoftTranslation

SIMPLEX_TOL = 1e-9


def _check_simplex(p: np.ndarray):
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL) or np.any(p < -SIMPLEX_TOL):
        raise ValueError(
            f"distribution is off the probability simplex beyond {SIMPLEX_TOL:g} "
            f"(sum range [{sums.min():.12f}, {sums.max():.12f}], min entry {p.min():.3g})"
        )


@dataclass
class ExpectedEmbeddingSequence:
    """The bridge output: one expected embedding per translation step."""
    embeddings: Tensor          # (m, d)
    source: SoftTranslation
    length: int


def expected_embedding(p: Tensor, emb_matrix: Tensor) -> Tensor:
    """p (V,) on the simplex, emb_matrix (V, d) -> p @ E, exactly."""
    if p.data.shape[-1] != emb_matrix.data.shape[0]:
        raise ShapeError(
            f"expected_embedding: distribution {p.data.shape} does not match "
            f"embedding matrix {emb_matrix.data.shape}"
        )
    _check_simplex(p.data)
    return ad.matmul(p, emb_matrix)


def bridge_sequence(st: SoftTranslation, tc_model) -> ExpectedEmbeddingSequence:
    """Apply the expected-embedding map to every step of a soft translation."""
    emb = expected_embedding(st.probs, tc_model.emb.tensor)
    return ExpectedEmbeddingSequence(embeddings=emb, source=st, length=len(st))
