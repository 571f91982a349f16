"""Uniform negative sampler for sLCWA training.

No filtering against known positives is performed (false negatives are
tolerated), and the replacement entity may equal the original: both keep the
corruption distribution exactly uniform over the entity set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewEntities

HEAD, TAIL = 0, 1


@dataclass
class NegativeBatch:
    """k corrupted triples per positive, flattened to shape (batch * k, 3)."""

    triples: np.ndarray  # (batch * k, 3) int64
    corruption_side: np.ndarray  # (batch * k,), HEAD or TAIL
    num_negatives: int  # k

    def per_positive(self, batch_size: int) -> np.ndarray:
        return self.triples.reshape(batch_size, self.num_negatives, 3)


def uniform_sample(
    batch,
    k: int,
    num_entities: int,
    seed: int | np.random.Generator,
    mode: str = "both",
) -> NegativeBatch:
    """Corrupt each positive k times with a uniformly drawn entity.

    mode selects the corrupted slot: "head", "tail", or "both" (even split by
    alternating over the flattened negative index). Deterministic in seed.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if num_entities < 2:
        raise TooFewEntities("need at least 2 entities to corrupt")
    if mode not in ("head", "tail", "both"):
        raise ValueError(f"unknown corruption mode {mode!r}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    pos = np.asarray([(h, r, t) for h, r, t in batch], dtype=np.int64).reshape(-1, 3)
    n = pos.shape[0] * k
    negs = np.repeat(pos, k, axis=0)

    if mode == "head":
        sides = np.full(n, HEAD, dtype=np.int64)
    elif mode == "tail":
        sides = np.full(n, TAIL, dtype=np.int64)
    else:
        sides = np.arange(n, dtype=np.int64) % 2

    replacements = rng.integers(0, num_entities, size=n)
    if n:
        negs[sides == HEAD, 0] = replacements[sides == HEAD]
        negs[sides == TAIL, 2] = replacements[sides == TAIL]
    return NegativeBatch(triples=negs, corruption_side=sides, num_negatives=k)
