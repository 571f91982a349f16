"""Deterministic synthetic knowledge graph for tests and demos.

Entities sit on a ring; the four relations are translations along it
(+1, +2, +3, -1), so the +2/+3 relations are compositions of the +1 relation
and the -1 relation is its inverse. Translation-based models can represent
this structure exactly, which makes the graph a useful end-to-end fixture.
"""
from __future__ import annotations

import numpy as np

from .graph import TripleSet, Vocabulary

RING_OFFSETS = {"succ": 1, "skip2": 2, "skip3": 3, "pred": -1}


def ring_kg(num_entities: int = 32, seed: int = 0) -> tuple[TripleSet, Vocabulary]:
    """Ring graph over ``num_entities`` with the four offset relations.

    The seed only shuffles triple order (ids are structural), keeping splits
    downstream seed-sensitive.
    """
    if num_entities < 4:
        raise ValueError("need at least 4 entities")
    entity_to_id = {f"e{i}": i for i in range(num_entities)}
    relation_to_id = {name: i for i, name in enumerate(RING_OFFSETS)}

    triples = []
    for r, (_, offset) in enumerate(RING_OFFSETS.items()):
        for i in range(num_entities):
            triples.append((i, r, (i + offset) % num_entities))

    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(triples))
    ts = TripleSet(
        triples=tuple(triples[i] for i in order),
        num_entities=num_entities,
        num_relations_base=len(RING_OFFSETS),
    )
    return ts, Vocabulary(entity_to_id, relation_to_id)


def ring_kg_tsv(num_entities: int = 32, seed: int = 0) -> str:
    """The same graph rendered as TSV text."""
    from .graph import serialize_triples

    ts, vocab = ring_kg(num_entities, seed)
    return serialize_triples(ts, vocab)
