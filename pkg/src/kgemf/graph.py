"""Triple storage, label vocabularies, dataset splitting, and inverse-relation augmentation.

All types here are frozen after construction and safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlreadyAugmented,
    EmptyDataset,
    InfeasibleSplit,
    MalformedLine,
)


@dataclass(frozen=True)
class Vocabulary:
    """Bijective label <-> dense integer id maps for entities and relations."""

    entity_to_id: dict[str, int]
    relation_to_id: dict[str, int]

    @property
    def num_entities(self) -> int:
        return len(self.entity_to_id)

    @property
    def num_relations(self) -> int:
        return len(self.relation_to_id)

    def entity_labels(self) -> list[str]:
        inv = {i: lbl for lbl, i in self.entity_to_id.items()}
        return [inv[i] for i in range(len(inv))]

    def relation_labels(self) -> list[str]:
        inv = {i: lbl for lbl, i in self.relation_to_id.items()}
        return [inv[i] for i in range(len(inv))]


@dataclass(frozen=True)
class TripleSet:
    """An ordered, duplicate-free list of (h, r, t) integer triples.

    ``num_relations_base`` is the relation count before inverse augmentation;
    after ``add_inverse_relations`` the live relation id range is
    ``[0, 2 * num_relations_base)``.
    """

    triples: tuple[tuple[int, int, int], ...]
    num_entities: int
    num_relations_base: int
    inverses_added: bool = False

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def num_relations(self) -> int:
        return 2 * self.num_relations_base if self.inverses_added else self.num_relations_base

    def as_array(self) -> np.ndarray:
        if not self.triples:
            return np.empty((0, 3), dtype=np.int64)
        return np.asarray(self.triples, dtype=np.int64)


@dataclass(frozen=True)
class DatasetSplits:
    """Train/validation/test partition over a shared vocabulary."""

    train: TripleSet
    validation: TripleSet
    test: TripleSet
    vocabulary: Vocabulary | None = field(default=None)


def parse_triples(text: str) -> tuple[TripleSet, Vocabulary, int]:
    """Parse TSV content (``head<TAB>relation<TAB>tail`` per line).

    Ids are assigned in order of first appearance. Returns the triple set, the
    vocabulary, and the number of duplicate lines that were dropped.
    """
    entity_to_id: dict[str, int] = {}
    relation_to_id: dict[str, int] = {}
    triples: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    num_duplicates = 0

    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\r").split("\t")
        if len(fields) != 3:
            raise MalformedLine(lineno, f"expected 3 tab-separated fields, got {len(fields)}")
        head, rel, tail = fields
        h = entity_to_id.setdefault(head, len(entity_to_id))
        r = relation_to_id.setdefault(rel, len(relation_to_id))
        t = entity_to_id.setdefault(tail, len(entity_to_id))
        triple = (h, r, t)
        if triple in seen:
            num_duplicates += 1
            continue
        seen.add(triple)
        triples.append(triple)

    if not triples:
        raise EmptyDataset("no triples found in input")

    ts = TripleSet(
        triples=tuple(triples),
        num_entities=len(entity_to_id),
        num_relations_base=len(relation_to_id),
    )
    return ts, Vocabulary(entity_to_id, relation_to_id), num_duplicates


def serialize_triples(ts: TripleSet, vocab: Vocabulary) -> str:
    """Inverse of parse_triples: one TSV line per triple, trailing newline."""
    ents = vocab.entity_labels()
    rels = vocab.relation_labels()
    lines = [f"{ents[h]}\t{rels[r]}\t{ents[t]}" for h, r, t in ts.triples]
    return "\n".join(lines) + "\n"


def random_split(
    ts: TripleSet,
    ratios: tuple[float, float, float],
    seed: int,
) -> DatasetSplits:
    """Randomly partition into train/validation/test.

    After the random assignment, triples are moved from validation/test into
    train (never the reverse) until every entity and relation id occurs in
    train. Deterministic in ``seed``.
    """
    if len(ts) == 0:
        raise EmptyDataset("cannot split an empty triple set")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")

    n = len(ts)
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)

    n_train = int(round(ratios[0] * n))
    n_valid = int(round(ratios[1] * n))
    n_train = min(n_train, n)
    n_valid = min(n_valid, n - n_train)

    train_idx = list(order[:n_train])
    valid_idx = list(order[n_train : n_train + n_valid])
    test_idx = list(order[n_train + n_valid :])

    if ratios[0] == 0.0 and (ts.num_entities > 0 or ts.num_relations > 0):
        raise InfeasibleSplit("train ratio is 0 but train must cover all entities and relations")

    # Coverage repair: pull the minimal number of held-out triples into train
    # so that every entity and relation appears there.
    triples = ts.triples

    def covered(idx_list):
        ents: set[int] = set()
        rels: set[int] = set()
        for i in idx_list:
            h, r, t = triples[i]
            ents.add(h)
            ents.add(t)
            rels.add(r)
        return ents, rels

    train_ents, train_rels = covered(train_idx)
    all_ents = set(range(ts.num_entities))
    all_rels = {r for _, r, _ in triples}

    for pool in (valid_idx, test_idx):
        missing_e = all_ents - train_ents
        missing_r = all_rels - train_rels
        if not missing_e and not missing_r:
            break
        keep = []
        for i in pool:
            h, r, t = triples[i]
            if h in missing_e or t in missing_e or r in missing_r:
                train_idx.append(i)
                train_ents.update((h, t))
                train_rels.add(r)
                missing_e = all_ents - train_ents
                missing_r = all_rels - train_rels
            else:
                keep.append(i)
        pool[:] = keep

    if (all_ents - train_ents) or (all_rels - train_rels):
        raise InfeasibleSplit("could not cover all entities/relations in train")

    def subset(idx_list) -> TripleSet:
        return TripleSet(
            triples=tuple(triples[i] for i in sorted(idx_list)),
            num_entities=ts.num_entities,
            num_relations_base=ts.num_relations_base,
            inverses_added=ts.inverses_added,
        )

    return DatasetSplits(
        train=subset(train_idx),
        validation=subset(valid_idx),
        test=subset(test_idx),
    )


def add_inverse_relations(ts: TripleSet) -> TripleSet:
    """For each (h, r, t) add (t, r + |R|, h); doubles the relation count."""
    if ts.inverses_added:
        raise AlreadyAugmented("inverse relations were already added")
    nr = ts.num_relations_base
    inverse = tuple((t, r + nr, h) for h, r, t in ts.triples)
    return TripleSet(
        triples=ts.triples + inverse,
        num_entities=ts.num_entities,
        num_relations_base=nr,
        inverses_added=True,
    )
