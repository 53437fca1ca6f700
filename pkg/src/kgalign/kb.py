"""Core domain model: two knowledge bases, seed alignment, unified index.

A knowledge base keeps entities, relationships and attributes interned to
dense integer ids. Seed entity/property pairs bridge two KBs by mapping both
members of a pair onto one shared embedding slot, so "sharing the same
representation" holds by construction instead of via an equality penalty.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


class RangeType(enum.IntEnum):
    """Abstract range of an attribute value. String is the fallback."""

    INTEGER = 0
    DOUBLE = 1
    DATETIME = 2
    STRING = 3


class IdTable:
    """Interning table: IRI string -> dense index, first occurrence wins."""

    def __init__(self) -> None:
        self._index: dict[str, int] = {}
        self._items: list[str] = []

    def intern(self, iri: str) -> int:
        idx = self._index.get(iri)
        if idx is None:
            idx = len(self._items)
            self._index[iri] = idx
            self._items.append(iri)
        return idx

    def get(self, iri: str) -> int | None:
        return self._index.get(iri)

    def resolve(self, idx: int) -> str:
        return self._items[idx]

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, iri: str) -> bool:
        return iri in self._index

    @property
    def items(self) -> list[str]:
        return self._items

    @classmethod
    def from_items(cls, items: list[str]) -> "IdTable":
        table = cls()
        for iri in items:
            table.intern(iri)
        if len(table) != len(items):
            raise DataError("id table items are not unique")
        return table


@dataclass
class KnowledgeBase:
    """One KB: interned id tables plus integer-coded triples.

    rel_triples is an (n, 3) int array of (head, rel, tail) entity/relationship
    ids; attr_facts is an (m, 3) int array of (entity, attribute, range-type)
    with the literal already abstracted away.
    """

    kb_id: int
    entities: IdTable
    relationships: IdTable
    attributes: IdTable
    rel_triples: np.ndarray
    attr_facts: np.ndarray

    def __post_init__(self) -> None:
        self.rel_triples = np.asarray(self.rel_triples, dtype=np.int64).reshape(-1, 3)
        self.attr_facts = np.asarray(self.attr_facts, dtype=np.int64).reshape(-1, 3)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relationships(self) -> int:
        return len(self.relationships)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def validate(self) -> None:
        if self.rel_triples.size:
            heads, rels, tails = self.rel_triples.T
            if heads.min() < 0 or heads.max() >= self.n_entities:
                raise DataError(f"KB{self.kb_id}: head id out of bounds")
            if tails.min() < 0 or tails.max() >= self.n_entities:
                raise DataError(f"KB{self.kb_id}: tail id out of bounds")
            if rels.min() < 0 or rels.max() >= self.n_relationships:
                raise DataError(f"KB{self.kb_id}: relationship id out of bounds")
        if self.attr_facts.size:
            ents, attrs, ranges = self.attr_facts.T
            if ents.min() < 0 or ents.max() >= self.n_entities:
                raise DataError(f"KB{self.kb_id}: attribute-fact entity id out of bounds")
            if attrs.min() < 0 or attrs.max() >= self.n_attributes:
                raise DataError(f"KB{self.kb_id}: attribute id out of bounds")
            if ranges.min() < 0 or ranges.max() > max(RangeType):
                raise DataError(f"KB{self.kb_id}: unknown range type code")
        seen = set(map(tuple, self.rel_triples))
        if len(seen) != len(self.rel_triples):
            raise DataError(f"KB{self.kb_id}: duplicate relationship triples")

    def rel_connected_mask(self) -> np.ndarray:
        """Entities that occur in at least one relationship triple.

        Attribute-only entities are retained in the KB but never receive
        structure-embedding gradients; this mask is the flag for them.
        """
        mask = np.zeros(self.n_entities, dtype=bool)
        if self.rel_triples.size:
            mask[self.rel_triples[:, 0]] = True
            mask[self.rel_triples[:, 2]] = True
        return mask

    def has_attributes_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_entities, dtype=bool)
        if self.attr_facts.size:
            mask[self.attr_facts[:, 0]] = True
        return mask

    def entity_attribute_sets(self) -> list[np.ndarray]:
        """Per-entity sorted arrays of distinct attribute ids."""
        sets: list[list[int]] = [[] for _ in range(self.n_entities)]
        for ent, attr, _rng in self.attr_facts:
            sets[ent].append(int(attr))
        return [np.unique(np.asarray(s, dtype=np.int64)) for s in sets]


@dataclass
class SeedAlignment:
    """Pre-aligned (KB1, KB2) id pairs: entities, relationships, attributes."""

    entity_pairs: np.ndarray
    rel_pairs: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    attr_pairs: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))

    def __post_init__(self) -> None:
        self.entity_pairs = np.asarray(self.entity_pairs, dtype=np.int64).reshape(-1, 2)
        self.rel_pairs = np.asarray(self.rel_pairs, dtype=np.int64).reshape(-1, 2)
        self.attr_pairs = np.asarray(self.attr_pairs, dtype=np.int64).reshape(-1, 2)

    def validate(self, kb1: KnowledgeBase, kb2: KnowledgeBase) -> None:
        _check_pairs(self.entity_pairs, kb1.n_entities, kb2.n_entities, "entity")
        _check_pairs(self.rel_pairs, kb1.n_relationships, kb2.n_relationships, "relationship")
        _check_pairs(self.attr_pairs, kb1.n_attributes, kb2.n_attributes, "attribute")


def _check_pairs(pairs: np.ndarray, n1: int, n2: int, kind: str) -> None:
    if pairs.size == 0:
        return
    left, right = pairs.T
    if left.min() < 0 or left.max() >= n1:
        raise DataError(f"seed {kind} pair references unknown KB1 id")
    if right.min() < 0 or right.max() >= n2:
        raise DataError(f"seed {kind} pair references unknown KB2 id")
    for side, col in (("KB1", left), ("KB2", right)):
        values, counts = np.unique(col, return_counts=True)
        dup = values[counts > 1]
        if dup.size:
            offender = pairs[col == dup[0]]
            raise DataError(
                f"seed {kind} pairs are not injective on the {side} side: "
                f"id {int(dup[0])} appears in pairs {offender.tolist()}"
            )


@dataclass
class GoldStandard:
    """Full reference alignment with a recorded seed/test partition."""

    full: np.ndarray
    seed: np.ndarray
    test: np.ndarray
    seed_fraction: float
    rng_seed: int

    def __post_init__(self) -> None:
        self.full = np.asarray(self.full, dtype=np.int64).reshape(-1, 2)
        self.seed = np.asarray(self.seed, dtype=np.int64).reshape(-1, 2)
        self.test = np.asarray(self.test, dtype=np.int64).reshape(-1, 2)


def split_gold(full: np.ndarray, p: float, rng_seed: int) -> GoldStandard:
    """Partition the reference alignment into seed (fraction p) and test pairs.

    Deterministic for a fixed rng_seed; len(seed) = round(p * len(full)).
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"seed fraction must lie in (0, 1), got {p}")
    full = np.asarray(full, dtype=np.int64).reshape(-1, 2)
    n_seed = int(round(p * len(full)))
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(full))
    seed_idx = np.sort(order[:n_seed])
    test_idx = np.sort(order[n_seed:])
    return GoldStandard(
        full=full,
        seed=full[seed_idx],
        test=full[test_idx],
        seed_fraction=p,
        rng_seed=rng_seed,
    )


def _local_name(iri: str) -> str:
    """Strip namespace prefix: everything up to the last '#' or '/'."""
    cut = max(iri.rfind("#"), iri.rfind("/"))
    return iri[cut + 1 :] if cut >= 0 else iri


def match_property_pairs(table1: IdTable, table2: IdTable) -> np.ndarray:
    """Pairs of property ids whose normalized labels match exactly.

    Normalization lowercases the namespace-stripped local name. Labels that
    are ambiguous (shared by several properties on either side) are skipped
    so the result stays injective.
    """

    def buckets(table: IdTable) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for idx, iri in enumerate(table.items):
            out.setdefault(_local_name(iri).lower(), []).append(idx)
        return out

    b1, b2 = buckets(table1), buckets(table2)
    pairs = [
        (ids1[0], b2[label][0])
        for label, ids1 in b1.items()
        if len(ids1) == 1 and len(b2.get(label, ())) == 1
    ]
    pairs.sort()
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def build_seed_alignment(
    kb1: KnowledgeBase, kb2: KnowledgeBase, entity_pairs: np.ndarray
) -> SeedAlignment:
    """Seed alignment from given entity pairs plus label-matched property pairs."""
    seeds = SeedAlignment(
        entity_pairs=entity_pairs,
        rel_pairs=match_property_pairs(kb1.relationships, kb2.relationships),
        attr_pairs=match_property_pairs(kb1.attributes, kb2.attributes),
    )
    seeds.validate(kb1, kb2)
    return seeds


@dataclass
class UnifiedIndex:
    """Shared slot space for two KBs.

    Seed pairs occupy one slot; everything else gets its own. KB1 ids keep
    their value as slot, KB2 ids map through the *_slot_2 arrays.
    """

    n_entity_slots: int
    ent_slot_1: np.ndarray
    ent_slot_2: np.ndarray
    n_rel_slots: int
    rel_slot_1: np.ndarray
    rel_slot_2: np.ndarray
    n_attr_slots: int
    attr_slot_1: np.ndarray
    attr_slot_2: np.ndarray

    def entity_slots(self, kb_id: int, ids: np.ndarray) -> np.ndarray:
        table = self.ent_slot_1 if kb_id == 1 else self.ent_slot_2
        return table[ids]


def _unify(n1: int, n2: int, pairs: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    slot_1 = np.arange(n1, dtype=np.int64)
    slot_2 = np.full(n2, -1, dtype=np.int64)
    for left, right in pairs:
        slot_2[right] = slot_1[left]
    fresh = np.flatnonzero(slot_2 < 0)
    slot_2[fresh] = n1 + np.arange(len(fresh))
    return n1 + len(fresh), slot_1, slot_2


def merge_for_training(
    kb1: KnowledgeBase,
    kb2: KnowledgeBase,
    seeds: SeedAlignment,
    unify_properties: bool = True,
) -> UnifiedIndex:
    """Build the unified slot space where each seed pair shares one slot.

    Entity slot count is n1 + n2 - len(entity_pairs). With unify_properties
    false, seed property pairs keep separate slots (config alternative).
    """
    seeds.validate(kb1, kb2)
    empty = np.empty((0, 2), dtype=np.int64)
    n_e, e1, e2 = _unify(kb1.n_entities, kb2.n_entities, seeds.entity_pairs)
    n_r, r1, r2 = _unify(
        kb1.n_relationships,
        kb2.n_relationships,
        seeds.rel_pairs if unify_properties else empty,
    )
    n_a, a1, a2 = _unify(
        kb1.n_attributes,
        kb2.n_attributes,
        seeds.attr_pairs if unify_properties else empty,
    )
    return UnifiedIndex(
        n_entity_slots=n_e,
        ent_slot_1=e1,
        ent_slot_2=e2,
        n_rel_slots=n_r,
        rel_slot_1=r1,
        rel_slot_2=r2,
        n_attr_slots=n_a,
        attr_slot_1=a1,
        attr_slot_2=a2,
    )


def pooled_training_triples(
    kb1: KnowledgeBase, kb2: KnowledgeBase, unified: UnifiedIndex
) -> tuple[np.ndarray, np.ndarray]:
    """Union of both KBs' triples in slot space, with KB provenance.

    Seed sharing can make a KB1 and a KB2 triple coincide in slot space;
    such duplicates collapse (the objective sums over the set of positives).
    Returns (triples[n, 3], kb_id[n]).
    """

    def to_slots(kb: KnowledgeBase, ent_map: np.ndarray, rel_map: np.ndarray) -> np.ndarray:
        if not kb.rel_triples.size:
            return np.empty((0, 3), dtype=np.int64)
        out = np.empty_like(kb.rel_triples)
        out[:, 0] = ent_map[kb.rel_triples[:, 0]]
        out[:, 1] = rel_map[kb.rel_triples[:, 1]]
        out[:, 2] = ent_map[kb.rel_triples[:, 2]]
        return out

    t1 = to_slots(kb1, unified.ent_slot_1, unified.rel_slot_1)
    t2 = to_slots(kb2, unified.ent_slot_2, unified.rel_slot_2)
    triples = np.concatenate([t1, t2])
    kb_ids = np.concatenate(
        [np.ones(len(t1), dtype=np.int64), np.full(len(t2), 2, dtype=np.int64)]
    )
    _, keep = np.unique(triples, axis=0, return_index=True)
    keep.sort()
    return triples[keep], kb_ids[keep]
