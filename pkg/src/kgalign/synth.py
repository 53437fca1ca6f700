"""Synthetic bilingual-style KB pairs with known ground-truth alignment.

KB1 is a random graph with preferential-attachment degree skew; KB2 is a
relabeled copy with a fraction of its triples dropped or rewired (only KB2
carries noise, mirroring the sparser non-English side). Entities draw their
attribute sets from per-group pools so attribute correlations are learnable,
and every entity participates in at least four relationship triples before
noise. The gold standard is the identity correspondence.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kb import (
    GoldStandard,
    IdTable,
    KnowledgeBase,
    RangeType,
    split_gold,
)

MIN_REL_TRIPLES_PER_ENTITY = 4

_RANGE_CYCLE = [RangeType.INTEGER, RangeType.DOUBLE, RangeType.DATETIME, RangeType.STRING]


@dataclass
class SynthSpec:
    n_entities: int = 1000
    n_relations: int = 16
    n_attributes: int = 120
    triples_per_entity: int = 5
    attribute_pattern_groups: int = 20
    attrs_per_entity: int = 4
    structural_noise: float = 0.05
    seed_fraction: float = 0.3
    rng_seed: int = 0

    def validate(self) -> None:
        if min(self.n_entities, self.n_relations, self.n_attributes) < 1:
            raise ConfigError("entity/relation/attribute counts must be positive")
        if self.triples_per_entity < 1:
            raise ConfigError("triples_per_entity must be >= 1")
        if self.triples_per_entity >= self.n_entities:
            raise ConfigError(
                f"triples_per_entity={self.triples_per_entity} is infeasible for "
                f"{self.n_entities} entities"
            )
        if not 0.0 <= self.structural_noise < 1.0:
            raise ConfigError("structural_noise must lie in [0, 1)")
        if not 0.0 < self.seed_fraction < 1.0:
            raise ConfigError("seed_fraction must lie in (0, 1)")
        if self.attribute_pattern_groups < 1:
            raise ConfigError("attribute_pattern_groups must be >= 1")
        if self.attribute_pattern_groups > self.n_attributes:
            raise ConfigError("more pattern groups than attributes")
        if self.attrs_per_entity < 1:
            raise ConfigError("attrs_per_entity must be >= 1")


def _entity_iri(kb: int, i: int) -> str:
    return f"http://kb{kb}.example.org/entity/e{i:05d}"


def _relation_iri(kb: int, i: int) -> str:
    return f"http://kb{kb}.example.org/rel/r{i:03d}"


def _attribute_iri(kb: int, i: int) -> str:
    return f"http://kb{kb}.example.org/attr/a{i:03d}"


def _random_graph(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Degree-skewed triple set where every entity heads triples_per_entity
    triples and appears in at least MIN_REL_TRIPLES_PER_ENTITY overall."""
    n = spec.n_entities
    used: set[tuple[int, int, int]] = set()
    triples: list[tuple[int, int, int]] = []
    # start the endpoint pool with every entity once so early picks are uniform
    pool: list[int] = list(range(n))
    appearances = np.zeros(n, dtype=np.int64)

    def add(head: int) -> None:
        for _ in range(200):
            tail = pool[int(rng.integers(len(pool)))]
            if tail == head:
                continue
            rel = int(rng.integers(spec.n_relations))
            triple = (head, rel, tail)
            if triple in used:
                continue
            used.add(triple)
            triples.append(triple)
            pool.append(head)
            pool.append(tail)
            appearances[head] += 1
            appearances[tail] += 1
            return
        raise ConfigError("could not place a fresh triple; spec too dense")

    for head in range(n):
        for _ in range(spec.triples_per_entity):
            add(head)
    # top up entities that are still below the minimum appearance count
    for ent in range(n):
        while appearances[ent] < MIN_REL_TRIPLES_PER_ENTITY:
            add(ent)
    return np.asarray(triples, dtype=np.int64)


def _apply_noise(
    triples: np.ndarray, noise: float, n_entities: int, rng: np.random.Generator
) -> np.ndarray:
    """Drop or rewire a fraction of the triples (50/50 per affected triple)."""
    if noise <= 0.0:
        return triples.copy()
    n_affected = int(round(noise * len(triples)))
    affected = rng.choice(len(triples), size=n_affected, replace=False)
    drop_mask = rng.integers(2, size=n_affected) == 0
    out = triples.copy()
    used = set(map(tuple, out.tolist()))
    keep = np.ones(len(triples), dtype=bool)
    for idx, drop in zip(affected.tolist(), drop_mask.tolist()):
        if drop:
            keep[idx] = False
            continue
        h, r, t = out[idx]
        used.discard((int(h), int(r), int(t)))
        for _ in range(50):
            repl = int(rng.integers(n_entities))
            cand = (int(h), int(r), repl) if rng.integers(2) == 0 else (repl, int(r), int(t))
            if cand[0] != cand[2] and cand not in used:
                out[idx] = cand
                used.add(cand)
                break
        else:
            keep[idx] = False
    return out[keep]


def _attribute_assignment(
    spec: SynthSpec, rng: np.random.Generator
) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-entity attribute id sets drawn from the entity's pattern group pool."""
    groups = spec.attribute_pattern_groups
    pools = np.array_split(np.arange(spec.n_attributes), groups)
    entity_group = rng.integers(groups, size=spec.n_entities)
    sets = []
    for ent in range(spec.n_entities):
        pool = pools[entity_group[ent]]
        size = min(spec.attrs_per_entity, len(pool))
        sets.append(np.sort(rng.choice(pool, size=size, replace=False)))
    return sets, entity_group


def _literal_for(range_type: RangeType, rng: np.random.Generator) -> str:
    if range_type == RangeType.INTEGER:
        return str(int(rng.integers(0, 100000)))
    if range_type == RangeType.DOUBLE:
        return f"{rng.random() * 1000.0:.3f}"
    if range_type == RangeType.DATETIME:
        year = 1950 + int(rng.integers(0, 70))
        month = 1 + int(rng.integers(0, 12))
        day = 1 + int(rng.integers(0, 28))
        return f"{year:04d}-{month:02d}-{day:02d}"
    consonants = "bcdfghjklmnpqrstvwxz"
    return "val " + "".join(
        consonants[int(i)] for i in rng.integers(0, len(consonants), size=6)
    )


def generate(spec: SynthSpec) -> tuple[KnowledgeBase, KnowledgeBase, GoldStandard]:
    """Build the KB pair, its attribute facts, and the split gold standard."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence(spec.rng_seed, spawn_key=(1,)))

    triples1 = _random_graph(spec, rng)
    triples2 = _apply_noise(triples1, spec.structural_noise, spec.n_entities, rng)
    attr_sets, _groups = _attribute_assignment(spec, rng)
    attr_ranges = np.asarray(
        [int(_RANGE_CYCLE[i % len(_RANGE_CYCLE)]) for i in range(spec.n_attributes)],
        dtype=np.int64,
    )

    attr_facts = np.asarray(
        [
            (ent, int(attr), attr_ranges[attr])
            for ent in range(spec.n_entities)
            for attr in attr_sets[ent]
        ],
        dtype=np.int64,
    ).reshape(-1, 3)

    kbs = []
    for kb_id, triples in ((1, triples1), (2, triples2)):
        kb = KnowledgeBase(
            kb_id=kb_id,
            entities=IdTable.from_items(
                [_entity_iri(kb_id, i) for i in range(spec.n_entities)]
            ),
            relationships=IdTable.from_items(
                [_relation_iri(kb_id, i) for i in range(spec.n_relations)]
            ),
            attributes=IdTable.from_items(
                [_attribute_iri(kb_id, i) for i in range(spec.n_attributes)]
            ),
            rel_triples=triples,
            attr_facts=attr_facts.copy(),
        )
        kb.validate()
        kbs.append(kb)

    full = np.stack(
        [np.arange(spec.n_entities), np.arange(spec.n_entities)], axis=1
    ).astype(np.int64)
    gold = split_gold(full, spec.seed_fraction, spec.rng_seed)
    return kbs[0], kbs[1], gold


def write_dataset(
    directory: str | Path,
    kb1: KnowledgeBase,
    kb2: KnowledgeBase,
    gold: GoldStandard,
    rng_seed: int | None = None,
) -> None:
    """Emit the tab-separated file layout the ingest module expects.

    Attribute facts are written with concrete literals matching their range
    type, so re-ingestion abstracts them back to the same codes.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lit_rng = np.random.default_rng(0 if rng_seed is None else rng_seed)

    for kb in (kb1, kb2):
        rel_path = directory / f"rel_triples_{kb.kb_id}"
        with open(rel_path, "w", encoding="utf-8") as fh:
            for h, r, t in kb.rel_triples:
                fh.write(
                    f"{kb.entities.resolve(int(h))}\t"
                    f"{kb.relationships.resolve(int(r))}\t"
                    f"{kb.entities.resolve(int(t))}\n"
                )
        attr_path = directory / f"attr_triples_{kb.kb_id}"
        with open(attr_path, "w", encoding="utf-8") as fh:
            for ent, attr, rng_code in kb.attr_facts:
                literal = _literal_for(RangeType(int(rng_code)), lit_rng)
                fh.write(
                    f"{kb.entities.resolve(int(ent))}\t"
                    f"{kb.attributes.resolve(int(attr))}\t{literal}\n"
                )
    with open(directory / "reference_alignment", "w", encoding="utf-8") as fh:
        for e1, e2 in gold.full:
            fh.write(
                f"{kb1.entities.resolve(int(e1))}\t{kb2.entities.resolve(int(e2))}\n"
            )
