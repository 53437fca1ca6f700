"""Parse tab-separated dataset directories into KnowledgeBase structures.

Expected layout (one triple per line, UTF-8, tab-separated):
    rel_triples_1, rel_triples_2    head \\t relation \\t tail
    attr_triples_1, attr_triples_2  entity \\t attribute \\t literal
    reference_alignment             kb1_entity \\t kb2_entity
    translated_labels (optional)    kb1_entity \\t translated label

Attribute literals are abstracted to range types at load time; an optional
raw-literal sidecar is kept only when label lookups need it.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .kb import IdTable, KnowledgeBase, RangeType
from . import serialize

logger = logging.getLogger(__name__)

MALFORMED_LINE_LIMIT = 0.10


@dataclass
class RangeRule:
    range_type: RangeType
    pattern: re.Pattern


# Ordered rule table; first match wins, String is the fallback. The datetime
# lexical space is ISO-8601 date / datetime (documented in the README).
DEFAULT_RANGE_RULES: list[RangeRule] = [
    RangeRule(RangeType.INTEGER, re.compile(r"[+-]?\d+")),
    RangeRule(
        RangeType.DOUBLE,
        re.compile(r"[+-]?(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-]?\d+[eE][+-]?\d+"),
    ),
    RangeRule(
        RangeType.DATETIME,
        re.compile(
            r"\d{4}-\d{2}-\d{2}"
            r"(?:[Tt ]\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:[Zz]|[+-]\d{2}:\d{2})?)?"
        ),
    ),
]


def abstract_attribute_value(
    literal: str, rules: list[RangeRule] | None = None
) -> RangeType:
    """Map an attribute literal to its abstract range type (total function)."""
    text = literal.strip()
    for rule in DEFAULT_RANGE_RULES if rules is None else rules:
        if rule.pattern.fullmatch(text):
            return rule.range_type
    return RangeType.STRING


@dataclass
class DatasetLayout:
    rel_triples_1: Path
    rel_triples_2: Path
    attr_triples_1: Path
    attr_triples_2: Path
    reference_alignment: Path
    translated_labels: Path | None = None

    @classmethod
    def from_dir(cls, directory: str | Path) -> "DatasetLayout":
        d = Path(directory)
        translated = d / "translated_labels"
        layout = cls(
            rel_triples_1=d / "rel_triples_1",
            rel_triples_2=d / "rel_triples_2",
            attr_triples_1=d / "attr_triples_1",
            attr_triples_2=d / "attr_triples_2",
            reference_alignment=d / "reference_alignment",
            translated_labels=translated if translated.exists() else None,
        )
        layout.validate()
        return layout

    def validate(self) -> None:
        required = [
            self.rel_triples_1,
            self.rel_triples_2,
            self.attr_triples_1,
            self.attr_triples_2,
            self.reference_alignment,
        ]
        for path in required:
            if not path.exists():
                raise DataError(f"dataset file missing: {path}")
        for path in [self.rel_triples_1, self.rel_triples_2]:
            if path.stat().st_size == 0:
                raise DataError(f"dataset file empty: {path}")


def _parse_lines(path: str | Path, n_fields: int, fmt: str = "tsv") -> list[tuple]:
    """Read n_fields-column lines, collapsing duplicates, skipping malformed.

    Raises once malformed lines exceed MALFORMED_LINE_LIMIT of the file.
    """
    rows: list[tuple] = []
    seen: set[tuple] = set()
    malformed = 0
    total = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            total += 1
            if fmt == "jsonl":
                try:
                    parts = tuple(json.loads(line))
                except (json.JSONDecodeError, TypeError):
                    parts = ()
            else:
                parts = tuple(line.split("\t"))
            if len(parts) != n_fields or not all(isinstance(p, str) for p in parts):
                malformed += 1
                logger.warning("%s:%d: expected %d fields, skipped", path, lineno, n_fields)
                continue
            if parts not in seen:
                seen.add(parts)
                rows.append(parts)
    if total and malformed / total > MALFORMED_LINE_LIMIT:
        raise DataError(
            f"{path}: {malformed}/{total} malformed lines exceeds "
            f"{MALFORMED_LINE_LIMIT:.0%} limit"
        )
    return rows


def load_relationship_triples(path: str | Path, fmt: str = "tsv") -> list[tuple]:
    return _parse_lines(path, 3, fmt)


def load_attribute_triples(path: str | Path, fmt: str = "tsv") -> list[tuple]:
    return _parse_lines(path, 3, fmt)


def load_pairs(path: str | Path, fmt: str = "tsv") -> list[tuple]:
    return _parse_lines(path, 2, fmt)


def load_labels(path: str | Path, fmt: str = "tsv") -> dict[str, str]:
    return {iri: label for iri, label in _parse_lines(path, 2, fmt)}


def _build_kb(
    kb_id: int,
    rel_rows: list[tuple],
    attr_rows: list[tuple],
    rules: list[RangeRule] | None,
) -> KnowledgeBase:
    entities = IdTable()
    relationships = IdTable()
    attributes = IdTable()
    rel_triples = np.asarray(
        [
            (entities.intern(h), relationships.intern(r), entities.intern(t))
            for h, r, t in rel_rows
        ],
        dtype=np.int64,
    ).reshape(-1, 3)
    attr_facts = np.asarray(
        [
            (entities.intern(e), attributes.intern(a), int(abstract_attribute_value(v, rules)))
            for e, a, v in attr_rows
        ],
        dtype=np.int64,
    ).reshape(-1, 3)
    kb = KnowledgeBase(
        kb_id=kb_id,
        entities=entities,
        relationships=relationships,
        attributes=attributes,
        rel_triples=rel_triples,
        attr_facts=attr_facts,
    )
    kb.validate()
    return kb


def load_dataset(
    layout: DatasetLayout,
    fmt: str = "tsv",
    rules: list[RangeRule] | None = None,
) -> tuple[KnowledgeBase, KnowledgeBase, np.ndarray]:
    """Load both KBs plus the reference alignment as an id-pair array.

    Alignment rows whose IRIs are unknown in either KB are dropped with a
    warning.
    """
    layout.validate()
    kb1 = _build_kb(1, load_relationship_triples(layout.rel_triples_1, fmt),
                    load_attribute_triples(layout.attr_triples_1, fmt), rules)
    kb2 = _build_kb(2, load_relationship_triples(layout.rel_triples_2, fmt),
                    load_attribute_triples(layout.attr_triples_2, fmt), rules)
    gold: list[tuple[int, int]] = []
    dropped = 0
    for iri1, iri2 in load_pairs(layout.reference_alignment, fmt):
        id1, id2 = kb1.entities.get(iri1), kb2.entities.get(iri2)
        if id1 is None or id2 is None:
            dropped += 1
            logger.warning("alignment pair (%s, %s) references unknown IRI, dropped", iri1, iri2)
            continue
        gold.append((id1, id2))
    if dropped:
        logger.warning("dropped %d alignment pairs with unknown IRIs", dropped)
    logger.info("\n%s", format_statistics(kb1, kb2))
    return kb1, kb2, np.asarray(gold, dtype=np.int64).reshape(-1, 2)


def format_statistics(kb1: KnowledgeBase, kb2: KnowledgeBase) -> str:
    """Ingestion report: per-KB counts, one row per side."""
    header = f"{'':8s} {'Entities':>10s} {'Relationships':>14s} {'Attributes':>11s} {'Rel. triples':>13s} {'Attr. triples':>14s}"
    rows = [header]
    for kb in (kb1, kb2):
        rows.append(
            f"KB{kb.kb_id:<6d} {kb.n_entities:>10,d} {kb.n_relationships:>14,d} "
            f"{kb.n_attributes:>11,d} {len(kb.rel_triples):>13,d} {len(kb.attr_facts):>14,d}"
        )
    return "\n".join(rows)


def write_cache(
    path: str | Path,
    kb1: KnowledgeBase,
    kb2: KnowledgeBase,
    gold_pairs: np.ndarray,
) -> None:
    """Versioned binary snapshot of the two KBs plus gold pairs."""
    meta = {
        "counts": {
            "kb1": [kb1.n_entities, kb1.n_relationships, kb1.n_attributes],
            "kb2": [kb2.n_entities, kb2.n_relationships, kb2.n_attributes],
        }
    }
    arrays: dict[str, np.ndarray] = {"gold_pairs": np.asarray(gold_pairs, dtype=np.int64)}
    for kb in (kb1, kb2):
        k = f"kb{kb.kb_id}"
        arrays[f"{k}_entities"] = serialize.pack_strings(kb.entities.items)
        arrays[f"{k}_relationships"] = serialize.pack_strings(kb.relationships.items)
        arrays[f"{k}_attributes"] = serialize.pack_strings(kb.attributes.items)
        arrays[f"{k}_rel_triples"] = kb.rel_triples
        arrays[f"{k}_attr_facts"] = kb.attr_facts
    serialize.write_container(path, serialize.CACHE_MAGIC, meta, arrays)


def read_cache(path: str | Path) -> tuple[KnowledgeBase, KnowledgeBase, np.ndarray]:
    meta, arrays = serialize.read_container(path, serialize.CACHE_MAGIC)
    kbs = []
    for kb_id in (1, 2):
        k = f"kb{kb_id}"
        n_e, n_r, n_a = meta["counts"][k]
        kb = KnowledgeBase(
            kb_id=kb_id,
            entities=IdTable.from_items(serialize.unpack_strings(arrays[f"{k}_entities"], n_e)),
            relationships=IdTable.from_items(
                serialize.unpack_strings(arrays[f"{k}_relationships"], n_r)
            ),
            attributes=IdTable.from_items(
                serialize.unpack_strings(arrays[f"{k}_attributes"], n_a)
            ),
            rel_triples=arrays[f"{k}_rel_triples"],
            attr_facts=arrays[f"{k}_attr_facts"],
        )
        kb.validate()
        kbs.append(kb)
    return kbs[0], kbs[1], arrays["gold_pairs"]
