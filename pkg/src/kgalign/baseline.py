"""Translated-label string baseline for the rank-combination study.

Machine translation stays out of process: translated labels arrive as a
two-column file. Ranking uses max-length-normalized Levenshtein similarity
with the same tie-break and aggregation as the embedding evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluation import HITS_KS_DEFAULT, AlignmentResult, aggregate_ranks
from .errors import DataError


def levenshtein(a: str, b: str) -> int:
    """Minimal insert/delete/substitute count over Unicode code points."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    curr = [0] * (len(b) + 1)
    for i, ch_a in enumerate(a):
        curr[0] = i + 1
        for j, ch_b in enumerate(b):
            cost = 0 if ch_a == ch_b else 1
            curr[j + 1] = min(curr[j] + 1, prev[j + 1] + 1, prev[j] + cost)
        prev, curr = curr, prev
    return prev[len(b)]


def label_similarity(a: str, b: str) -> float:
    """1 - lev(a, b) / max(|a|, |b|); defined as 0 when both are empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return 1.0 - levenshtein(a, b) / longest


@dataclass
class LabelTable:
    """Entity labels per KB plus translated labels for the source side."""

    labels_1: dict[int, str] = field(default_factory=dict)
    labels_2: dict[int, str] = field(default_factory=dict)
    translated_1: dict[int, str] = field(default_factory=dict)
    translated_2: dict[int, str] = field(default_factory=dict)

    def validate(self) -> None:
        for name, table in (
            ("labels_1", self.labels_1),
            ("labels_2", self.labels_2),
            ("translated_1", self.translated_1),
            ("translated_2", self.translated_2),
        ):
            for ent, label in table.items():
                if not label:
                    raise DataError(f"{name}: empty label for entity {ent}")


def string_rank(
    labels: LabelTable,
    test_pairs: np.ndarray,
    direction: str = "1to2",
    hits_ks: tuple[int, ...] = HITS_KS_DEFAULT,
) -> AlignmentResult:
    """Rank targets by similarity between translated source and target labels.

    Source entities without a translated label are excluded and counted;
    targets without a label compare as empty strings.
    """
    test_pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    if direction == "1to2":
        src_ids, dst_ids = test_pairs[:, 0], test_pairs[:, 1]
        translated, target_labels = labels.translated_1, labels.labels_2
    elif direction == "2to1":
        src_ids, dst_ids = test_pairs[:, 1], test_pairs[:, 0]
        translated, target_labels = labels.translated_2, labels.labels_1
    else:
        raise DataError(f"unknown direction {direction!r}")

    cand_ids = np.unique(dst_ids)
    cand_labels = [target_labels.get(int(c), "") for c in cand_ids]

    ranks = []
    kept_sources = []
    n_excluded = 0
    for src, true_id in zip(src_ids.tolist(), dst_ids.tolist()):
        source_label = translated.get(src)
        if source_label is None:
            n_excluded += 1
            continue
        scores = np.asarray(
            [label_similarity(source_label, cl) for cl in cand_labels]
        )
        pos = int(np.searchsorted(cand_ids, true_id))
        true_score = scores[pos]
        better = int((scores > true_score).sum())
        tied_before = int(((scores == true_score) & (cand_ids < true_id)).sum())
        ranks.append(1 + better + tied_before)
        kept_sources.append(src)
    return aggregate_ranks(
        np.asarray(ranks, dtype=np.int64),
        direction,
        hits_ks,
        n_excluded,
        source_ids=np.asarray(kept_sources, dtype=np.int64),
    )
