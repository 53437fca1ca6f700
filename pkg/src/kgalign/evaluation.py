"""Nearest-neighbor alignment search with Hits@k / mean-rank aggregation.

Candidates for a source test entity are the test-side entities of the other
KB (full-KB pool behind a flag), scored by embedding dot product. Ties break
by ascending target id, making ranks a deterministic total order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

HITS_KS_DEFAULT = (1, 10, 50)


@dataclass
class AlignmentResult:
    direction: str
    ranks: np.ndarray
    hits_at: dict[int, float]
    mean_rank: float
    n_evaluated: int
    n_excluded: int = 0
    source_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def aggregate_ranks(
    ranks: np.ndarray,
    direction: str,
    hits_ks: tuple[int, ...] = HITS_KS_DEFAULT,
    n_excluded: int = 0,
    source_ids: np.ndarray | None = None,
) -> AlignmentResult:
    """Hits@k percentages and mean rank from 1-based true-target ranks."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size and ranks.min() < 1:
        raise DataError("ranks must be 1-based")
    hits = {
        k: (100.0 * float((ranks <= k).sum()) / len(ranks)) if len(ranks) else 0.0
        for k in hits_ks
    }
    mean = float(ranks.mean()) if len(ranks) else float("nan")
    return AlignmentResult(
        direction=direction,
        ranks=ranks,
        hits_at=hits,
        mean_rank=mean,
        n_evaluated=len(ranks),
        n_excluded=n_excluded,
        source_ids=source_ids if source_ids is not None else np.empty(0, dtype=np.int64),
    )


def rank_of_true(
    scores: np.ndarray, candidate_ids: np.ndarray, true_id: int
) -> int:
    """1-based rank of true_id among candidates sorted by descending score.

    Ties resolve toward the smaller candidate id.
    """
    pos = np.flatnonzero(candidate_ids == true_id)
    if len(pos) != 1:
        raise DataError(f"true target {true_id} not uniquely in the candidate pool")
    true_score = scores[pos[0]]
    better = int((scores > true_score).sum())
    tied_before = int(((scores == true_score) & (candidate_ids < true_id)).sum())
    return 1 + better + tied_before


def rank_targets(
    e1: np.ndarray,
    e2: np.ndarray,
    test_pairs: np.ndarray,
    direction: str = "1to2",
    hits_ks: tuple[int, ...] = HITS_KS_DEFAULT,
    candidate_pool: str = "test",
    block_rows: int = 1024,
) -> AlignmentResult:
    """Rank every source test entity's true target by embedding dot product.

    e1/e2 are the per-KB entity matrices (unit rows). test_pairs holds
    (kb1_id, kb2_id) rows; direction picks which side is the source. Sources
    without a valid embedding row are excluded and counted.
    """
    test_pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    if direction in ("1to2", "kb1_to_kb2"):
        src_mat, dst_mat = e1, e2
        src_ids, dst_ids = test_pairs[:, 0], test_pairs[:, 1]
        direction = "1to2"
    elif direction in ("2to1", "kb2_to_kb1"):
        src_mat, dst_mat = e2, e1
        src_ids, dst_ids = test_pairs[:, 1], test_pairs[:, 0]
        direction = "2to1"
    else:
        raise DataError(f"unknown direction {direction!r}")

    in_bounds = (
        (src_ids >= 0)
        & (src_ids < src_mat.shape[0])
        & (dst_ids >= 0)
        & (dst_ids < dst_mat.shape[0])
    )
    n_excluded = int((~in_bounds).sum())
    src_ids, dst_ids = src_ids[in_bounds], dst_ids[in_bounds]

    if candidate_pool == "test":
        cand_ids = np.unique(dst_ids)
    elif candidate_pool == "full":
        cand_ids = np.arange(dst_mat.shape[0], dtype=np.int64)
    else:
        raise DataError(f"unknown candidate pool {candidate_pool!r}")
    cand_mat = dst_mat[cand_ids]

    ranks = np.empty(len(src_ids), dtype=np.int64)
    for start in range(0, len(src_ids), block_rows):
        stop = min(start + block_rows, len(src_ids))
        scores = src_mat[src_ids[start:stop]] @ cand_mat.T
        for i in range(stop - start):
            true_id = dst_ids[start + i]
            row = scores[i]
            pos = np.searchsorted(cand_ids, true_id)
            true_score = row[pos]
            better = int((row > true_score).sum())
            tied_before = int(((row == true_score) & (cand_ids < true_id)).sum())
            ranks[start + i] = 1 + better + tied_before
    return aggregate_ranks(ranks, direction, hits_ks, n_excluded, source_ids=src_ids)


def combine_ranks(r_embed: int | np.ndarray, r_string: int | np.ndarray):
    """Combined rank of two methods: the better (lower) of the two."""
    return np.minimum(r_embed, r_string)


def combine_results(
    embed: AlignmentResult,
    string: AlignmentResult,
    hits_ks: tuple[int, ...] = HITS_KS_DEFAULT,
) -> AlignmentResult:
    """Min-rank combination of two results over the same source entities."""
    if embed.direction != string.direction:
        raise DataError("cannot combine results for different directions")
    if len(embed.ranks) != len(string.ranks):
        raise DataError(
            "rank lists cover different source sets "
            f"({len(embed.ranks)} vs {len(string.ranks)})"
        )
    if len(embed.source_ids) and len(string.source_ids):
        if not np.array_equal(embed.source_ids, string.source_ids):
            raise DataError("rank lists are not aligned on the same source entities")
    combined = combine_ranks(embed.ranks, string.ranks)
    return aggregate_ranks(
        combined, embed.direction, hits_ks, embed.n_excluded + string.n_excluded,
        source_ids=embed.source_ids,
    )


def format_result_table(results: list[AlignmentResult]) -> str:
    """Text table with the Hits@1/10/50 + Mean column layout."""
    ks = sorted({k for r in results for k in r.hits_at})
    header = "direction " + " ".join(f"{f'Hits@{k}':>8s}" for k in ks) + f" {'Mean':>8s} {'n':>6s}"
    lines = [header]
    for r in results:
        cells = " ".join(f"{r.hits_at.get(k, float('nan')):8.2f}" for k in ks)
        lines.append(f"{r.direction:9s} {cells} {r.mean_rank:8.2f} {r.n_evaluated:6d}")
    return "\n".join(lines)


def results_to_csv(results: list[AlignmentResult]) -> str:
    ks = sorted({k for r in results for k in r.hits_at})
    rows = ["direction," + ",".join(f"hits_at_{k}" for k in ks) + ",mean_rank,n_evaluated,n_excluded"]
    for r in results:
        cells = ",".join(repr(r.hits_at.get(k, float("nan"))) for k in ks)
        rows.append(
            f"{r.direction},{cells},{r.mean_rank!r},{r.n_evaluated},{r.n_excluded}"
        )
    return "\n".join(rows) + "\n"
