"""Structure embedding: translation-scored triples trained with AdaGrad.

A triple (h, r, t) is scored by the squared translation residual
``||h + r - t||^2``; training minimizes the pooled score of positive triples
minus alpha times the score of corrupted ones, re-projecting every touched
row to unit length after each update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .kb import UnifiedIndex

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-8


@dataclass
class SEConfig:
    dim: int = 75
    alpha: float = 0.1
    learning_rate: float = 0.01
    negatives_per_positive: int = 1
    batch_size: int = 2000
    epochs_max: int = 500
    rng_seed: int | None = None
    normalize_relations: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.negatives_per_positive < 1:
            raise ConfigError("negatives_per_positive must be >= 1")
        if self.batch_size < 1 or self.epochs_max < 1:
            raise ConfigError("batch_size and epochs_max must be >= 1")


@dataclass
class EmbeddingSpace:
    """Unit-norm vector tables for entity slots, relationships, attributes."""

    dim: int
    entity_vecs: np.ndarray
    rel_vecs: np.ndarray
    attr_vecs: np.ndarray | None = None

    def max_norm_deviation(self) -> float:
        tables = [self.entity_vecs, self.rel_vecs]
        if self.attr_vecs is not None:
            tables.append(self.attr_vecs)
        worst = 0.0
        for table in tables:
            if table.size:
                worst = max(worst, float(np.abs(np.linalg.norm(table, axis=1) - 1.0).max()))
        return worst


def truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> np.ndarray:
    """Normal draws with |x| > 2*std resampled."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


def normalize_rows(table: np.ndarray, rows: np.ndarray | None = None) -> None:
    """Project rows back onto the unit sphere in place (zero rows untouched)."""
    view = table if rows is None else table[rows]
    norms = np.linalg.norm(view, axis=1, keepdims=True)
    np.divide(view, norms, out=view, where=norms > 0)
    if rows is not None:
        table[rows] = view


def init_space(
    unified: UnifiedIndex, dim: int, rng: np.random.Generator, attr_dim: int | None = None
) -> EmbeddingSpace:
    std = 1.0 / np.sqrt(dim)
    ent = truncated_normal(rng, (unified.n_entity_slots, dim), std)
    rel = truncated_normal(rng, (unified.n_rel_slots, dim), std)
    a_dim = dim if attr_dim is None else attr_dim
    attr = truncated_normal(rng, (unified.n_attr_slots, a_dim), 1.0 / np.sqrt(a_dim))
    for table in (ent, rel, attr):
        normalize_rows(table)
    return EmbeddingSpace(dim=dim, entity_vecs=ent, rel_vecs=rel, attr_vecs=attr)


def score_triple(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> float:
    """Squared translation residual ||h + r - t||^2 (0 iff h + r = t)."""
    h, r, t = np.asarray(h, dtype=float), np.asarray(r, dtype=float), np.asarray(t, dtype=float)
    if not h.shape == r.shape == t.shape:
        raise ValueError(f"dimension mismatch: {h.shape}, {r.shape}, {t.shape}")
    res = h + r - t
    return float(res @ res)


def score_triples(ent: np.ndarray, rel: np.ndarray, triples: np.ndarray) -> np.ndarray:
    res = ent[triples[:, 0]] + rel[triples[:, 1]] - ent[triples[:, 2]]
    return np.einsum("ij,ij->i", res, res)


def generate_negatives(
    triple: tuple[int, int, int],
    k: int,
    rng: np.random.Generator,
    entity_pool: np.ndarray,
    positives: set[tuple[int, int, int]],
    max_retries: int = 100,
) -> list[tuple[int, int, int]]:
    """k distinct corrupted triples differing from `triple` in head xor tail.

    Corruptions that reproduce a known positive are resampled; when the pool
    is too small to produce k distinct negatives the shorter list is returned
    with a warning.
    """
    if k < 1:
        raise ValueError(f"negative count must be >= 1, got {k}")
    h, r, t = (int(x) for x in triple)
    out: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    tries = 0
    while len(out) < k and tries < max_retries * k:
        tries += 1
        repl = int(entity_pool[rng.integers(len(entity_pool))])
        cand = (repl, r, t) if rng.integers(2) == 0 else (h, r, repl)
        if cand in positives or cand in seen:
            continue
        seen.add(cand)
        out.append(cand)
    if len(out) < k:
        logger.warning("entity pool too small: produced %d/%d negatives", len(out), k)
    return out


def adagrad_update(
    table: np.ndarray,
    accum: np.ndarray,
    rows: np.ndarray,
    grads: np.ndarray,
    lr: float,
) -> None:
    """accum += grad^2; row -= lr * grad / (sqrt(accum) + eps), in place."""
    accum[rows] += grads * grads
    table[rows] -= lr * grads / (np.sqrt(accum[rows]) + ADAGRAD_EPS)


def se_loss_and_grads(
    ent: np.ndarray,
    rel: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    neg_owner: np.ndarray,
    alpha: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus dense gradients of the pooled translation objective.

    The objective nests negatives under their positive, so each positive
    score is counted once per associated negative; with alpha = 0 (or no
    negatives) it collapses to the bare positive sum.
    """
    loss, (ent_rows, ent_grads), (rel_rows, rel_grads) = _batch_grads(
        ent, rel, pos, neg, neg_owner, alpha
    )
    g_ent = np.zeros_like(ent)
    g_rel = np.zeros_like(rel)
    g_ent[ent_rows] = ent_grads
    g_rel[rel_rows] = rel_grads
    return loss, g_ent, g_rel


class SETrainer:
    """Single-writer epoch loop over the pooled triples of both KBs.

    Negatives are corrupted within the triple's own KB and regenerated each
    epoch; AdaGrad accumulators persist across epochs; every touched row is
    re-projected to unit norm immediately after its batch update.
    """

    def __init__(
        self,
        space: EmbeddingSpace,
        triples: np.ndarray,
        triple_kb: np.ndarray,
        unified: UnifiedIndex,
        cfg: SEConfig,
        rng: np.random.Generator,
    ):
        cfg.validate()
        self.space = space
        self.triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.triple_kb = np.asarray(triple_kb, dtype=np.int64)
        self.cfg = cfg
        self.rng = rng
        self.positives = set(map(tuple, self.triples.tolist()))
        self.pools = {
            1: np.unique(unified.ent_slot_1),
            2: np.unique(unified.ent_slot_2),
        }
        self.ent_accum = np.zeros_like(space.entity_vecs)
        self.rel_accum = np.zeros_like(space.rel_vecs)
        self.epoch = 0

    def _sample_negatives(self, batch_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized corruption of one batch; k rows per positive.

        Collisions with the positive set are resampled a bounded number of
        rounds, then dropped.
        """
        k = self.cfg.negatives_per_positive
        pos = self.triples[batch_idx]
        kb_ids = self.triple_kb[batch_idx]
        owners = np.repeat(np.arange(len(pos)), k)
        neg = np.repeat(pos, k, axis=0)
        corrupt_head = self.rng.integers(2, size=len(neg)) == 0
        pending = np.arange(len(neg))
        for _ in range(40):
            if not len(pending):
                break
            pool_choice = np.empty(len(pending), dtype=np.int64)
            for kb_id, pool in self.pools.items():
                rows = kb_ids[owners[pending]] == kb_id
                if rows.any():
                    pool_choice[rows] = pool[self.rng.integers(len(pool), size=int(rows.sum()))]
            neg[pending, 0] = np.where(corrupt_head[pending], pool_choice, neg[pending, 0])
            neg[pending, 2] = np.where(corrupt_head[pending], neg[pending, 2], pool_choice)
            still_bad = [
                i
                for i, row in zip(pending, neg[pending].tolist())
                if tuple(row) in self.positives
            ]
            if not still_bad:
                pending = np.empty(0, dtype=np.int64)
                break
            bad = np.asarray(still_bad, dtype=np.int64)
            # reset the ones we failed on so the next round re-corrupts them
            neg[bad] = pos[owners[bad]]
            pending = bad
        if len(pending):
            keep = np.ones(len(neg), dtype=bool)
            keep[pending] = False
            neg, owners = neg[keep], owners[keep]
            logger.warning("dropped %d uncorruptable negatives", len(pending))
        return neg, owners

    def run_epoch(self) -> float:
        """One shuffled pass of AdaGrad updates; returns the epoch loss."""
        cfg = self.cfg
        ent, rel = self.space.entity_vecs, self.space.rel_vecs
        order = self.rng.permutation(len(self.triples))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            pos = self.triples[batch_idx]
            if cfg.alpha > 0.0:
                neg, owners = self._sample_negatives(batch_idx)
            else:
                neg = np.empty((0, 3), dtype=np.int64)
                owners = np.empty(0, dtype=np.int64)

            loss, batch_ent, batch_rel = _batch_grads(ent, rel, pos, neg, owners, cfg.alpha)
            total += loss

            ent_rows, ent_grads = batch_ent
            adagrad_update(ent, self.ent_accum, ent_rows, ent_grads, cfg.learning_rate)
            normalize_rows(ent, ent_rows)

            rel_rows, rel_grads = batch_rel
            adagrad_update(rel, self.rel_accum, rel_rows, rel_grads, cfg.learning_rate)
            if cfg.normalize_relations:
                normalize_rows(rel, rel_rows)
        if not np.isfinite(total):
            raise NumericError(
                f"non-finite structure loss at epoch {self.epoch} "
                f"(lr={cfg.learning_rate}, alpha={cfg.alpha})"
            )
        self.epoch += 1
        return total


def _batch_grads(
    ent: np.ndarray,
    rel: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    owners: np.ndarray,
    alpha: float,
) -> tuple[float, tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Batch loss plus compact (rows, grads) pairs for the touched rows only."""
    pos_res = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    pos_scores = np.einsum("ij,ij->i", pos_res, pos_res)
    if len(neg):
        counts = np.bincount(owners, minlength=len(pos)).astype(float)
        neg_res = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
        neg_scores = np.einsum("ij,ij->i", neg_res, neg_res)
        loss = float(counts @ pos_scores - alpha * neg_scores.sum())
    else:
        counts = np.ones(len(pos))
        loss = float(pos_scores.sum())

    w_pos = 2.0 * counts[:, None] * pos_res
    ent_idx = [pos[:, 0], pos[:, 2]]
    ent_contrib = [w_pos, -w_pos]
    rel_idx = [pos[:, 1]]
    rel_contrib = [w_pos]
    if len(neg) and alpha > 0.0:
        w_neg = 2.0 * alpha * neg_res
        ent_idx += [neg[:, 0], neg[:, 2]]
        ent_contrib += [-w_neg, w_neg]
        rel_idx.append(neg[:, 1])
        rel_contrib.append(-w_neg)

    def compact(idx_list, contrib_list):
        idx = np.concatenate(idx_list)
        contrib = np.concatenate(contrib_list)
        rows, inverse = np.unique(idx, return_inverse=True)
        grads = np.zeros((len(rows), contrib.shape[1]))
        np.add.at(grads, inverse, contrib)
        return rows, grads

    return loss, compact(ent_idx, ent_contrib), compact(rel_idx, rel_contrib)
