"""Attribute embedding: skip-gram over correlated attribute pairs.

Attributes used together to describe one entity are correlated; seed entity
pairs additionally correlate attributes across the two KBs. Each ordered
pair (a, c) is a positive example weighted 2 when both attributes share a
range type (1 otherwise) and trained against log-uniform negative samples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError, NumericError
from .kb import KnowledgeBase, RangeType, SeedAlignment, UnifiedIndex
from .se import ADAGRAD_EPS, adagrad_update, normalize_rows, truncated_normal

logger = logging.getLogger(__name__)


@dataclass
class AEConfig:
    negatives_per_pair: int = 5
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 4096
    dim: int | None = None  # default: structure embedding dimension
    rng_seed: int | None = None

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.negatives_per_pair < 1:
            raise ConfigError("negatives_per_pair must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class CorrelationPairSet:
    """Multiset of positive (a, c) attribute-slot pairs with {1, 2} weights.

    pair_a/pair_c/pair_w are the expanded multiset: common co-occurrence
    appears multiple times and therefore trains more.
    """

    pair_a: np.ndarray
    pair_c: np.ndarray
    pair_w: np.ndarray
    n_slots: int
    slot_freq: np.ndarray

    def __len__(self) -> int:
        return len(self.pair_a)

    def positives_by_attribute(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {}
        for a, c in zip(self.pair_a.tolist(), self.pair_c.tolist()):
            out.setdefault(a, set()).add(c)
        return out

    def packed_pairs(self) -> np.ndarray:
        """Sorted array of (a << 32 | c) keys for vectorized membership tests."""
        return np.unique((self.pair_a << 32) | self.pair_c)


def attribute_range_types(
    kb1: KnowledgeBase, kb2: KnowledgeBase, unified: UnifiedIndex
) -> np.ndarray:
    """Majority range type per unified attribute slot, facts pooled over KBs.

    Ties break toward the smaller range-type code.
    """
    counts = np.zeros((unified.n_attr_slots, len(RangeType)), dtype=np.int64)
    for kb, slot_map in ((kb1, unified.attr_slot_1), (kb2, unified.attr_slot_2)):
        for _ent, attr, rng_code in kb.attr_facts:
            counts[slot_map[attr], rng_code] += 1
    ranges = counts.argmax(axis=1)
    ranges[counts.sum(axis=1) == 0] = int(RangeType.STRING)
    return ranges


def _entity_attr_slots(kb: KnowledgeBase, slot_map: np.ndarray) -> list[np.ndarray]:
    return [
        np.unique(slot_map[attrs]) if len(attrs) else attrs
        for attrs in kb.entity_attribute_sets()
    ]


def build_correlation_pairs(
    kb1: KnowledgeBase,
    kb2: KnowledgeBase,
    unified: UnifiedIndex,
    seeds: SeedAlignment,
) -> CorrelationPairSet:
    """Collect the positive pair multiset H.

    Mono-lingual: every ordered pair (a, c), a != c, over one entity's
    attribute set. Cross-lingual: every ordered pair across the attribute
    sets of a seed entity pair, both directions.
    """
    ranges = attribute_range_types(kb1, kb2, unified)
    sets1 = _entity_attr_slots(kb1, unified.attr_slot_1)
    sets2 = _entity_attr_slots(kb2, unified.attr_slot_2)

    a_parts: list[np.ndarray] = []
    c_parts: list[np.ndarray] = []

    def add_ordered(attrs: np.ndarray) -> None:
        n = len(attrs)
        if n < 2:
            return
        grid_a = np.repeat(attrs, n)
        grid_c = np.tile(attrs, n)
        off_diag = grid_a != grid_c
        a_parts.append(grid_a[off_diag])
        c_parts.append(grid_c[off_diag])

    def add_cross(attrs1: np.ndarray, attrs2: np.ndarray) -> None:
        if not len(attrs1) or not len(attrs2):
            return
        grid_a = np.repeat(attrs1, len(attrs2))
        grid_c = np.tile(attrs2, len(attrs1))
        a_parts.extend([grid_a, grid_c])
        c_parts.extend([grid_c, grid_a])

    for sets in (sets1, sets2):
        for attrs in sets:
            add_ordered(attrs)
    for e1, e2 in seeds.entity_pairs:
        add_cross(sets1[e1], sets2[e2])

    if a_parts:
        pair_a = np.concatenate(a_parts)
        pair_c = np.concatenate(c_parts)
    else:
        pair_a = np.empty(0, dtype=np.int64)
        pair_c = np.empty(0, dtype=np.int64)
    pair_w = np.where(ranges[pair_a] == ranges[pair_c], 2.0, 1.0)

    slot_freq = np.zeros(unified.n_attr_slots, dtype=np.int64)
    for kb, slot_map in ((kb1, unified.attr_slot_1), (kb2, unified.attr_slot_2)):
        if kb.attr_facts.size:
            np.add.at(slot_freq, slot_map[kb.attr_facts[:, 1]], 1)

    return CorrelationPairSet(
        pair_a=pair_a,
        pair_c=pair_c,
        pair_w=pair_w,
        n_slots=unified.n_attr_slots,
        slot_freq=slot_freq,
    )


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    """log(1 / (1 + e^-x)) without overflow."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def ae_loss_term(
    a: np.ndarray, c: np.ndarray, negatives: list[np.ndarray] | np.ndarray, w: float
) -> float:
    """-w * [log sigmoid(a.c) + sum log sigmoid(-a.c')] for one positive pair."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    negatives = np.asarray(negatives, dtype=float).reshape(-1, len(a))
    total = log_sigmoid(a @ c)
    if len(negatives):
        total += log_sigmoid(-(negatives @ a)).sum()
    return float(-w * total)


class LogUniformSampler:
    """Negative attribute sampler over the frequency-ranked vocabulary.

    P(rank i) = (log(i+2) - log(i+1)) / log(V+1); rank 0 is the most
    frequent attribute. Draws hitting the query attribute or one of its
    known positives are resampled a bounded number of rounds.
    """

    def __init__(self, slot_freq: np.ndarray):
        self.vocab_size = len(slot_freq)
        if self.vocab_size == 0:
            raise DataError("cannot sample negatives from an empty vocabulary")
        order = np.lexsort((np.arange(self.vocab_size), -np.asarray(slot_freq)))
        self.rank_to_slot = order
        self._log_vp1 = math.log(self.vocab_size + 1)

    def rank_probability(self, rank: int) -> float:
        return (math.log(rank + 2) - math.log(rank + 1)) / self._log_vp1

    def sample_ranks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        ranks = np.floor(np.exp(u * self._log_vp1)).astype(np.int64) - 1
        return np.clip(ranks, 0, self.vocab_size - 1)

    def sample(
        self,
        a: int,
        k: int,
        rng: np.random.Generator,
        exclude: set[int] | None = None,
        max_rounds: int = 100,
    ) -> np.ndarray:
        """k distinct negative slots for attribute a.

        Returns fewer, with a warning, when the vocabulary minus exclusions
        cannot supply k distinct slots.
        """
        banned = {a} | (exclude or set())
        out: list[int] = []
        for _ in range(max_rounds):
            draw = self.rank_to_slot[self.sample_ranks(rng, k - len(out))]
            for s in draw.tolist():
                if s not in banned:
                    banned.add(s)
                    out.append(s)
            if len(out) >= k:
                return np.asarray(out, dtype=np.int64)
        logger.warning("negative sampling exhausted for slot %d: %d/%d", a, len(out), k)
        return np.asarray(out, dtype=np.int64)


def sample_negative_attributes(
    a: int,
    k: int,
    rng: np.random.Generator,
    sampler: LogUniformSampler,
    positives: set[int] | None = None,
) -> np.ndarray:
    return sampler.sample(a, k, rng, exclude=positives)


def ae_batch_loss_and_grads(
    attr: np.ndarray,
    batch_a: np.ndarray,
    batch_c: np.ndarray,
    batch_w: np.ndarray,
    neg: np.ndarray,
    neg_valid: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Skip-gram negative-sampling loss over a batch.

    neg is (B, k) slot ids with neg_valid masking dropped draws. Returns
    (loss, rows, grads) with grads compacted to the touched attribute rows.
    """
    va = attr[batch_a]
    vc = attr[batch_c]
    pos_dot = np.einsum("ij,ij->i", va, vc)
    vneg = attr[neg]
    neg_dot = np.einsum("ij,ikj->ik", va, vneg)

    pos_term = log_sigmoid(pos_dot)
    neg_term = np.where(neg_valid, log_sigmoid(-neg_dot), 0.0)
    loss = float(-(batch_w * (pos_term + neg_term.sum(axis=1))).sum())

    sig_pos = expit(pos_dot)
    sig_neg = np.where(neg_valid, expit(neg_dot), 0.0)

    g_a = (batch_w * (sig_pos - 1.0))[:, None] * vc + np.einsum(
        "ik,ikj->ij", batch_w[:, None] * sig_neg, vneg
    )
    g_c = (batch_w * (sig_pos - 1.0))[:, None] * va
    g_neg = (batch_w[:, None] * sig_neg)[:, :, None] * va[:, None, :]

    idx = np.concatenate([batch_a, batch_c, neg.ravel()])
    contrib = np.concatenate([g_a, g_c, g_neg.reshape(-1, attr.shape[1])])
    rows, inverse = np.unique(idx, return_inverse=True)
    grads = np.zeros((len(rows), attr.shape[1]))
    np.add.at(grads, inverse, contrib)
    return loss, rows, grads


def train_ae(
    pairs: CorrelationPairSet,
    cfg: AEConfig,
    dim: int,
    rng: np.random.Generator,
    attr_vecs: np.ndarray | None = None,
) -> np.ndarray:
    """Train attribute vectors by AdaGrad; rows unit-normalized per update."""
    cfg.validate()
    if len(pairs) == 0:
        raise DataError("correlation pair set is empty")
    d = cfg.dim or dim
    if attr_vecs is None:
        attr_vecs = truncated_normal(rng, (pairs.n_slots, d), 1.0 / np.sqrt(d))
        normalize_rows(attr_vecs)
    accum = np.zeros_like(attr_vecs)
    sampler = LogUniformSampler(pairs.slot_freq)
    packed = pairs.packed_pairs()
    k = cfg.negatives_per_pair

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch_a = pairs.pair_a[idx]
            batch_c = pairs.pair_c[idx]
            batch_w = pairs.pair_w[idx]
            neg, neg_valid = _sample_batch_negatives(batch_a, k, rng, sampler, packed)
            loss, rows, grads = ae_batch_loss_and_grads(
                attr_vecs, batch_a, batch_c, batch_w, neg, neg_valid
            )
            total += loss
            adagrad_update(attr_vecs, accum, rows, grads, cfg.learning_rate)
            normalize_rows(attr_vecs, rows)
        if not np.isfinite(total):
            raise NumericError(f"non-finite attribute loss at epoch {epoch}")
        if epoch % 20 == 0 or epoch == cfg.epochs - 1:
            logger.debug("attribute epoch %d loss %.4f", epoch, total)
    return attr_vecs


def _sample_batch_negatives(
    batch_a: np.ndarray,
    k: int,
    rng: np.random.Generator,
    sampler: LogUniformSampler,
    packed_positives: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(B, k) negative slots plus validity mask; exhausted draws are dropped."""
    B = len(batch_a)
    neg = sampler.rank_to_slot[sampler.sample_ranks(rng, B * k)].reshape(B, k)
    a_col = batch_a[:, None]

    def banned() -> np.ndarray:
        keys = (a_col << 32) | neg
        return (neg == a_col) | np.isin(keys, packed_positives)

    bad = banned()
    for _ in range(40):
        n_bad = int(bad.sum())
        if not n_bad:
            break
        neg[bad] = sampler.rank_to_slot[sampler.sample_ranks(rng, n_bad)]
        bad &= banned()
    valid = ~bad
    if bad.any():
        logger.warning("dropped %d exhausted negative draws", int(bad.sum()))
    return neg, valid
