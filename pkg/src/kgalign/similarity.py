"""Entity similarity from attribute vectors: thresholded sparse cosine matrices.

Each entity is represented by the normalized sum of its attribute vectors;
with unit rows the pairwise dot products are cosines. Entries below the
threshold are dropped and the result stored sparse (cross-KB threshold 0.9,
inner 0.95 by default).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kb import KnowledgeBase, UnifiedIndex

logger = logging.getLogger(__name__)

TAU_CROSS_DEFAULT = 0.9
TAU_INNER_DEFAULT = 0.95
BLOCK_ROWS_DEFAULT = 4096


@dataclass
class SimilarityMatrices:
    s12: sp.csr_matrix
    s1: sp.csr_matrix
    s2: sp.csr_matrix
    tau_cross: float
    tau_inner: float


def entity_attr_vector(attr_slots: np.ndarray, attr_vecs: np.ndarray) -> np.ndarray:
    """Normalized sum of the entity's attribute vectors; zero if it has none."""
    if len(attr_slots) == 0:
        return np.zeros(attr_vecs.shape[1])
    total = attr_vecs[attr_slots].sum(axis=0)
    norm = np.linalg.norm(total)
    return total / norm if norm > 0 else total


def entity_attr_matrix(
    kb: KnowledgeBase, slot_map: np.ndarray, attr_vecs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked per-entity attribute representations plus the coverage mask.

    Entities without attributes get a zero row and a False mask entry; they
    are excluded from similarity rows and reported once.
    """
    n_e = kb.n_entities
    out = np.zeros((n_e, attr_vecs.shape[1]))
    if kb.attr_facts.size:
        ents = kb.attr_facts[:, 0]
        slots = slot_map[kb.attr_facts[:, 1]]
        # de-duplicate (entity, slot) so repeated facts do not double-count
        keys = np.unique(ents * attr_vecs.shape[0] + slots)
        u_ents = keys // attr_vecs.shape[0]
        u_slots = keys % attr_vecs.shape[0]
        np.add.at(out, u_ents, attr_vecs[u_slots])
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    mask = norms[:, 0] > 0
    np.divide(out, norms, out=out, where=norms > 0)
    if (~mask).any():
        logger.info(
            "KB%d: %d/%d entities have no attributes and are masked out of "
            "similarity refinement",
            kb.kb_id,
            int((~mask).sum()),
            n_e,
        )
    return out, mask


def threshold_product(
    left: np.ndarray,
    right: np.ndarray,
    tau: float,
    block_rows: int = BLOCK_ROWS_DEFAULT,
    row_normalize: bool = False,
) -> sp.csr_matrix:
    """left @ right.T with entries below tau dropped, computed block-wise."""
    n_left = left.shape[0]
    blocks = []
    for start in range(0, n_left, block_rows):
        dense = left[start : start + block_rows] @ right.T
        dense[dense < tau] = 0.0
        blocks.append(sp.csr_matrix(dense))
    if blocks:
        out = sp.vstack(blocks, format="csr")
    else:
        out = sp.csr_matrix((0, right.shape[0]))
    if row_normalize:
        sums = np.asarray(out.sum(axis=1)).ravel()
        scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
        out = sp.diags(scale) @ out
        out = out.tocsr()
    return out


def build_similarity_matrices(
    e1_ae: np.ndarray,
    e2_ae: np.ndarray,
    tau_cross: float = TAU_CROSS_DEFAULT,
    tau_inner: float = TAU_INNER_DEFAULT,
    block_rows: int = BLOCK_ROWS_DEFAULT,
    row_normalize: bool = False,
) -> SimilarityMatrices:
    return SimilarityMatrices(
        s12=threshold_product(e1_ae, e2_ae, tau_cross, block_rows, row_normalize),
        s1=threshold_product(e1_ae, e1_ae, tau_inner, block_rows, row_normalize),
        s2=threshold_product(e2_ae, e2_ae, tau_inner, block_rows, row_normalize),
        tau_cross=tau_cross,
        tau_inner=tau_inner,
    )


def auto_tau(e1_ae: np.ndarray, e2_ae: np.ndarray, seed_pairs: np.ndarray) -> float:
    """Threshold suggestion: mean cosine over the seed entity pairs."""
    if not len(seed_pairs):
        return TAU_CROSS_DEFAULT
    dots = np.einsum("ij,ij->i", e1_ae[seed_pairs[:, 0]], e2_ae[seed_pairs[:, 1]])
    return float(dots.mean())


def build_from_kbs(
    kb1: KnowledgeBase,
    kb2: KnowledgeBase,
    unified: UnifiedIndex,
    attr_vecs: np.ndarray,
    tau_cross: float = TAU_CROSS_DEFAULT,
    tau_inner: float = TAU_INNER_DEFAULT,
    block_rows: int = BLOCK_ROWS_DEFAULT,
    row_normalize: bool = False,
) -> tuple[SimilarityMatrices, np.ndarray, np.ndarray]:
    """Similarity matrices plus the two attribute-coverage masks."""
    e1_ae, mask1 = entity_attr_matrix(kb1, unified.attr_slot_1, attr_vecs)
    e2_ae, mask2 = entity_attr_matrix(kb2, unified.attr_slot_2, attr_vecs)
    sims = build_similarity_matrices(
        e1_ae, e2_ae, tau_cross, tau_inner, block_rows, row_normalize
    )
    return sims, mask1, mask2
