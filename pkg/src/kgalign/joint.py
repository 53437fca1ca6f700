"""Joint training: structure passes alternated with similarity refinement.

Each epoch runs one structure-embedding pass and then one AdaGrad step on
the weighted similarity objective

    ||E1 - S12 E2||_F^2 + beta (||E1 - S1 E1||_F^2 + ||E2 - S2 E2||_F^2)

with the S matrices frozen and zero-attribute rows masked out of every term.
The two optimizers keep independent accumulators and never run concurrently.
Training stops when the relative change of the validation mean rank falls
below the early-stop ratio, or at the epoch cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .evaluation import rank_targets
from .kb import UnifiedIndex
from .se import EmbeddingSpace, SEConfig, SETrainer, adagrad_update, normalize_rows
from .similarity import SimilarityMatrices

logger = logging.getLogger(__name__)


@dataclass
class JointConfig:
    beta: float = 0.05
    delta: float = 0.05
    se: SEConfig = field(default_factory=SEConfig)
    early_stop_ratio: float = 0.0005
    eval_every: int = 10
    min_epochs: int = 30
    val_fraction: float = 0.1

    def validate(self) -> None:
        if self.beta < 0 or self.delta < 0:
            raise ConfigError("beta and delta must be >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        self.se.validate()


def os_loss(
    e1: np.ndarray,
    e2: np.ndarray,
    sims: SimilarityMatrices,
    beta: float,
    mask1: np.ndarray | None = None,
    mask2: np.ndarray | None = None,
) -> float:
    loss, _, _ = os_loss_and_grads(e1, e2, sims, beta, mask1, mask2)
    return loss


def os_loss_and_grads(
    e1: np.ndarray,
    e2: np.ndarray,
    sims: SimilarityMatrices,
    beta: float,
    mask1: np.ndarray | None = None,
    mask2: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Similarity-refinement loss and its gradients w.r.t. the two KB views."""
    if e1.shape[1] != e2.shape[1]:
        raise ValueError(f"dimension mismatch: {e1.shape} vs {e2.shape}")
    if sims.s12.shape != (e1.shape[0], e2.shape[0]):
        raise ValueError(
            f"similarity shape {sims.s12.shape} does not match entity tables "
            f"({e1.shape[0]}, {e2.shape[0]})"
        )
    r12 = e1 - sims.s12 @ e2
    r1 = e1 - sims.s1 @ e1
    r2 = e2 - sims.s2 @ e2
    if mask1 is not None:
        r12[~mask1] = 0.0
        r1[~mask1] = 0.0
    if mask2 is not None:
        r2[~mask2] = 0.0
    loss = float((r12 * r12).sum() + beta * ((r1 * r1).sum() + (r2 * r2).sum()))
    g1 = 2.0 * r12 + 2.0 * beta * (r1 - sims.s1.T @ r1)
    g2 = -2.0 * (sims.s12.T @ r12) + 2.0 * beta * (r2 - sims.s2.T @ r2)
    return loss, g1, g2


class SimilarityOptimizer:
    """AdaGrad over delta * O_S w.r.t. the unified entity table.

    Gradients from the KB1 and KB2 views scatter-add onto shared slots; only
    rows with a nonzero gradient are updated and re-projected, so a pass with
    all-zero similarities is an exact no-op.
    """

    def __init__(
        self,
        sims: SimilarityMatrices,
        unified: UnifiedIndex,
        mask1: np.ndarray,
        mask2: np.ndarray,
        beta: float,
        delta: float,
        learning_rate: float,
    ):
        self.sims = sims
        self.unified = unified
        self.mask1 = mask1
        self.mask2 = mask2
        self.beta = beta
        self.delta = delta
        self.learning_rate = learning_rate
        self.accum: np.ndarray | None = None

    def step(self, entity_vecs: np.ndarray) -> float:
        if self.accum is None:
            self.accum = np.zeros_like(entity_vecs)
        e1 = entity_vecs[self.unified.ent_slot_1]
        e2 = entity_vecs[self.unified.ent_slot_2]
        loss, g1, g2 = os_loss_and_grads(
            e1, e2, self.sims, self.beta, self.mask1, self.mask2
        )
        grad = np.zeros_like(entity_vecs)
        np.add.at(grad, self.unified.ent_slot_1, self.delta * g1)
        np.add.at(grad, self.unified.ent_slot_2, self.delta * g2)
        touched = np.flatnonzero(np.any(grad != 0.0, axis=1))
        if len(touched):
            adagrad_update(
                entity_vecs, self.accum, touched, grad[touched], self.learning_rate
            )
            normalize_rows(entity_vecs, touched)
        if not np.isfinite(loss):
            raise NumericError("non-finite similarity-refinement loss")
        return loss


@dataclass
class EpochLog:
    epoch: int
    se_loss: float
    os_loss: float | None
    val_mean: float | None


@dataclass
class JointResult:
    space: EmbeddingSpace
    epochs_run: int
    history: list[EpochLog]
    stopped_early: bool


def joint_train(
    space: EmbeddingSpace,
    triples: np.ndarray,
    triple_kb: np.ndarray,
    unified: UnifiedIndex,
    cfg: JointConfig,
    rng: np.random.Generator,
    sims: SimilarityMatrices | None = None,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
    val_pairs: np.ndarray | None = None,
) -> JointResult:
    """Alternate the structure and similarity optimizers for up to epochs_max.

    With delta = 0 the similarity step is skipped entirely and the trajectory
    matches plain structure training on the same RNG stream. Validation pairs
    (never index-unified) drive early stopping on mean rank.
    """
    cfg.validate()
    se_trainer = SETrainer(space, triples, triple_kb, unified, cfg.se, rng)
    sim_opt = None
    if cfg.delta > 0.0:
        if sims is None or masks is None:
            raise ConfigError(
                "joint training with delta > 0 requires attribute similarity "
                "matrices (train the attribute embedding first)"
            )
        sim_opt = SimilarityOptimizer(
            sims, unified, masks[0], masks[1], cfg.beta, cfg.delta, cfg.se.learning_rate
        )

    history: list[EpochLog] = []
    prev_mean: float | None = None
    stopped = False
    epochs_run = 0
    for epoch in range(cfg.se.epochs_max):
        se_loss = se_trainer.run_epoch()
        step_loss = sim_opt.step(space.entity_vecs) if sim_opt is not None else None
        epochs_run = epoch + 1

        val_mean = None
        if val_pairs is not None and len(val_pairs) and (epoch + 1) % cfg.eval_every == 0:
            val_mean = _validation_mean(space.entity_vecs, unified, val_pairs)
            if prev_mean is not None and epochs_run >= cfg.min_epochs:
                change = abs(val_mean - prev_mean) / max(prev_mean, 1.0)
                if change < cfg.early_stop_ratio:
                    stopped = True
            prev_mean = val_mean
        history.append(EpochLog(epochs_run, se_loss, step_loss, val_mean))
        logger.debug(
            "epoch %d: se=%.4f os=%s val_mean=%s", epochs_run, se_loss, step_loss, val_mean
        )
        if stopped:
            logger.info("early stop at epoch %d (validation mean settled)", epochs_run)
            break
    return JointResult(space=space, epochs_run=epochs_run, history=history, stopped_early=stopped)


def _validation_mean(
    entity_vecs: np.ndarray, unified: UnifiedIndex, val_pairs: np.ndarray
) -> float:
    e1 = entity_vecs[unified.ent_slot_1]
    e2 = entity_vecs[unified.ent_slot_2]
    result = rank_targets(e1, e2, val_pairs, direction="1to2")
    return result.mean_rank
