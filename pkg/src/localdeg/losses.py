"""Training objectives: utterance-score regression with a pairwise margin
term, slice consistency, frame-level pseudo supervision, and a frame-level
supervised contrastive loss with self-contrast and class exclusions.

All functions take autodiff tensors for anything that needs gradients and
plain numpy arrays for targets, masks, and labels.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractViolationError, DimensionError

logger = logging.getLogger(__name__)


@dataclass
class LossConfig:
    clip_margin: float = 0.25  # dead zone of the utterance score error
    pair_margin: float = 0.5  # margin of the pairwise rank term
    temperature: float = 0.1  # contrastive softmax temperature
    window: int = 10  # self-contrast exclusion radius in frames
    excluded_classes: tuple = ()  # anchor classes skipped by the contrastive loss
    slice_frames: int = 50  # consistency slice length (1 s)
    scl_weight: float = None  # None -> use the temperature as the weight

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be positive")
        if self.window < 0 or self.slice_frames < 1:
            raise ConfigError("window must be >= 0 and slice_frames >= 1")
        if self.clip_margin < 0.0 or self.pair_margin < 0.0:
            raise ConfigError("margins must be non-negative")

    @property
    def contrastive_weight(self):
        return self.temperature if self.scl_weight is None else self.scl_weight


def utterance_quality_loss(y_hat: Tensor, y: np.ndarray, cfg: LossConfig) -> Tensor:
    """Clipped L1 on utterance scores plus a pairwise rank-margin term.

    The pairwise term averages relu(|(yh_i - yh_j) - (y_i - y_j)| - margin)
    over ordered pairs i != j; with fewer than two items it is skipped.
    """
    y = np.asarray(y, dtype=np.float64)
    if y_hat.data.shape != y.shape:
        raise DimensionError(f"targets {y.shape} vs estimates {y_hat.data.shape}")
    b = y.shape[0]
    err = ad.absolute(ad.add_const(y_hat, -y))
    loss = ad.mean_all(ad.relu(ad.add_const(err, -cfg.clip_margin)))
    if b < 2:
        logger.warning("utterance loss with batch < 2: pairwise term skipped")
        return loss
    d_hat = ad.pairwise_diff(y_hat)
    d_tgt = y[:, None] - y[None, :]
    hinge = ad.relu(
        ad.add_const(ad.absolute(ad.add_const(d_hat, -d_tgt)), -cfg.pair_margin)
    )
    off_diag = (1.0 - np.eye(b)) / (b * (b - 1))
    return ad.add(loss, ad.sum_all(ad.mul_const(hinge, off_diag)))


def slice_consistency_loss(x_full, q_full, x_slice, q_slice, l0: int) -> Tensor:
    """Mismatch between full-context and slice outputs on the slice frames:
    squared embedding distance plus absolute score difference, per frame."""
    delta_l = x_slice.data.shape[0]
    x_win = ad.slice_rows(x_full, l0, l0 + delta_l)
    if x_win.data.shape != x_slice.data.shape:
        raise DimensionError("slice embeddings misaligned with full outputs")
    q_win = ad.slice_rows(q_full, l0, l0 + delta_l)
    if q_win.data.shape != q_slice.data.shape:
        raise DimensionError("slice scores misaligned with full outputs")
    d = ad.sub(x_win, x_slice)
    total = ad.add(ad.sum_all(ad.mul(d, d)), ad.sum_all(ad.absolute(ad.sub(q_win, q_slice))))
    return ad.mul_const(total, 1.0 / delta_l)


def frame_supervision_loss(q_hat: Tensor, q_pseudo: np.ndarray) -> Tensor:
    """Mean absolute error between frame scores and their pseudo targets."""
    q_pseudo = np.asarray(q_pseudo, dtype=np.float64)
    if q_hat.data.shape != q_pseudo.shape:
        raise DimensionError(
            f"pseudo targets {q_pseudo.shape} vs scores {q_hat.data.shape}"
        )
    return ad.mean_all(ad.absolute(ad.add_const(q_hat, -q_pseudo)))


def supervised_contrastive_loss(z: Tensor, labels, utt_index, frame_index,
                                cfg: LossConfig):
    """Frame-level supervised contrastive loss on unit-norm embeddings.

    Positives share the anchor's class label. Pairs from the same utterance
    closer than ``cfg.window`` frames are self-contrast and drop out of both
    the positive set and the denominator; the anchor itself always does.
    Anchors whose class is in ``cfg.excluded_classes`` are skipped but still
    appear in other anchors' denominators, and anchors with no surviving
    positive contribute nothing and are excluded from the averaging count.

    Returns ``(loss, stats)`` where stats counts anchors, skipped anchors,
    and zero-positive anchors.
    """
    labels = np.asarray(labels)
    utt_index = np.asarray(utt_index)
    frame_index = np.asarray(frame_index)
    n = z.data.shape[0]
    if labels.shape != (n,) or utt_index.shape != (n,) or frame_index.shape != (n,):
        raise DimensionError("labels/utterance/frame indices must match embeddings")
    norms = np.sqrt((z.data * z.data).sum(axis=1))
    if n and np.abs(norms - 1.0).max() > 1e-4:
        raise ContractViolationError("contrastive embeddings must have unit rows")

    same_utt = utt_index[:, None] == utt_index[None, :]
    near = np.abs(frame_index[:, None] - frame_index[None, :]) < cfg.window
    denom_mask = ~np.eye(n, dtype=bool) & ~(same_utt & near)
    pos_mask = denom_mask & (labels[:, None] == labels[None, :])
    n_pos = pos_mask.sum(axis=1)
    skipped = np.isin(labels, np.asarray(cfg.excluded_classes)) if cfg.excluded_classes else np.zeros(n, dtype=bool)
    valid = ~skipped & (n_pos > 0)
    stats = {
        "anchors": int(n),
        "skipped_anchors": int(skipped.sum()),
        "zero_positive_anchors": int((~skipped & (n_pos == 0)).sum()),
        "contributing_anchors": int(valid.sum()),
    }
    if stats["contributing_anchors"] == 0:
        return Tensor(0.0), stats

    s = ad.mul_const(ad.matmul(z, ad.transpose(z)), 1.0 / cfg.temperature)
    # Detached row maxima keep exp in range; the shift cancels exactly.
    masked = np.where(denom_mask, s.data, -np.inf)
    row_max = np.where(denom_mask.any(axis=1), masked.max(axis=1), 0.0)
    e = ad.mul_const(ad.exp(ad.add_const(s, -row_max[:, None])), denom_mask.astype(float))
    denom = ad.sum_axis(e, 1)
    # Empty denominator rows are never valid anchors; keep log() finite there.
    denom = ad.add_const(denom, (~denom_mask.any(axis=1)).astype(float))
    lse = ad.add_const(ad.log(denom), row_max)
    pos_sum = ad.sum_axis(ad.mul_const(s, pos_mask.astype(float)), 1)
    pos_mean = ad.mul_const(pos_sum, 1.0 / np.maximum(n_pos, 1))
    per_anchor = ad.sub(lse, pos_mean)
    weights = valid.astype(float) / stats["contributing_anchors"]
    return ad.sum_all(ad.mul_const(per_anchor, weights)), stats


def total_loss(outputs, slice_outputs, slice_starts, examples, cfg: LossConfig,
               use_pseudo: bool, use_scl: bool):
    """Assemble the full training objective for one batch.

    ``outputs`` are full-context forwards, ``slice_outputs`` the matching
    slice forwards starting at ``slice_starts``. The pseudo-supervision term
    covers only items that actually went through mix-up; the contrastive
    term is weighted by the temperature unless overridden.

    Returns ``(loss, terms)`` with float components for logging.
    """
    y = np.array([ex.y for ex in examples])
    y_hat = ad.stack_scalars([o.y_hat for o in outputs])
    quality = utterance_quality_loss(y_hat, y, cfg)

    slice_terms = [
        slice_consistency_loss(o.x, o.q_hat, so.x, so.q_hat, l0)
        for o, so, l0 in zip(outputs, slice_outputs, slice_starts)
    ]
    consistency = ad.mul_const(_sum(slice_terms), 1.0 / len(slice_terms))

    loss = ad.add(quality, consistency)
    terms = {
        "quality": float(quality.data),
        "consistency": float(consistency.data),
        "pseudo": 0.0,
        "contrastive": 0.0,
    }

    if use_pseudo:
        pseudo_terms = [
            frame_supervision_loss(o.q_hat, ex.q_pseudo)
            for o, ex in zip(outputs, examples)
            if ex.mixup_applied
        ]
        if pseudo_terms:
            pseudo = ad.mul_const(_sum(pseudo_terms), 1.0 / len(pseudo_terms))
            terms["pseudo"] = float(pseudo.data)
            loss = ad.add(loss, pseudo)

    if use_scl:
        z = ad.concat_rows([o.z_tilde for o in outputs])
        labels = np.concatenate([ex.labels for ex in examples])
        utt_index = np.concatenate(
            [np.full(len(ex.labels), i) for i, ex in enumerate(examples)]
        )
        frame_index = np.concatenate([np.arange(len(ex.labels)) for ex in examples])
        scl, scl_stats = supervised_contrastive_loss(z, labels, utt_index, frame_index, cfg)
        terms["contrastive"] = float(scl.data)
        terms.update({f"scl_{k}": v for k, v in scl_stats.items()})
        if scl_stats["contributing_anchors"] > 0:
            loss = ad.add(loss, ad.mul_const(scl, cfg.contrastive_weight))

    terms["total"] = float(loss.data)
    return loss, terms


def _sum(tensors):
    acc = tensors[0]
    for t in tensors[1:]:
        acc = ad.add(acc, t)
    return acc
