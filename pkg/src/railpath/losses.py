"""Training losses as plain array operations.

Nothing here computes gradients; an external training harness can call these
on numpy grids (or port them) and compare against the same oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import ValidationError

PROB_FLOOR = 1e-12

# Multi-task weights of the two regression designs.
REG_WEIGHT_1CH = 0.4
DIST_WEIGHT_3CH = 0.2
PROB_WEIGHT_3CH = 20.0


@dataclass(frozen=True)
class LossConfig:
    t_k: float = 0.3
    k: int = 8192
    batch_size: int = 1

    def __post_init__(self) -> None:
        if self.t_k < 0:
            raise ValidationError("t_k must be >= 0")
        if self.k < 1:
            raise ValidationError("K must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")


def _same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-2:] != b.shape[-2:]:
        raise ValidationError(f"grid dims mismatch: {a.shape[-2:]} vs {b.shape[-2:]}")


def pixel_ce(prob: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-pixel cross-entropy ``-log p(true class)`` for ``(C, H, W)`` probabilities."""
    prob = np.asarray(prob, dtype=np.float64)
    labels = np.asarray(labels)
    if prob.ndim != 3:
        raise ValidationError("class probabilities must have shape (C, H, W)")
    _same_dims(prob, labels)
    if not np.allclose(prob.sum(axis=0), 1.0, rtol=0, atol=1e-4):
        raise ValidationError("per-pixel class probabilities must sum to 1")
    if labels.min() < 0 or labels.max() >= prob.shape[0]:
        raise ValidationError("label id outside the probability channels")
    p_true = np.take_along_axis(prob, labels[None].astype(np.int64), axis=0)[0]
    return -np.log(np.maximum(p_true, PROB_FLOOR))


def bootstrapped_ce(loss_grid: np.ndarray, cfg: LossConfig = LossConfig()) -> float:
    """Bootstrapped cross-entropy over one image's per-pixel losses.

    Pixels with loss above ``t_k`` are kept. If fewer than ``K`` qualify, the
    ``K`` largest losses are kept instead, together with every pixel tied
    with the K-th value. The kept sum is normalized by ``K`` in both cases.
    """
    losses = np.asarray(loss_grid, dtype=np.float64).ravel()
    if cfg.k > losses.size:
        raise ValidationError(f"K={cfg.k} exceeds the pixel count {losses.size}")
    if (losses < 0).any():
        raise ValidationError("per-pixel losses must be >= 0")
    keep = losses > cfg.t_k
    if np.count_nonzero(keep) < cfg.k:
        kth = np.partition(losses, losses.size - cfg.k)[losses.size - cfg.k]
        keep = losses >= kth
    return float(losses[keep].sum() / cfg.k)


def l1_loss(est: np.ndarray, gt: np.ndarray) -> float:
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValidationError(f"grid dims mismatch: {est.shape} vs {gt.shape}")
    return float(np.abs(gt - est).sum() / gt.size)


def total_loss_1ch(per_image: Sequence[tuple[float, float]]) -> float:
    """Batch loss of the 1-channel design from ``(reg, seg)`` pairs."""
    if not per_image:
        raise ValidationError("empty batch")
    return math.fsum(REG_WEIGHT_1CH * reg + seg for reg, seg in per_image) / len(per_image)


def total_loss_3ch(per_image: Sequence[tuple[float, float, float]]) -> float:
    """Batch loss of the 3-channel design from ``(dist, prob, seg)`` triples."""
    if not per_image:
        raise ValidationError("empty batch")
    terms = (DIST_WEIGHT_3CH * dist + PROB_WEIGHT_3CH * prob + seg for dist, prob, seg in per_image)
    return math.fsum(terms) / len(per_image)
