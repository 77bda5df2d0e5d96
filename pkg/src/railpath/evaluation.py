"""Three-level path evaluation (TP-pixel, all-pixel, path) and segmentation mIoU."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import cKDTree

from .geometry import ValidationError, pixel_column
from .tree import EgoPath


@dataclass(frozen=True)
class MatchConfig:
    radius: float = 5.0
    m_min: float = 0.5

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValidationError("match radius must be >= 0")
        if not 0 <= self.m_min <= 1:
            raise ValidationError("m_min must lie in [0, 1]")


@dataclass(frozen=True)
class MatchStats:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    def __add__(self, other: "MatchStats") -> "MatchStats":
        return MatchStats(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


ZERO = MatchStats(0, 0, 0)


@dataclass
class PathMatching:
    pairs: list[tuple[int, int, MatchStats]]
    unmatched_gt: list[int]
    unmatched_est: list[int]
    gt: Sequence[EgoPath] = field(default=(), repr=False)
    est: Sequence[EgoPath] = field(default=(), repr=False)


def rail_pixels(path: EgoPath) -> tuple[np.ndarray, np.ndarray]:
    """Integer ``(x, y)`` pixels of the left and right rail of a path."""
    if not path.triplets:
        empty = np.empty((0, 2), dtype=np.int64)
        return empty, empty
    arr = np.array([(t.x_left, t.x_right, t.y) for t in path.triplets], dtype=np.float64)
    ys = arr[:, 2].astype(np.int64)
    left = np.stack([pixel_column(arr[:, 0]), ys], axis=1)
    right = np.stack([pixel_column(arr[:, 1]), ys], axis=1)
    return left, right


def match_pixels(gt: np.ndarray, est: np.ndarray, r: float) -> np.ndarray:
    """Maximum one-to-one matching of pixels within Chebyshev distance ``r``.

    Returns, per estimated pixel, the index of its GT partner or -1.
    """
    if len(gt) == 0 or len(est) == 0:
        return np.full(len(est), -1, dtype=np.int64)
    pairs = cKDTree(est).sparse_distance_matrix(cKDTree(gt), r, p=np.inf, output_type="ndarray")
    if pairs.size == 0:
        return np.full(len(est), -1, dtype=np.int64)
    graph = csr_matrix(
        (np.ones(pairs.size, dtype=np.int8), (pairs["i"], pairs["j"])),
        shape=(len(est), len(gt)),
    )
    return maximum_bipartite_matching(graph, perm_type="column").astype(np.int64)


def rail_pixel_f1(gt: EgoPath, est: EgoPath, r: float) -> MatchStats:
    """Left and right rails are matched separately, each pixel used at most once."""
    tp = n_gt = n_est = 0
    for g, e in zip(rail_pixels(gt), rail_pixels(est)):
        tp += int((match_pixels(g, e, r) >= 0).sum())
        n_gt += len(g)
        n_est += len(e)
    return MatchStats(tp, n_est - tp, n_gt - tp)


def greedy_match(f1: np.ndarray, m_min: float) -> list[tuple[int, int]]:
    """Repeatedly take the highest remaining F1 >= m_min; ties to lower gt, then est index."""
    f1 = np.asarray(f1, dtype=np.float64)
    if f1.size == 0:
        return []
    order = sorted(
        ((f1[i, j], i, j) for i in range(f1.shape[0]) for j in range(f1.shape[1]) if f1[i, j] >= m_min),
        key=lambda c: (-c[0], c[1], c[2]),
    )
    used_gt: set[int] = set()
    used_est: set[int] = set()
    pairs = []
    for _, i, j in order:
        if i in used_gt or j in used_est:
            continue
        used_gt.add(i)
        used_est.add(j)
        pairs.append((i, j))
    return pairs


def match_paths(gt: Sequence[EgoPath], est: Sequence[EgoPath], cfg: MatchConfig = MatchConfig()) -> PathMatching:
    stats = [[rail_pixel_f1(g, e, cfg.radius) for e in est] for g in gt]
    f1 = np.array([[s.f1 for s in row] for row in stats]).reshape(len(gt), len(est))
    pairs = greedy_match(f1, cfg.m_min)
    matched_gt = {i for i, _ in pairs}
    matched_est = {j for _, j in pairs}
    return PathMatching(
        pairs=[(i, j, stats[i][j]) for i, j in pairs],
        unmatched_gt=[i for i in range(len(gt)) if i not in matched_gt],
        unmatched_est=[j for j in range(len(est)) if j not in matched_est],
        gt=gt,
        est=est,
    )


def _n_rail_pixels(path: EgoPath) -> int:
    return 2 * len(path.triplets)


def pixel_level_metrics(matching: PathMatching, mode: str = "tp_pixel") -> MatchStats:
    """``tp_pixel`` counts matched pairs only; ``all_pixel`` adds unmatched paths as FN/FP."""
    if mode not in ("tp_pixel", "all_pixel"):
        raise ValueError(f"unknown pixel-level mode {mode!r}")
    total = ZERO
    for _, _, s in matching.pairs:
        total = total + s
    if mode == "all_pixel":
        fn = sum(_n_rail_pixels(matching.gt[i]) for i in matching.unmatched_gt)
        fp = sum(_n_rail_pixels(matching.est[j]) for j in matching.unmatched_est)
        total = total + MatchStats(0, fp, fn)
    return total


def path_level_metrics(matching: PathMatching) -> MatchStats:
    return MatchStats(len(matching.pairs), len(matching.unmatched_est), len(matching.unmatched_gt))


def miou(pred: np.ndarray, gt: np.ndarray, n_classes: int = 3) -> float:
    """Mean IoU over the classes present in either mask."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"mask dims mismatch: {pred.shape} vs {gt.shape}")
    if max(pred.max(initial=0), gt.max(initial=0)) >= n_classes or min(pred.min(initial=0), gt.min(initial=0)) < 0:
        raise ValidationError("class id outside [0, n_classes)")
    ious = []
    for c in range(n_classes):
        p, g = pred == c, gt == c
        union = np.count_nonzero(p | g)
        if union:
            ious.append(np.count_nonzero(p & g) / union)
    return float(np.mean(ious)) if ious else 1.0


def aggregate(per_image: Sequence[MatchStats]) -> dict:
    """Micro average (summed counts) and macro average (mean of per-image ratios)."""
    micro = ZERO
    for s in per_image:
        micro = micro + s
    n = len(per_image)
    macro = {
        "precision": float(np.mean([s.precision for s in per_image])) if n else 1.0,
        "recall": float(np.mean([s.recall for s in per_image])) if n else 1.0,
        "f1": float(np.mean([s.f1 for s in per_image])) if n else 1.0,
    }
    return {"micro": micro.as_dict(), "macro": macro}
