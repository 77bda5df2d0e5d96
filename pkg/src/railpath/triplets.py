"""Decode regression heatmaps into triplets (left rail, center, right rail per row)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridDims, Mode, Triplet, ValidationError


@dataclass(frozen=True)
class PeakConfig:
    nms_radius: int = 2
    min_peak_value: float = 1.0

    def __post_init__(self) -> None:
        if self.nms_radius < 1:
            raise ValidationError("nms_radius must be >= 1")
        if self.min_peak_value < 0:
            raise ValidationError("min_peak_value must be >= 0")


DEFAULT_PEAKS_1CH = PeakConfig(2, 1.0)
DEFAULT_PEAKS_3CH = PeakConfig(2, 0.5)


@dataclass(frozen=True, slots=True)
class Peak:
    y: int
    x: int
    value: float


def peak_mask(grid: np.ndarray, cfg: PeakConfig) -> np.ndarray:
    """Per-row 1D non-maximum suppression over a whole grid.

    A column is a peak when its value is >= ``min_peak_value`` and > 0, is
    strictly greater than every value up to ``nms_radius`` columns to its left
    and at least as large as every value up to ``nms_radius`` to its right.
    The strict left test keeps only the leftmost column of a plateau.
    """
    grid = np.asarray(grid, dtype=np.float32)
    if grid.ndim == 1:
        grid = grid[None, :]
    mask = (grid >= cfg.min_peak_value) & (grid > 0)
    for d in range(1, min(cfg.nms_radius, grid.shape[1] - 1) + 1):
        mask[:, d:] &= grid[:, d:] > grid[:, :-d]
        mask[:, :-d] &= grid[:, :-d] >= grid[:, d:]
    return mask


def detect_row_peaks(hm: np.ndarray, y: int, cfg: PeakConfig = DEFAULT_PEAKS_1CH) -> list[Peak]:
    row = np.asarray(hm, dtype=np.float32)[y]
    xs = np.nonzero(peak_mask(row, cfg)[0])[0]
    return [Peak(y, int(x), float(row[x])) for x in xs]


def extract_triplets_1ch(center_hm: np.ndarray, cfg: PeakConfig = DEFAULT_PEAKS_1CH) -> list[Triplet]:
    """Peaks give track centers; peak values give the equal distance to both rails.

    Rails falling outside the image are clamped to the border and the
    triplet is flagged ``clamped`` rather than dropped.
    """
    hm = np.asarray(center_hm, dtype=np.float32)
    ys, xs = np.nonzero(peak_mask(hm, cfg))
    vals = hm[ys, xs].astype(np.float64)
    right_edge = hm.shape[1] - 1
    out = []
    for y, x, v in zip(ys.tolist(), xs.tolist(), vals.tolist()):
        xl, xr = x - v, x + v
        clamped = xl < 0 or xr > right_edge
        if clamped:
            xl, xr = max(xl, 0.0), min(xr, float(right_edge))
        out.append(Triplet(y, xl, float(x), xr, Mode.ONE_CHANNEL, clamped))
    return out


def extract_triplets_3ch(
    prob: np.ndarray,
    dist_left: np.ndarray,
    dist_right: np.ndarray,
    cfg: PeakConfig = DEFAULT_PEAKS_3CH,
) -> list[Triplet]:
    """Probability peaks give centers; the distance maps are read at each peak.

    In shared rail areas the distance maps hold only one track's values, so
    the decoded rails may belong to a different track than the peak.
    """
    prob = np.asarray(prob, dtype=np.float32)
    dist_left = np.asarray(dist_left, dtype=np.float32)
    dist_right = np.asarray(dist_right, dtype=np.float32)
    if not (prob.shape == dist_left.shape == dist_right.shape):
        raise ValidationError("3-channel heatmaps must share dims")
    ys, xs = np.nonzero(peak_mask(prob, cfg))
    right_edge = prob.shape[1] - 1
    out = []
    for y, x in zip(ys.tolist(), xs.tolist()):
        xl = x - max(float(dist_left[y, x]), 0.0)
        xr = x + max(float(dist_right[y, x]), 0.0)
        clamped = xl < 0 or xr > right_edge
        if clamped:
            xl, xr = max(xl, 0.0), min(xr, float(right_edge))
        out.append(Triplet(y, xl, float(x), xr, Mode.THREE_CHANNEL, clamped))
    return out


def max_peaks_per_row(dims: GridDims, cfg: PeakConfig) -> int:
    return -(-dims.width // (cfg.nms_radius + 1))
