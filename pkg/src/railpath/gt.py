"""Ground-truth heatmaps and 3-class segmentation masks built from a Scene."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BACKGROUND, RAIL_AREA, RAIL_TRACK, Scene, pixel_column


@dataclass(frozen=True)
class GtBundle:
    center: np.ndarray
    prob3: np.ndarray
    dist_left: np.ndarray
    dist_right: np.ndarray
    seg: np.ndarray


def _rail_area_rows(track, dims):
    """Per covered row: distances of every column to the left and right rail.

    Returns ``(rows, d_left, d_right, inside)`` where the grids have shape
    ``(len(rows), W)`` and ``inside`` marks columns between the rails,
    rails included.
    """
    rows, xl, xr = track.rows(dims)
    cols = np.arange(dims.width, dtype=np.float64)
    d_left = cols[None, :] - xl[:, None]
    d_right = xr[:, None] - cols[None, :]
    inside = (d_left >= 0) & (d_right >= 0)
    return rows, d_left, d_right, inside


def build_center_heatmap(scene: Scene) -> np.ndarray:
    """1-channel ground truth: per pixel, the max over covering rail areas of min(d_L, d_R)."""
    dims = scene.dims
    out = np.zeros(dims.shape, dtype=np.float64)
    for track in scene.tracks:
        rows, d_left, d_right, inside = _rail_area_rows(track, dims)
        if rows.size == 0:
            continue
        value = np.where(inside, np.minimum(d_left, d_right), 0.0)
        out[rows] = np.maximum(out[rows], value)
    return out.astype(np.float32)


def build_3ch_heatmaps(scene: Scene) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Probability, left-distance and right-distance ground truths.

    Probabilities ramp linearly from 0 at each rail to 1 at the center and
    shared pixels keep the maximum. Distance maps are overwritten track by
    track in ascending id order, so in shared rail areas the largest id wins.
    That ambiguity is inherent to the 3-channel design and is kept on purpose.
    """
    dims = scene.dims
    prob = np.zeros(dims.shape, dtype=np.float64)
    dist_left = np.zeros(dims.shape, dtype=np.float64)
    dist_right = np.zeros(dims.shape, dtype=np.float64)
    for track in sorted(scene.tracks, key=lambda t: t.id):
        rows, d_left, d_right, inside = _rail_area_rows(track, dims)
        if rows.size == 0:
            continue
        half = (d_left + d_right)[:, :1] / 2.0
        p = np.where(inside, np.minimum(d_left, d_right) / half, 0.0)
        prob[rows] = np.maximum(prob[rows], p)
        dist_left[rows] = np.where(inside, d_left, dist_left[rows])
        dist_right[rows] = np.where(inside, d_right, dist_right[rows])
    return prob.astype(np.float32), dist_left.astype(np.float32), dist_right.astype(np.float32)


def build_seg_mask(scene: Scene, rail_halfwidth: int = 1) -> np.ndarray:
    """Reduced 3-class mask: background, rail-track, rail-area.

    Rail columns are rounded to the nearest pixel and widened by
    ``rail_halfwidth`` on each side; rail-track wins over rail-area.
    """
    if rail_halfwidth < 0:
        raise ValueError("rail_halfwidth must be >= 0")
    dims = scene.dims
    mask = np.full(dims.shape, BACKGROUND, dtype=np.uint8)
    cols = np.arange(dims.width)
    rail = np.zeros(dims.shape, dtype=bool)
    for track in scene.tracks:
        rows, xl, xr = track.rows(dims)
        if rows.size == 0:
            continue
        between = (cols[None, :] > xl[:, None]) & (cols[None, :] < xr[:, None])
        mask[rows] = np.where(between, RAIL_AREA, mask[rows])
        for xs in (xl, xr):
            c = pixel_column(xs)
            rail[rows] |= np.abs(cols[None, :] - c[:, None]) <= rail_halfwidth
    mask[rail] = RAIL_TRACK
    return mask


def build_gt_bundle(scene: Scene, rail_halfwidth: int = 1) -> GtBundle:
    prob, dl, dr = build_3ch_heatmaps(scene)
    return GtBundle(
        center=build_center_heatmap(scene),
        prob3=prob,
        dist_left=dl,
        dist_right=dr,
        seg=build_seg_mask(scene, rail_halfwidth),
    )
