"""PNG overlays of extracted ego-paths.

Colors: ground-truth rail area blue, matched (TP) rail pixels green,
unmatched (FP) rail pixels red. Without a matching, rail pixels are drawn
white. Output is one overview image followed by one image per path.
"""
from __future__ import annotations

import io
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .evaluation import PathMatching, match_pixels, rail_pixels
from .geometry import GridDims, Scene, ValidationError
from .tree import EgoPath

BLUE = (0, 0, 255)
GREEN = (0, 255, 0)
RED = (255, 0, 0)
WHITE = (255, 255, 255)
AREA_ALPHA = 0.5


def _canvas(base: Optional[np.ndarray], dims: GridDims) -> np.ndarray:
    if base is None:
        return np.zeros((dims.height, dims.width, 3), dtype=np.uint8)
    img = np.asarray(base)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.shape[:2] != dims.shape or img.shape[2] != 3:
        raise ValidationError(f"canvas shape {img.shape} does not match {dims.width}x{dims.height} RGB")
    return img.astype(np.uint8, copy=True)


def _rail_area(scene: Scene) -> np.ndarray:
    area = np.zeros(scene.dims.shape, dtype=bool)
    cols = np.arange(scene.dims.width)
    for track in scene.tracks:
        rows, xl, xr = track.rows(scene.dims)
        area[rows] |= (cols[None, :] >= np.ceil(xl)[:, None]) & (cols[None, :] <= np.floor(xr)[:, None])
    return area


def _paint_area(img: np.ndarray, area: np.ndarray) -> None:
    blended = (1 - AREA_ALPHA) * img[area] + AREA_ALPHA * np.array(BLUE)
    img[area] = np.round(blended).astype(np.uint8)


def _put(img: np.ndarray, pix: np.ndarray, color: tuple[int, int, int]) -> None:
    if len(pix) == 0:
        return
    h, w = img.shape[:2]
    x, y = pix[:, 0], pix[:, 1]
    ok = (x >= 0) & (x < w) & (y >= 0) & (y < h)
    img[y[ok], x[ok]] = color


def _paint_path(img: np.ndarray, path: EgoPath, partner: Optional[EgoPath], radius: float, judged: bool) -> None:
    for side, est in enumerate(rail_pixels(path)):
        if not judged:
            _put(img, est, WHITE)
            continue
        if partner is None:
            _put(img, est, RED)
            continue
        hit = match_pixels(rail_pixels(partner)[side], est, radius) >= 0
        _put(img, est[~hit], RED)
        _put(img, est[hit], GREEN)


def _png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def render_overlay(
    dims: GridDims,
    paths: Sequence[EgoPath],
    gt: Optional[Scene] = None,
    matching: Optional[PathMatching] = None,
    radius: float = 5.0,
    canvas: Optional[np.ndarray] = None,
) -> list[bytes]:
    """Overview PNG with every path, then one PNG per path, in path order.

    ``matching`` must pair GT paths with exactly these ``paths``; ``radius``
    is the pixel vicinity used to color its rail pixels.
    """
    if gt is not None and gt.dims != dims:
        raise ValidationError("scene dims differ from the render dims")
    if matching is not None and len(matching.est) != len(paths):
        raise ValidationError("matching does not belong to these paths")
    base = _canvas(canvas, dims)
    if gt is not None:
        _paint_area(base, _rail_area(gt))
    partners: dict[int, EgoPath] = {}
    if matching is not None:
        partners = {ei: matching.gt[gi] for gi, ei, _ in matching.pairs}

    overview = base.copy()
    singles = []
    for i, path in enumerate(paths):
        single = base.copy()
        for img in (overview, single):
            _paint_path(img, path, partners.get(i), radius, matching is not None)
        singles.append(single)
    return [_png(overview)] + [_png(img) for img in singles]
