"""Domain types and rasterization primitives shared by every pipeline stage.

Image convention: ``y = 0`` is the top row and ``y = H - 1`` the bottom row.
Heatmaps and segmentation masks are plain numpy arrays of shape ``(H, W)``;
heatmaps are ``float32``, masks ``uint8`` holding one of the class ids below.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

BACKGROUND = 0
RAIL_TRACK = 1
RAIL_AREA = 2
N_CLASSES = 3


class ValidationError(ValueError):
    """An annotation, grid or config violates one of its invariants."""


@dataclass(frozen=True)
class GridDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValidationError(f"grid dims must be integers, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"grid dims must be >= 1, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def of(cls, grid: np.ndarray) -> "GridDims":
        h, w = grid.shape[-2:]
        return cls(int(w), int(h))


def check_heatmap(hm: np.ndarray, kind: str = "distance") -> np.ndarray:
    """Return ``hm`` as a float32 grid after checking the value invariants.

    ``kind`` is ``"distance"`` (values >= 0), ``"probability"`` (values in
    [0, 1]) or ``"any"`` (finite only).
    """
    grid = np.asarray(hm)
    if grid.ndim != 2 or grid.size == 0:
        raise ValidationError(f"heatmap must be a non-empty 2D grid, got shape {grid.shape}")
    grid = grid.astype(np.float32, copy=False)
    if not np.isfinite(grid).all():
        raise ValidationError("heatmap contains non-finite values")
    if kind in ("distance", "probability") and (grid < 0).any():
        raise ValidationError(f"{kind} heatmap contains negative values")
    if kind == "probability" and (grid > 1).any():
        raise ValidationError("probability heatmap contains values above 1")
    return grid


def check_seg_mask(mask: np.ndarray) -> np.ndarray:
    grid = np.asarray(mask)
    if grid.ndim != 2 or grid.size == 0:
        raise ValidationError(f"segmentation mask must be a non-empty 2D grid, got shape {grid.shape}")
    if np.issubdtype(grid.dtype, np.floating):
        if not np.isfinite(grid).all() or (grid != np.round(grid)).any():
            raise ValidationError("segmentation mask holds non-integer class ids")
    bad = (grid < 0) | (grid >= N_CLASSES)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise ValidationError(f"segmentation mask holds class id {grid[y, x]} at (x={x}, y={y})")
    return grid.astype(np.uint8)


@dataclass(frozen=True)
class RailPolyline:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValidationError(f"rail polyline needs at least 2 points, got {len(pts)}")
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValidationError("rail polyline holds a non-finite coordinate")
        dy = np.diff([p[1] for p in pts])
        if not ((dy > 0).all() or (dy < 0).all()):
            raise ValidationError("rail polyline y coordinates must be strictly monotone")

    @property
    def ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])


def raster_rows(poly: RailPolyline, dims: GridDims) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized form of :func:`rasterize_polyline`: ``(rows, xs)`` arrays, rows ascending."""
    ys, xs = poly.ys, poly.xs
    if ys[0] > ys[-1]:
        ys, xs = ys[::-1], xs[::-1]
    lo = max(math.ceil(ys[0]), 0)
    hi = min(math.floor(ys[-1]), dims.height - 1)
    if hi < lo:
        return np.empty(0, dtype=np.int64), np.empty(0)
    rows = np.arange(lo, hi + 1, dtype=np.int64)
    return rows, np.interp(rows, ys, xs)


def rasterize_polyline(poly: RailPolyline, dims: GridDims) -> dict[int, float]:
    """Map each integer row covered by ``poly`` (clamped to the image) to its interpolated x."""
    rows, xs = raster_rows(poly, dims)
    return {int(r): float(x) for r, x in zip(rows, xs)}


@dataclass(frozen=True)
class Track:
    id: int
    left: RailPolyline
    right: RailPolyline

    def rows(self, dims: GridDims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rows covered by both rails with the left and right rail x on each."""
        lr, lx = raster_rows(self.left, dims)
        rr, rx = raster_rows(self.right, dims)
        rows, li, ri = np.intersect1d(lr, rr, assume_unique=True, return_indices=True)
        return rows, lx[li], rx[ri]


def rail_row_span(track: Track, y: int, dims: GridDims) -> Optional[tuple[float, float]]:
    left = rasterize_polyline(track.left, dims).get(y)
    right = rasterize_polyline(track.right, dims).get(y)
    if left is None or right is None:
        return None
    return left, right


@dataclass(frozen=True)
class Scene:
    dims: GridDims
    tracks: tuple[Track, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tracks", tuple(self.tracks))
        self.validate()

    def validate(self) -> None:
        seen: set[int] = set()
        w, h = self.dims.width, self.dims.height
        for track in self.tracks:
            if track.id in seen:
                raise ValidationError(f"duplicate track id {track.id}")
            seen.add(track.id)
            for side, poly in (("left", track.left), ("right", track.right)):
                for x, y in poly.points:
                    if not (0 <= x < w and 0 <= y < h):
                        raise ValidationError(
                            f"track {track.id}: {side} rail point ({x}, {y}) lies outside the {w}x{h} image"
                        )
            rows, lx, rx = track.rows(self.dims)
            bad = np.nonzero(lx >= rx)[0]
            if bad.size:
                i = bad[0]
                raise ValidationError(
                    f"track {track.id}: left rail x={lx[i]:g} is not left of right rail x={rx[i]:g} at row {rows[i]}"
                )

    def track(self, track_id: int) -> Track:
        for t in self.tracks:
            if t.id == track_id:
                return t
        raise KeyError(track_id)


class Mode(str, enum.Enum):
    ONE_CHANNEL = "one_channel"
    THREE_CHANNEL = "three_channel"


@dataclass(frozen=True, slots=True)
class Triplet:
    """Left rail, track center and right rail x on one image row."""

    y: int
    x_left: float
    x_center: float
    x_right: float
    mode: Mode = Mode.ONE_CHANNEL
    clamped: bool = False

    def __post_init__(self) -> None:
        if not (self.x_left <= self.x_center <= self.x_right):
            raise ValidationError(
                f"triplet at row {self.y} is out of order: {self.x_left}, {self.x_center}, {self.x_right}"
            )

    @property
    def width(self) -> float:
        return self.x_right - self.x_left


def pixel_column(x: float | np.ndarray) -> int | np.ndarray:
    """Nearest integer column, rounding halves up (the only rounding rule used)."""
    if isinstance(x, np.ndarray):
        return np.floor(x + 0.5).astype(np.int64)
    return int(math.floor(x + 0.5))


def triplets_as_array(triplets: Sequence[Triplet] | Iterable[Triplet]) -> np.ndarray:
    """``(n, 4)`` float array of ``[y, x_left, x_center, x_right]`` rows."""
    data = [(t.y, t.x_left, t.x_center, t.x_right) for t in triplets]
    return np.array(data, dtype=np.float64).reshape(-1, 4)
