"""Group track points into track segments inside horizontal sub-regions."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .geometry import GridDims, Triplet, ValidationError


@dataclass(frozen=True)
class SubregionSpec:
    index: int
    y_top: int
    y_bottom: int

    @property
    def height(self) -> int:
        return self.y_bottom - self.y_top + 1

    def contains(self, y: int) -> bool:
        return self.y_top <= y <= self.y_bottom


@dataclass(frozen=True)
class ClusterConfig:
    h: int = 10
    tau_point: float = 8.0

    def __post_init__(self) -> None:
        if self.h < 1:
            raise ValidationError("sub-region height h must be >= 1")
        if self.tau_point <= 0:
            raise ValidationError("tau_point must be > 0")


@dataclass(eq=False)
class TrackSegment:
    subregion: int
    triplets: list[Triplet] = field(default_factory=list)

    @property
    def bottom(self) -> Triplet:
        return self.triplets[0]

    @property
    def top(self) -> Triplet:
        return self.triplets[-1]

    def __len__(self) -> int:
        return len(self.triplets)


def partition_rows(dims: GridDims, h: int) -> list[SubregionSpec]:
    """Split the rows into bands of height ``h``, bottom-most band first."""
    if h < 1:
        raise ValidationError("sub-region height h must be >= 1")
    out = []
    bottom = dims.height - 1
    index = 0
    while bottom >= 0:
        top = max(bottom - h + 1, 0)
        out.append(SubregionSpec(index, top, bottom))
        bottom = top - 1
        index += 1
    return out


def _cluster_band(rows: dict[int, list[Triplet]], index: int, tau: float) -> list[TrackSegment]:
    segments: list[TrackSegment] = []
    for y in sorted(rows, reverse=True):
        points = sorted(rows[y], key=lambda t: t.x_center)
        tips = [s.top.x_center for s in segments]
        claims: dict[int, tuple[float, int]] = {}
        for i, p in enumerate(points):
            best, best_d = -1, tau
            for j, tx in enumerate(tips):
                d = abs(p.x_center - tx)
                # strict < keeps the earliest segment on ties
                if d < best_d or (d == best_d and best < 0):
                    best, best_d = j, d
            if best < 0:
                continue
            held = claims.get(best)
            if held is None or best_d < held[0]:
                claims[best] = (best_d, i)
        winners = {i: j for j, (_, i) in claims.items()}
        for i, p in enumerate(points):
            j = winners.get(i)
            if j is None:
                segments.append(TrackSegment(index, [p]))
            else:
                segments[j].triplets.append(p)
    return segments


def cluster_into_segments(
    triplets: Iterable[Triplet],
    cfg: ClusterConfig,
    dims: GridDims,
) -> list[list[TrackSegment]]:
    """Bottom-up greedy clustering, one independent scan per sub-region.

    Each point joins the segment whose last point is horizontally nearest
    and within ``tau_point`` (ties go to the earliest segment). A segment
    takes at most one point per row: when several points prefer the same
    segment the nearest one wins (leftmost on ties) and the others start new
    segments. Returns one list per sub-region, bottom-most sub-region first.
    """
    bands = partition_rows(dims, cfg.h)
    per_band: list[dict[int, list[Triplet]]] = [defaultdict(list) for _ in bands]
    bottom = dims.height - 1
    for t in triplets:
        if not 0 <= t.y < dims.height:
            raise ValidationError(f"triplet row {t.y} outside the image")
        per_band[(bottom - t.y) // cfg.h][t.y].append(t)
    return [_cluster_band(rows, band.index, cfg.tau_point) for band, rows in zip(bands, per_band)]
