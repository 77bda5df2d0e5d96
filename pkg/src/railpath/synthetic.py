"""Parametric rail scenes with exact ground truth, plus heatmap perturbation.

Geometry: every track follows a shared quadratic center line
``c(y) = W/2 + k * u**2`` with ``u = (H - 1 - y) / (H - 1)`` (0 at the bottom
row, 1 at the top) and ``k`` drawn uniformly from ``[-curvature, curvature]``.
The rail-area width narrows linearly from ``gauge_bottom`` to ``gauge_top``;
lateral offsets between tracks shrink in the same proportion.

Each switch adds a branch leaving the ego track at a row in the middle 60% of
the image. The branch drifts sideways at ``slope`` px/row until it reaches
its parallel spacing, after which it runs parallel to the ego track.
Branches alternate sides; on one side, lower branches sit farther out so
branches never cross. Distractor tracks run parallel beyond every branch,
starting at least 0.3 * W from the bottom center. Tracks are cut at the
first row where a rail would leave the image.

All randomness comes from :class:`railpath.rng.SplitMix64`, consumed in a
fixed order: curvature, then per switch (row, side), then the branch slope,
then per distractor an extra offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GridDims, Mode, RailPolyline, Scene, Track, Triplet, ValidationError, pixel_column
from .rng import SplitMix64
from .tree import EgoPath

BRANCH_SPACING = 1.3  # parallel spacing between neighbouring tracks, in bottom gauges


class GenerationInfeasible(ValueError):
    """The requested tracks cannot be laid out inside the image."""


@dataclass(frozen=True)
class SceneSpec:
    dims: GridDims
    n_switches: int = 0
    curvature: float = 0.0
    gauge_bottom: float = 120.0
    gauge_top: float = 16.0
    distractor_tracks: int = 0
    seed: int = 0
    integer_rails: bool = False

    def __post_init__(self) -> None:
        if self.n_switches < 0 or self.distractor_tracks < 0:
            raise ValidationError("switch and distractor counts must be >= 0")
        if self.curvature < 0:
            raise ValidationError("curvature is a magnitude and must be >= 0")
        if self.gauge_top < 2:
            raise ValidationError("gauge_top must be >= 2 px")
        if self.gauge_top > self.gauge_bottom:
            raise ValidationError("gauge_top must not exceed gauge_bottom")


@dataclass(frozen=True)
class NoiseSpec:
    value_sigma: float = 0.0
    jitter_sigma: float = 0.0
    dropout_rows: float = 0.0

    def __post_init__(self) -> None:
        if self.value_sigma < 0 or self.jitter_sigma < 0:
            raise ValidationError("noise sigmas must be >= 0")
        if not 0 <= self.dropout_rows <= 1:
            raise ValidationError("dropout_rows must lie in [0, 1]")


# One route is a list of (track id, top row, bottom row) pieces, bottom piece first.
Route = list[tuple[int, int, int]]


@dataclass(frozen=True)
class SyntheticFixture:
    spec: SceneSpec
    scene: Scene
    routes: list[Route]
    distractor_ids: frozenset[int] = field(default_factory=frozenset)
    switch_rows: tuple[int, ...] = ()


def _cut_inside(rows: np.ndarray, left: np.ndarray, right: np.ndarray, width: int):
    """Keep rows from the bottom of the run up to the first out-of-image rail."""
    bad = (left < 0) | (right > width - 1)
    # rows are ordered bottom-up here
    stop = np.argmax(bad) if bad.any() else rows.size
    return rows[:stop], left[:stop], right[:stop]


def _make_track(track_id: int, rows, center, gauge, width: int, integer: bool):
    left = center - gauge / 2.0
    right = center + gauge / 2.0
    rows, left, right = _cut_inside(rows, left, right, width)
    if rows.size < 2:
        return None
    if integer:
        left = pixel_column(left).astype(np.float64)
        right = pixel_column(right).astype(np.float64)
    return Track(
        track_id,
        RailPolyline(tuple(zip(left.tolist(), rows.astype(np.float64).tolist()))),
        RailPolyline(tuple(zip(right.tolist(), rows.astype(np.float64).tolist()))),
    )


def generate_fixture(spec: SceneSpec) -> SyntheticFixture:
    dims = spec.dims
    w, h = dims.width, dims.height
    rng = SplitMix64(spec.seed)
    rows = np.arange(h - 1, -1, -1, dtype=np.int64)  # bottom-up
    u = (h - 1 - rows) / max(h - 1, 1)
    k = rng.uniform(1, -spec.curvature, spec.curvature)[0]
    center = w / 2.0 + k * u**2
    gauge = spec.gauge_bottom + (spec.gauge_top - spec.gauge_bottom) * u
    scale = gauge / spec.gauge_bottom

    ego = _make_track(0, rows, center, gauge, w, spec.integer_rails)
    if ego is None or ego.left.ys.max() != h - 1:
        raise GenerationInfeasible("the ego track does not fit at the bottom of the image")
    tracks = [ego]
    routes: list[Route] = [[(0, int(ego.left.ys.min()), h - 1)]]

    # switch rows: one random row per equal slot of the middle 60%
    n = spec.n_switches
    switches = []
    for i in range(n):
        lo = 0.2 + 0.6 * i / n
        us = rng.uniform(1, lo, lo + 0.6 / n)[0]
        side = rng.choice_sign() if i == 0 else -switches[-1][1]
        switches.append((int(round((h - 1) * (1 - us))), side))
    slope = rng.uniform(1, 0.6, 1.0)[0]

    outer: dict[int, float] = {1: 0.0, -1: 0.0}
    for side in (1, -1):
        mine = [s for s in switches if s[1] == side]
        # lower switches (larger row) first, sitting farthest out
        mine.sort(key=lambda s: -s[0])
        for rank, (y_s, _) in enumerate(mine):
            spacing = BRANCH_SPACING * spec.gauge_bottom * (len(mine) - rank)
            outer[side] = max(outer[side], spacing)
    switch_rows = []
    for i, (y_s, side) in enumerate(switches):
        same = sorted((s for s in switches if s[1] == side), key=lambda s: -s[0])
        rank = same.index((y_s, side))
        spacing = BRANCH_SPACING * spec.gauge_bottom * (len(same) - rank)
        sel = rows <= y_s
        drift = np.minimum(slope * (y_s - rows[sel]), spacing * scale[sel])
        branch = _make_track(i + 1, rows[sel], center[sel] + side * drift, gauge[sel], w, spec.integer_rails)
        if branch is None:
            raise GenerationInfeasible(f"switch {i} at row {y_s} leaves no room for its branch")
        tracks.append(branch)
        routes.append([(0, y_s + 1, h - 1), (i + 1, int(branch.left.ys.min()), y_s)])
        switch_rows.append(y_s)

    distractor_ids = set()
    side = rng.choice_sign() if spec.distractor_tracks else 1
    for j in range(spec.distractor_tracks):
        base = max(0.3 * w, outer[side] + BRANCH_SPACING * spec.gauge_bottom)
        offset = base + rng.uniform(1, 0.0, 0.05 * w)[0]
        outer[side] = offset
        tid = n + 1 + j
        track = _make_track(tid, rows, center + side * offset * scale, gauge, w, spec.integer_rails)
        if track is None or track.left.ys.max() != h - 1:
            raise GenerationInfeasible(f"distractor {j} does not fit at {offset:.1f} px from the ego track")
        tracks.append(track)
        distractor_ids.add(tid)
        side = -side

    scene = Scene(dims, tuple(tracks))
    _check_distractors(scene, distractor_ids)
    return SyntheticFixture(spec, scene, routes, frozenset(distractor_ids), tuple(switch_rows))


def _check_distractors(scene: Scene, distractor_ids: set[int]) -> None:
    spans: dict[int, dict[int, tuple[float, float]]] = {}
    for t in scene.tracks:
        r, xl, xr = t.rows(scene.dims)
        spans[t.id] = {int(y): (a, b) for y, a, b in zip(r, xl, xr)}
    for d in distractor_ids:
        for t in scene.tracks:
            if t.id in distractor_ids:
                continue
            for y, (a, b) in spans[d].items():
                other = spans[t.id].get(y)
                if other and a <= other[1] and other[0] <= b:
                    raise GenerationInfeasible(f"distractor {d} overlaps track {t.id} at row {y}")


def generate_scene(spec: SceneSpec) -> Scene:
    return generate_fixture(spec).scene


def route_path(scene: Scene, route: Route) -> EgoPath:
    """Ground-truth ego-path of a route: rasterized rails, bottom row first."""
    triplets = []
    for track_id, top, bottom in route:
        rows, xl, xr = scene.track(track_id).rows(scene.dims)
        sel = (rows >= top) & (rows <= bottom)
        for y, a, b in zip(rows[sel][::-1].tolist(), xl[sel][::-1].tolist(), xr[sel][::-1].tolist()):
            triplets.append(Triplet(int(y), a, (a + b) / 2.0, b, Mode.ONE_CHANNEL))
    return EgoPath(tuple(triplets))


def fixture_paths(fixture: SyntheticFixture) -> list[EgoPath]:
    return [route_path(fixture.scene, r) for r in fixture.routes]


def standard_fixture_grid(dims: GridDims = GridDims(960, 540), seed: int = 0) -> list[SceneSpec]:
    """27 specs: switches {0,1,2} x curvature {none, mild, strong} x distractors {0,1,2}."""
    levels = (0.0, 0.1 * dims.width, 0.25 * dims.width)
    gauge_bottom = dims.width / 8.0
    gauge_top = max(2.0, dims.width / 60.0)
    specs = []
    for n_sw in (0, 1, 2):
        for ci, curv in enumerate(levels):
            for n_d in (0, 1, 2):
                specs.append(
                    SceneSpec(
                        dims,
                        n_switches=n_sw,
                        curvature=curv,
                        gauge_bottom=gauge_bottom,
                        gauge_top=gauge_top,
                        distractor_tracks=n_d,
                        seed=seed + 100 * n_sw + 10 * ci + n_d,
                    )
                )
    return specs


def perturb_heatmap(hm: np.ndarray, noise: NoiseSpec, seed: int) -> np.ndarray:
    """Row jitter, then additive Gaussian noise clamped at 0, then row dropout.

    Each row is shifted horizontally by its own Gaussian offset (linear
    interpolation, zero fill). Dropout zeroes ``round(dropout_rows * H)`` rows
    chosen at random.
    """
    out = np.asarray(hm, dtype=np.float64).copy()
    h, w = out.shape
    rng = SplitMix64(seed)
    if noise.jitter_sigma > 0:
        shifts = rng.normal(h) * noise.jitter_sigma
        cols = np.arange(w, dtype=np.float64)
        for y in range(h):
            out[y] = np.interp(cols - shifts[y], cols, out[y], left=0.0, right=0.0)
    if noise.value_sigma > 0:
        out = np.maximum(out + rng.normal(h * w).reshape(h, w) * noise.value_sigma, 0.0)
    n_drop = int(round(noise.dropout_rows * h))
    if n_drop:
        order = np.argsort(rng.uniform(h), kind="stable")
        out[order[:n_drop]] = 0.0
    return out.astype(np.float32)
