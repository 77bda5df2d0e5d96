"""End-to-end post-processing: heatmaps -> triplets -> segments -> tree -> paths."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .evaluation import MatchConfig, aggregate, match_paths, miou, path_level_metrics, pixel_level_metrics
from .geometry import GridDims, Scene, Triplet, ValidationError, check_heatmap, check_seg_mask
from .gt import build_center_heatmap
from .refine import FittedPath, SnapConfig, fit_rail_polynomials, snap_to_segmentation
from .segments import ClusterConfig, TrackSegment, cluster_into_segments
from .tree import EgoPath, PathTree, TreeConfig, build_path_tree, enumerate_ego_paths, filter_paths
from .triplets import PeakConfig, extract_triplets_1ch, extract_triplets_3ch

REFERENCE_WIDTH = 960


@dataclass(frozen=True)
class PipelineConfig:
    peak: PeakConfig = PeakConfig(2, 1.0)
    peak_3ch: PeakConfig = PeakConfig(2, 0.5)
    cluster: ClusterConfig = ClusterConfig()
    tree: TreeConfig = TreeConfig()
    snap: SnapConfig = SnapConfig()
    match: MatchConfig = MatchConfig()
    fit_degree: int = 3

    def __post_init__(self) -> None:
        if self.fit_degree < 1:
            raise ValidationError("fit degree must be >= 1")

    @classmethod
    def for_dims(cls, dims: GridDims, **overrides: Any) -> "PipelineConfig":
        """Defaults tuned at 960 px width, length thresholds scaled to ``dims.width``."""
        s = dims.width / REFERENCE_WIDTH
        h = max(1, round(10 * s))
        cfg = cls(
            cluster=ClusterConfig(h=h, tau_point=max(2.0, 8.0 * s)),
            tree=TreeConfig(tau_seg=max(3.0, 12.0 * s), max_gap=2 * h, min_segment_rows=max(1, round(0.3 * h))),
            match=MatchConfig(radius=max(1.0, 5.0 * s)),
        )
        return cfg.merged(overrides) if overrides else cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return cls().merged(data)

    def merged(self, data: dict) -> "PipelineConfig":
        """Copy with nested overrides, e.g. ``{"tree": {"tau_seg": 20}}``."""
        kwargs = {}
        for f in dataclasses.fields(self):
            if f.name not in data:
                continue
            current = getattr(self, f.name)
            value = data[f.name]
            if dataclasses.is_dataclass(current):
                if not isinstance(value, dict):
                    raise ValidationError(f"config section {f.name!r} must be an object")
                unknown = set(value) - {g.name for g in dataclasses.fields(current)}
                if unknown:
                    raise ValidationError(f"unknown keys in config section {f.name!r}: {sorted(unknown)}")
                value = dataclasses.replace(current, **value)
            kwargs[f.name] = value
        unknown = set(data) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        try:
            return dataclasses.replace(self, **kwargs)
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc


@dataclass
class PipelineResult:
    dims: GridDims
    triplets: list[Triplet]
    segments: list[list[TrackSegment]]
    tree: PathTree
    raw_paths: list[EgoPath]
    paths: list[EgoPath]
    fits: list[Optional[FittedPath]] = field(default_factory=list)


def run_pipeline(
    center: Optional[np.ndarray] = None,
    *,
    prob: Optional[np.ndarray] = None,
    dist_left: Optional[np.ndarray] = None,
    dist_right: Optional[np.ndarray] = None,
    seg: Optional[np.ndarray] = None,
    cfg: Optional[PipelineConfig] = None,
) -> PipelineResult:
    """Run the post-processing on a 1-channel heatmap or on the 3-channel maps.

    With ``seg`` given, rails are snapped to the rail-track class before the
    polynomial fit. Raises :class:`railpath.tree.NoStartPath` when no track
    starts near the bottom center.
    """
    if center is not None and any(m is not None for m in (prob, dist_left, dist_right)):
        raise ValidationError("give either a center heatmap or the 3-channel heatmaps, not both")
    if center is not None:
        center = check_heatmap(center)
        dims = GridDims.of(center)
    elif prob is not None and dist_left is not None and dist_right is not None:
        prob = check_heatmap(prob, "probability")
        dims = GridDims.of(prob)
    else:
        raise ValidationError("need a center heatmap or all three 3-channel heatmaps")
    cfg = cfg or PipelineConfig.for_dims(dims)
    if seg is not None:
        seg = check_seg_mask(seg)
        if seg.shape != dims.shape:
            raise ValidationError(f"segmentation mask dims {seg.shape} differ from heatmap dims {dims.shape}")

    if center is not None:
        triplets = extract_triplets_1ch(center, cfg.peak)
    else:
        triplets = extract_triplets_3ch(prob, dist_left, dist_right, cfg.peak_3ch)
    segments = cluster_into_segments(triplets, cfg.cluster, dims)
    tree = build_path_tree(segments, cfg.tree, dims)
    raw = enumerate_ego_paths(tree)
    paths = filter_paths(raw, cfg.tree, dims.height)
    if seg is not None:
        paths = [snap_to_segmentation(p, seg, cfg.snap) for p in paths]
    fits = [fit_rail_polynomials(p, cfg.fit_degree) if len(p) >= 2 else None for p in paths]
    return PipelineResult(dims, triplets, segments, tree, raw, paths, fits)


def ground_truth_paths(scene: Scene, cfg: Optional[PipelineConfig] = None) -> list[EgoPath]:
    """Ego-paths of an annotation, obtained by feeding its exact heatmap to the post-processing."""
    return run_pipeline(build_center_heatmap(scene), cfg=cfg).paths


def evaluate_paths(
    gt: list[EgoPath],
    est: list[EgoPath],
    match: MatchConfig,
    pred_seg: Optional[np.ndarray] = None,
    gt_seg: Optional[np.ndarray] = None,
) -> dict:
    """Metrics of one image at all three levels, plus mIoU when both masks are given."""
    matching = match_paths(gt, est, match)
    row = {
        "n_gt": len(gt),
        "n_est": len(est),
        "matched_pairs": len(matching.pairs),
        "tp_pixel": pixel_level_metrics(matching, "tp_pixel").as_dict(),
        "all_pixel": pixel_level_metrics(matching, "all_pixel").as_dict(),
        "path": path_level_metrics(matching).as_dict(),
        "miou": None,
    }
    if pred_seg is not None and gt_seg is not None:
        row["miou"] = miou(pred_seg, gt_seg)
    return row


def summarize(rows: list[dict]) -> dict:
    """Micro and macro averages per level over per-image metric rows."""
    from .evaluation import MatchStats

    out: dict[str, Any] = {}
    for level in ("tp_pixel", "all_pixel", "path"):
        stats = [MatchStats(r[level]["tp"], r[level]["fp"], r[level]["fn"]) for r in rows]
        out[level] = aggregate(stats)
    ious = [r["miou"] for r in rows if r.get("miou") is not None]
    out["miou"] = {"mean": float(np.mean(ious)) if ious else None, "n_images": len(ious)}
    out["matched_pairs"] = sum(r["matched_pairs"] for r in rows)
    return out
