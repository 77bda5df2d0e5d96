"""Ego-path extraction for rail tracks from regression heatmaps.

Heatmaps are decoded into per-row triplets (left rail, center, right rail),
grouped into track segments, linked into a path tree whose root-to-leaf
routes are the possible ego-paths, and optionally refined with a
segmentation mask and rail polynomials.
"""
from .evaluation import MatchConfig, MatchStats, match_paths, miou, path_level_metrics, pixel_level_metrics
from .geometry import GridDims, Mode, RailPolyline, Scene, Track, Triplet, ValidationError
from .gt import build_3ch_heatmaps, build_center_heatmap, build_gt_bundle, build_seg_mask
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .synthetic import GenerationInfeasible, NoiseSpec, SceneSpec, generate_fixture, generate_scene
from .tree import EgoPath, NoStartPath, PathTree, build_path_tree, enumerate_ego_paths

__version__ = "0.1.0"

__all__ = [
    "EgoPath",
    "GenerationInfeasible",
    "GridDims",
    "MatchConfig",
    "MatchStats",
    "Mode",
    "NoStartPath",
    "NoiseSpec",
    "PathTree",
    "PipelineConfig",
    "PipelineResult",
    "RailPolyline",
    "Scene",
    "SceneSpec",
    "Track",
    "Triplet",
    "ValidationError",
    "build_3ch_heatmaps",
    "build_center_heatmap",
    "build_gt_bundle",
    "build_path_tree",
    "build_seg_mask",
    "enumerate_ego_paths",
    "generate_fixture",
    "generate_scene",
    "match_paths",
    "miou",
    "path_level_metrics",
    "pixel_level_metrics",
    "run_pipeline",
]
