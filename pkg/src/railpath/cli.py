"""Command line interface.

Commands work on *image directories*. An image directory holds some of::

    scene.json                              annotation
    center.tpeh                             1-channel heatmap
    prob.tpeh  dist_left.tpeh  dist_right.tpeh   3-channel heatmaps
    seg.tpeh                                3-class mask
    paths.json                              output of ``extract``

Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure,
3 no track found near the bottom center. With several images the highest
code seen is returned, after every image has been processed.
"""
from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import formats
from .evaluation import match_paths
from .geometry import GridDims, Mode, ValidationError
from .gt import build_gt_bundle, build_seg_mask
from .pipeline import PipelineConfig, evaluate_paths, ground_truth_paths, run_pipeline, summarize
from .render import render_overlay
from .synthetic import NoiseSpec, SceneSpec, generate_fixture, perturb_heatmap, standard_fixture_grid
from .tree import NoStartPath

log = logging.getLogger("railpath")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_NO_START = 3

SCENE = "scene.json"
CENTER = "center.tpeh"
PROB, DIST_LEFT, DIST_RIGHT = "prob.tpeh", "dist_left.tpeh", "dist_right.tpeh"
SEG = "seg.tpeh"
PATHS = "paths.json"

# flag dest -> (config section, field)
CONFIG_FLAGS = {
    "nms_radius": ("peak", "nms_radius"),
    "min_peak": ("peak", "min_peak_value"),
    "h": ("cluster", "h"),
    "tau_point": ("cluster", "tau_point"),
    "tau_seg": ("tree", "tau_seg"),
    "tau_start": ("tree", "tau_start"),
    "max_gap": ("tree", "max_gap"),
    "min_segment_rows": ("tree", "min_segment_rows"),
    "w_snap": ("snap", "w_snap"),
    "radius": ("match", "radius"),
    "m_min": ("match", "m_min"),
    "fit_degree": (None, "fit_degree"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors count as invalid input
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _code_for(exc: BaseException) -> int:
    if isinstance(exc, NoStartPath):
        return EXIT_NO_START
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_INVALID
    raise exc


def _guarded(fn: Callable[..., Any], *args: Any) -> tuple[int, Any]:
    """Run ``fn`` and turn expected failures into an exit code plus message."""
    try:
        return EXIT_OK, fn(*args)
    except (NoStartPath, OSError, ValueError) as exc:
        return _code_for(exc), f"{type(exc).__name__}: {exc}"


def _run_all(fn: Callable[..., Any], items: Sequence[Any], jobs: int) -> list[tuple[int, Any]]:
    if jobs <= 1 or len(items) <= 1:
        return [_guarded(fn, *item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_guarded, fn, *item) for item in items]
        return [f.result() for f in futures]


def _report(labels: Sequence[str], results: list[tuple[int, Any]]) -> int:
    worst = EXIT_OK
    for label, (code, payload) in zip(labels, results):
        if code != EXIT_OK:
            log.error("%s: %s", label, payload)
        worst = max(worst, code)
    return worst


# ------------------------------------------------------------------ config


def _overrides(args: argparse.Namespace) -> dict:
    """Config file sections first, then command line flags on top."""
    data: dict = {}
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise ValidationError("config file must hold a JSON object")
        data = {k: dict(v) if isinstance(v, dict) else v for k, v in raw.items()}
    for dest, (section, name) in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if section is None:
            data[name] = value
        else:
            data.setdefault(section, {})[name] = value
    return data


def _config(dims: GridDims, overrides: dict) -> PipelineConfig:
    return PipelineConfig.for_dims(dims).merged(overrides)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline config (flags override --config)")
    g.add_argument("--config", help="JSON file with config sections, e.g. {\"tree\": {\"tau_seg\": 20}}")
    g.add_argument("--nms-radius", dest="nms_radius", type=int)
    g.add_argument("--min-peak", dest="min_peak", type=float, help="minimum 1-channel peak value")
    g.add_argument("--h", dest="h", type=int, help="sub-region height")
    g.add_argument("--tau-point", dest="tau_point", type=float)
    g.add_argument("--tau-seg", dest="tau_seg", type=float)
    g.add_argument("--tau-start", dest="tau_start", type=float)
    g.add_argument("--max-gap", dest="max_gap", type=int)
    g.add_argument("--min-segment-rows", dest="min_segment_rows", type=int)
    g.add_argument("--w-snap", dest="w_snap", type=float)
    g.add_argument("--radius", dest="radius", type=float, help="pixel match radius")
    g.add_argument("--m-min", dest="m_min", type=float, help="minimum F1 to pair two paths")
    g.add_argument("--fit-degree", dest="fit_degree", type=int)


# ---------------------------------------------------------------- commands


def _write_gt(scene, out: Path, rail_halfwidth: int, noise: Optional[NoiseSpec], noise_seed: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    gt = build_gt_bundle(scene, rail_halfwidth)
    center = gt.center if noise is None else perturb_heatmap(gt.center, noise, noise_seed)
    formats.save_scene(scene, out / SCENE)
    formats.save_heatmap(center, out / CENTER)
    formats.save_heatmap(gt.prob3, out / PROB)
    formats.save_heatmap(gt.dist_left, out / DIST_LEFT)
    formats.save_heatmap(gt.dist_right, out / DIST_RIGHT)
    formats.save_seg_mask(gt.seg, out / SEG)


def _synth_one(spec: SceneSpec, out: str, noise: Optional[NoiseSpec], noise_seed: int) -> str:
    _write_gt(generate_fixture(spec).scene, Path(out), 1, noise, noise_seed)
    return out


def cmd_synth(args: argparse.Namespace) -> int:
    dims = GridDims(args.width, args.height)
    noise = None
    if args.noise_sigma or args.jitter or args.dropout:
        noise = NoiseSpec(args.noise_sigma, args.jitter, args.dropout)
    out = Path(args.out)
    if args.grid:
        specs = standard_fixture_grid(dims, args.seed)
        items = [(s, str(out / f"fixture_{i:02d}"), noise, args.noise_seed + i) for i, s in enumerate(specs)]
    else:
        spec = SceneSpec(
            dims,
            n_switches=args.switches,
            curvature=args.curvature,
            gauge_bottom=args.gauge_bottom if args.gauge_bottom is not None else dims.width / 8.0,
            gauge_top=args.gauge_top if args.gauge_top is not None else max(2.0, dims.width / 60.0),
            distractor_tracks=args.distractors,
            seed=args.seed,
            integer_rails=args.integer_rails,
        )
        items = [(spec, str(out), noise, args.noise_seed)]
    return _report([i[1] for i in items], _run_all(_synth_one, items, args.jobs))


def cmd_gtgen(args: argparse.Namespace) -> int:
    scene = formats.load_scene(args.scene)
    _write_gt(scene, Path(args.out), args.rail_halfwidth, None, 0)
    return EXIT_OK


def _extract_one(directory: str, overrides: dict, three_channel: bool, seg_name: Optional[str]) -> str:
    d = Path(directory)
    if three_channel:
        prob = formats.load_heatmap(d / PROB)
        maps = dict(prob=prob, dist_left=formats.load_heatmap(d / DIST_LEFT), dist_right=formats.load_heatmap(d / DIST_RIGHT))
        center, dims, mode = None, GridDims.of(prob), Mode.THREE_CHANNEL
    else:
        center = formats.load_heatmap(d / CENTER)
        maps, dims, mode = {}, GridDims.of(center), Mode.ONE_CHANNEL
    seg = formats.load_seg_mask(d / seg_name) if seg_name else None
    cfg = _config(dims, overrides)
    try:
        res = run_pipeline(center, seg=seg, cfg=cfg, **maps)
    except NoStartPath:
        # leave a document behind so evaluation can count the misses
        formats.save_paths(formats.PathsDocument(dims, mode, cfg.to_dict()), d / PATHS)
        raise
    doc = formats.PathsDocument(dims, mode, cfg.to_dict(), res.tree, tuple(res.paths), tuple(res.fits))
    formats.save_paths(doc, d / PATHS)
    return f"{len(res.paths)} paths"


def cmd_extract(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    items = [(d, overrides, args.three_channel, args.seg) for d in args.dirs]
    results = _run_all(_extract_one, items, args.jobs)
    for d, (code, payload) in zip(args.dirs, results):
        if code == EXIT_OK:
            log.info("%s: %s", d, payload)
    return _report(args.dirs, results)


def _eval_one(directory: str, overrides: dict, pred_seg: Optional[str]) -> dict:
    d = Path(directory)
    scene = formats.load_scene(d / SCENE)
    doc = formats.load_paths(d / PATHS)
    if doc.dims != scene.dims:
        raise ValidationError(f"paths document dims {doc.dims} differ from scene dims {scene.dims}")
    cfg = _config(scene.dims, overrides)
    gt = ground_truth_paths(scene, cfg)
    pred = gt_seg = None
    if pred_seg:
        pred = formats.load_seg_mask(d / pred_seg)
        gt_seg = build_seg_mask(scene)
    row = evaluate_paths(gt, list(doc.paths), cfg.match, pred, gt_seg)
    return {"image": directory, "no_start_path": doc.tree is None, **row}


def cmd_eval(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    items = [(d, overrides, args.pred_seg) for d in args.dirs]
    results = _run_all(_eval_one, items, args.jobs)
    code = _report(args.dirs, results)
    rows = [payload for c, payload in results if c == EXIT_OK]
    if code in (EXIT_OK, EXIT_NO_START):
        config = {"overrides": overrides}
        seen: dict[str, dict] = {}
        for d in args.dirs:
            dims = formats.load_scene(Path(d) / SCENE).dims
            seen.setdefault(f"{dims.width}x{dims.height}", _config(dims, overrides).to_dict())
        config["resolved"] = seen
        formats.save_metrics(formats.metrics_report(rows, summarize(rows), config), args.out)
        print(json.dumps(summarize(rows), indent=2))
    return code


def cmd_render(args: argparse.Namespace) -> int:
    d = Path(args.dir)
    doc = formats.load_paths(d / PATHS)
    scene = None
    matching = None
    scene_file = d / SCENE
    if scene_file.exists() and not args.no_gt:
        scene = formats.load_scene(scene_file)
        cfg = _config(scene.dims, _overrides(args))
        matching = match_paths(ground_truth_paths(scene, cfg), list(doc.paths), cfg.match)
        radius = cfg.match.radius
    else:
        radius = _config(doc.dims, _overrides(args)).match.radius
    pngs = render_overlay(doc.dims, list(doc.paths), scene, matching, radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.atomic_write(out / "overview.png", pngs[0])
    for i, png in enumerate(pngs[1:]):
        formats.atomic_write(out / f"path_{i:03d}.png", png)
    log.info("wrote %d images to %s", len(pngs), out)
    return EXIT_OK


BENCH_SPEC = dict(n_switches=2, distractor_tracks=2)


def bench(dims: GridDims, runs: int, seed: int = 0, refine: bool = True) -> dict:
    """Time the post-processing of a noiseless GT heatmap; returns milliseconds."""
    spec = SceneSpec(
        dims,
        curvature=0.1 * dims.width,
        gauge_bottom=dims.width / 8.0,
        gauge_top=max(2.0, dims.width / 60.0),
        seed=seed,
        **BENCH_SPEC,
    )
    gt = build_gt_bundle(generate_fixture(spec).scene)
    cfg = PipelineConfig.for_dims(dims)
    seg = gt.seg if refine else None
    for _ in range(3):
        run_pipeline(gt.center, seg=seg, cfg=cfg)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        run_pipeline(gt.center, seg=seg, cfg=cfg)
        times.append((time.perf_counter() - t0) * 1e3)
    return {
        "width": dims.width,
        "height": dims.height,
        "runs": runs,
        "refine": refine,
        "median_ms": statistics.median(times),
        "min_ms": min(times),
        "max_ms": max(times),
    }


def cmd_bench(args: argparse.Namespace) -> int:
    if args.runs < 1:
        raise ValidationError("--runs must be >= 1")
    print(json.dumps(bench(GridDims(args.width, args.height), args.runs, args.seed, not args.no_refine), indent=2))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="railpath", description="Ego-path extraction from rail track heatmaps.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scene with its GT heatmaps")
    p.add_argument("--out", required=True, help="output image directory (parent directory with --grid)")
    p.add_argument("--width", type=int, default=960)
    p.add_argument("--height", type=int, default=540)
    p.add_argument("--switches", type=int, default=0)
    p.add_argument("--curvature", type=float, default=0.0)
    p.add_argument("--gauge-bottom", type=float, help="rail-area width at the bottom row (default W/8)")
    p.add_argument("--gauge-top", type=float, help="rail-area width at the top row (default W/60)")
    p.add_argument("--distractors", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--integer-rails", action="store_true")
    p.add_argument("--grid", action="store_true", help="write the 27-scene standard fixture grid")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="Gaussian noise added to center.tpeh")
    p.add_argument("--jitter", type=float, default=0.0, help="per-row shift sigma for center.tpeh")
    p.add_argument("--dropout", type=float, default=0.0, help="fraction of zeroed rows in center.tpeh")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gtgen", parents=[common], help="build GT heatmaps and mask from scene JSON")
    p.add_argument("scene")
    p.add_argument("--out", required=True)
    p.add_argument("--rail-halfwidth", type=int, default=1)
    p.set_defaults(func=cmd_gtgen)

    p = sub.add_parser("extract", parents=[common], help="heatmaps to ego-paths (writes paths.json per directory)")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--three-channel", action="store_true", help="read prob/dist_left/dist_right instead of center")
    p.add_argument("--seg", help="mask file inside each directory used to snap rails, e.g. seg.tpeh")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", parents=[common], help="score paths.json against scene.json")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--out", required=True, help="metrics JSON file")
    p.add_argument("--pred-seg", help="predicted mask file inside each directory, enables mIoU")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", parents=[common], help="PNG overlays for one image directory")
    p.add_argument("dir")
    p.add_argument("--out", required=True, help="output directory for the PNGs")
    p.add_argument("--no-gt", action="store_true", help="ignore scene.json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", parents=[common], help="time the post-processing on a noiseless GT heatmap")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--width", type=int, default=960)
    p.add_argument("--height", type=int, default=540)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-refine", action="store_true", help="skip the snapping and polynomial fit")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    code, payload = _guarded(args.func, args)
    if code != EXIT_OK:
        log.error("%s", payload)
        return code
    return payload


if __name__ == "__main__":
    sys.exit(main())
