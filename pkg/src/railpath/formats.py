"""On-disk formats: scene JSON, the TPEH heatmap binary, paths and metrics JSON.

TPEH layout (all little-endian)::

    offset 0   4 bytes  magic b"TPEH"
    offset 4   u16      version (1)
    offset 6   u32      width
    offset 10  u32      height
    offset 14  W*H f32  values, row-major, top row first

Segmentation masks use the same container with class ids stored as floats.
Every writer goes through :func:`atomic_write`, so readers never observe a
half-written file.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .geometry import GridDims, Mode, RailPolyline, Scene, Track, Triplet, ValidationError, check_seg_mask
from .refine import FittedPath
from .tree import EgoPath, NodeKind, PathEdge, PathNode, PathTree

PathLike = Union[str, os.PathLike]

TPEH_MAGIC = b"TPEH"
TPEH_VERSION = 1
_HEADER = struct.Struct("<4sHII")
PATHS_FORMAT = "railpath.paths/1"
METRICS_FORMAT = "railpath.metrics/1"


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """Write to a temporary sibling, fsync, then rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _loads(text: Union[str, bytes], what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what}: malformed JSON ({exc})") from exc


# ---------------------------------------------------------------- heatmaps


def encode_heatmap(hm: np.ndarray) -> bytes:
    grid = np.asarray(hm)
    if grid.ndim != 2 or grid.size == 0:
        raise ValidationError(f"heatmap must be a non-empty 2D grid, got shape {grid.shape}")
    grid = grid.astype("<f4")
    if not np.isfinite(grid).all():
        raise ValidationError("heatmap contains non-finite values")
    h, w = grid.shape
    return _HEADER.pack(TPEH_MAGIC, TPEH_VERSION, w, h) + grid.tobytes(order="C")


def decode_heatmap(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValidationError(f"TPEH data truncated: {len(data)} bytes is shorter than the header")
    magic, version, w, h = _HEADER.unpack_from(data)
    if magic != TPEH_MAGIC:
        raise ValidationError(f"bad magic {magic!r}, expected {TPEH_MAGIC!r}")
    if version != TPEH_VERSION:
        raise ValidationError(f"unsupported TPEH version {version}")
    if w < 1 or h < 1:
        raise ValidationError(f"TPEH dims must be >= 1, got {w}x{h}")
    need = _HEADER.size + 4 * w * h
    if len(data) < need:
        raise ValidationError(f"TPEH payload truncated: {w}x{h} needs {need} bytes, got {len(data)}")
    if len(data) > need:
        raise ValidationError(f"TPEH payload has {len(data) - need} trailing bytes")
    grid = np.frombuffer(data, dtype="<f4", count=w * h, offset=_HEADER.size).reshape(h, w)
    if not np.isfinite(grid).all():
        y, x = np.argwhere(~np.isfinite(grid))[0]
        raise ValidationError(f"TPEH holds a non-finite value at (x={x}, y={y})")
    return grid.astype(np.float32)


def save_heatmap(hm: np.ndarray, path: PathLike) -> None:
    atomic_write(path, encode_heatmap(hm))


def load_heatmap(path: PathLike) -> np.ndarray:
    return decode_heatmap(Path(path).read_bytes())


def save_seg_mask(mask: np.ndarray, path: PathLike) -> None:
    save_heatmap(check_seg_mask(mask).astype(np.float32), path)


def load_seg_mask(path: PathLike) -> np.ndarray:
    return check_seg_mask(load_heatmap(path))


# ------------------------------------------------------------------ scenes


def scene_to_dict(scene: Scene) -> dict:
    return {
        "width": scene.dims.width,
        "height": scene.dims.height,
        "tracks": [
            {
                "id": t.id,
                "left": [[x, y] for x, y in t.left.points],
                "right": [[x, y] for x, y in t.right.points],
            }
            for t in scene.tracks
        ],
    }


def _field(obj: dict, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object")
    if key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    return obj[key]


def _integer(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{where}: expected an integer, got {value!r}")
    return value


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _polyline(raw: Any, where: str) -> RailPolyline:
    if not isinstance(raw, list):
        raise ValidationError(f"{where}: expected a list of [x, y] points")
    pts = []
    for i, p in enumerate(raw):
        if not isinstance(p, list) or len(p) != 2:
            raise ValidationError(f"{where}[{i}]: expected an [x, y] pair")
        pts.append((_number(p[0], f"{where}[{i}].x"), _number(p[1], f"{where}[{i}].y")))
    try:
        return RailPolyline(tuple(pts))
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def scene_from_dict(doc: Any) -> Scene:
    dims = GridDims(
        _integer(_field(doc, "width", "scene"), "scene.width"),
        _integer(_field(doc, "height", "scene"), "scene.height"),
    )
    raw_tracks = _field(doc, "tracks", "scene")
    if not isinstance(raw_tracks, list):
        raise ValidationError("scene.tracks: expected a list")
    tracks = []
    for i, raw in enumerate(raw_tracks):
        tid = _integer(_field(raw, "id", f"scene.tracks[{i}]"), f"scene.tracks[{i}].id")
        where = f"track {tid}"
        tracks.append(
            Track(
                tid,
                _polyline(_field(raw, "left", where), f"{where}.left"),
                _polyline(_field(raw, "right", where), f"{where}.right"),
            )
        )
    return Scene(dims, tuple(tracks))


def dumps_scene(scene: Scene) -> str:
    return _dumps(scene_to_dict(scene))


def loads_scene(text: Union[str, bytes]) -> Scene:
    return scene_from_dict(_loads(text, "scene"))


def save_scene(scene: Scene, path: PathLike) -> None:
    atomic_write(path, dumps_scene(scene))


def load_scene(path: PathLike) -> Scene:
    return loads_scene(Path(path).read_bytes())


# ------------------------------------------------------------------- paths


@dataclass(frozen=True)
class PathsDocument:
    """Everything ``extract`` knows about one image.

    ``tree`` is None when no track started near the bottom center; ``fits``
    runs parallel to ``paths``.
    """

    dims: GridDims
    mode: Mode
    config: dict = field(default_factory=dict)
    tree: Optional[PathTree] = None
    paths: tuple[EgoPath, ...] = ()
    fits: tuple[Optional[FittedPath], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "paths", tuple(self.paths))
        object.__setattr__(self, "fits", tuple(self.fits))
        if len(self.fits) != len(self.paths):
            raise ValidationError("paths document needs exactly one fit entry per path")


def _triplet_row(t: Triplet, mode: Mode) -> list:
    if t.mode is not mode:
        raise ValidationError(f"triplet at row {t.y} has mode {t.mode.value}, document mode is {mode.value}")
    return [t.y, t.x_left, t.x_center, t.x_right, t.clamped]


def _triplet(raw: Any, mode: Mode, where: str) -> Triplet:
    if not isinstance(raw, list) or len(raw) != 5:
        raise ValidationError(f"{where}: expected [y, x_left, x_center, x_right, clamped]")
    if not isinstance(raw[4], bool):
        raise ValidationError(f"{where}: clamped flag must be a boolean")
    try:
        return Triplet(
            _integer(raw[0], f"{where}.y"),
            _number(raw[1], f"{where}.x_left"),
            _number(raw[2], f"{where}.x_center"),
            _number(raw[3], f"{where}.x_right"),
            mode,
            raw[4],
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _fit_to_dict(fit: Optional[FittedPath]) -> Optional[dict]:
    if fit is None:
        return None
    return {
        "degree": fit.degree,
        "y_range": list(fit.y_range),
        "left": list(fit.left_coeffs),
        "right": list(fit.right_coeffs),
    }


def _fit_from_dict(raw: Any, where: str) -> Optional[FittedPath]:
    if raw is None:
        return None
    y_range = _field(raw, "y_range", where)
    if not isinstance(y_range, list) or len(y_range) != 2:
        raise ValidationError(f"{where}.y_range: expected [y_min, y_max]")
    coeffs = {}
    for side in ("left", "right"):
        values = _field(raw, side, where)
        if not isinstance(values, list) or not values:
            raise ValidationError(f"{where}.{side}: expected a non-empty coefficient list")
        coeffs[side] = tuple(_number(c, f"{where}.{side}") for c in values)
    return FittedPath(
        coeffs["left"],
        coeffs["right"],
        _integer(_field(raw, "degree", where), f"{where}.degree"),
        (_integer(y_range[0], f"{where}.y_range"), _integer(y_range[1], f"{where}.y_range")),
    )


def paths_to_dict(doc: PathsDocument) -> dict:
    tree = None
    if doc.tree is not None:
        tree = {
            "nodes": [
                {"id": n.id, "kind": n.kind.value, "x": n.x, "y": n.y, "merge_suspected": n.merge_suspected}
                for n in doc.tree.nodes
            ],
            "edges": [
                {
                    "id": e.id,
                    "parent": e.parent,
                    "child": e.child,
                    "trajectory": [_triplet_row(t, doc.mode) for t in e.trajectory],
                }
                for e in doc.tree.edges
            ],
        }
    return {
        "format": PATHS_FORMAT,
        "width": doc.dims.width,
        "height": doc.dims.height,
        "mode": doc.mode.value,
        "config": doc.config,
        "tree": tree,
        "paths": [
            {
                "edges": list(p.edges),
                "triplets": [_triplet_row(t, doc.mode) for t in p.triplets],
                "fit": _fit_to_dict(f),
            }
            for p, f in zip(doc.paths, doc.fits)
        ],
    }


def paths_from_dict(raw: Any) -> PathsDocument:
    if _field(raw, "format", "paths document") != PATHS_FORMAT:
        raise ValidationError(f"paths document: unsupported format {raw['format']!r}")
    dims = GridDims(
        _integer(_field(raw, "width", "paths document"), "width"),
        _integer(_field(raw, "height", "paths document"), "height"),
    )
    try:
        mode = Mode(_field(raw, "mode", "paths document"))
    except ValueError as exc:
        raise ValidationError(f"paths document: unknown mode {raw['mode']!r}") from exc
    config = _field(raw, "config", "paths document")
    if not isinstance(config, dict):
        raise ValidationError("paths document.config: expected an object")

    tree = None
    raw_tree = _field(raw, "tree", "paths document")
    if raw_tree is not None:
        nodes = []
        for i, n in enumerate(_field(raw_tree, "nodes", "tree")):
            where = f"tree.nodes[{i}]"
            try:
                kind = NodeKind(_field(n, "kind", where))
            except ValueError as exc:
                raise ValidationError(f"{where}: unknown node kind {n['kind']!r}") from exc
            flag = _field(n, "merge_suspected", where)
            if not isinstance(flag, bool):
                raise ValidationError(f"{where}.merge_suspected: expected a boolean")
            nodes.append(
                PathNode(
                    _integer(_field(n, "id", where), f"{where}.id"),
                    kind,
                    _number(_field(n, "x", where), f"{where}.x"),
                    _number(_field(n, "y", where), f"{where}.y"),
                    flag,
                )
            )
        edges = []
        for i, e in enumerate(_field(raw_tree, "edges", "tree")):
            where = f"tree.edges[{i}]"
            traj = _field(e, "trajectory", where)
            edges.append(
                PathEdge(
                    _integer(_field(e, "id", where), f"{where}.id"),
                    _integer(_field(e, "parent", where), f"{where}.parent"),
                    _integer(_field(e, "child", where), f"{where}.child"),
                    tuple(_triplet(t, mode, f"{where}.trajectory[{k}]") for k, t in enumerate(traj)),
                )
            )
        tree = PathTree(tuple(nodes), tuple(edges))
        tree.validate()

    paths, fits = [], []
    raw_paths = _field(raw, "paths", "paths document")
    if not isinstance(raw_paths, list):
        raise ValidationError("paths document.paths: expected a list")
    for i, p in enumerate(raw_paths):
        where = f"paths[{i}]"
        edges = tuple(_integer(x, f"{where}.edges") for x in _field(p, "edges", where))
        triplets = tuple(_triplet(t, mode, f"{where}.triplets[{k}]") for k, t in enumerate(_field(p, "triplets", where)))
        paths.append(EgoPath(triplets, edges))
        fits.append(_fit_from_dict(_field(p, "fit", where), f"{where}.fit"))
    return PathsDocument(dims, mode, config, tree, tuple(paths), tuple(fits))


def dumps_paths(doc: PathsDocument) -> str:
    return _dumps(paths_to_dict(doc))


def loads_paths(text: Union[str, bytes]) -> PathsDocument:
    return paths_from_dict(_loads(text, "paths document"))


def save_paths(doc: PathsDocument, path: PathLike) -> None:
    atomic_write(path, dumps_paths(doc))


def load_paths(path: PathLike) -> PathsDocument:
    return loads_paths(Path(path).read_bytes())


# ----------------------------------------------------------------- metrics


def metrics_report(rows: list[dict], summary: dict, config: dict) -> dict:
    """Per-image rows, micro/macro summary and the config that produced them."""
    return {"format": METRICS_FORMAT, "config": config, "summary": summary, "images": rows}


def dumps_metrics(report: dict) -> str:
    return _dumps(report)


def save_metrics(report: dict, path: PathLike) -> None:
    atomic_write(path, dumps_metrics(report))
