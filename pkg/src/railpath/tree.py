"""Path tree construction from track segments and ego-path enumeration.

The tree is built bottom-up. A start node sits below the bottom middle of
the image; the segment nearest to it seeds the first edge. Higher segments
are merged into the edge whose tip is horizontally nearest. When two or more
segments of one sub-region claim the same edge, the edge ends in a switch
node and each claiming segment starts a child edge. Segments that reach no
edge are other routes and are dropped.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

from .geometry import GridDims, Triplet, ValidationError
from .segments import TrackSegment


class NoStartPath(Exception):
    """No track segment lies close enough to the bottom center of the image."""


class NodeKind(str, enum.Enum):
    START = "start"
    SWITCH = "switch"
    END = "end"


@dataclass(frozen=True)
class PathNode:
    id: int
    kind: NodeKind
    x: float
    y: float
    merge_suspected: bool = False


@dataclass(frozen=True)
class PathEdge:
    id: int
    parent: int
    child: int
    trajectory: tuple[Triplet, ...]


@dataclass(frozen=True)
class PathTree:
    nodes: tuple[PathNode, ...]
    edges: tuple[PathEdge, ...]

    @property
    def root(self) -> PathNode:
        return self.nodes[0]

    def children(self, node_id: int) -> list[PathEdge]:
        return [e for e in self.edges if e.parent == node_id]

    def count(self, kind: NodeKind) -> int:
        return sum(1 for n in self.nodes if n.kind is kind)

    def validate(self) -> None:
        starts = [n for n in self.nodes if n.kind is NodeKind.START]
        if len(starts) != 1 or self.nodes[0].kind is not NodeKind.START:
            raise ValidationError("path tree needs exactly one start node, stored first")
        parents: dict[int, int] = {}
        for e in self.edges:
            if e.child in parents:
                raise ValidationError(f"node {e.child} has two parents")
            parents[e.child] = e.parent
            if not e.trajectory:
                raise ValidationError(f"edge {e.id} has an empty trajectory")
            ys = [t.y for t in e.trajectory]
            if any(a <= b for a, b in zip(ys, ys[1:])):
                raise ValidationError(f"edge {e.id} trajectory is not strictly rising")
        for n in self.nodes[1:]:
            seen = {n.id}
            cur = n.id
            while cur in parents:
                cur = parents[cur]
                if cur in seen:
                    raise ValidationError("path tree contains a cycle")
                seen.add(cur)
            if cur != self.root.id:
                raise ValidationError(f"node {n.id} is not connected to the start node")
            n_children = len(self.children(n.id))
            if n.kind is NodeKind.END and n_children:
                raise ValidationError(f"end node {n.id} has children")
            if n.kind is NodeKind.SWITCH and n_children < 2:
                raise ValidationError(f"switch node {n.id} has fewer than 2 children")


@dataclass(frozen=True)
class EgoPath:
    """One possible route, triplets ordered bottom to top."""

    triplets: tuple[Triplet, ...]
    edges: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.triplets)

    @property
    def extent(self) -> int:
        if not self.triplets:
            return 0
        return self.triplets[0].y - self.triplets[-1].y + 1


@dataclass(frozen=True)
class TreeConfig:
    tau_seg: float = 12.0
    tau_start: Optional[float] = None  # None: a quarter of the image width
    filter_min_rows: int = 3
    filter_min_extent: float = 0.2
    max_gap: Optional[int] = None  # None: twice the sub-region height
    min_segment_rows: int = 1  # shorter segments are treated as clutter

    def __post_init__(self) -> None:
        if self.tau_seg <= 0:
            raise ValidationError("tau_seg must be > 0")
        if self.tau_start is not None and self.tau_start <= 0:
            raise ValidationError("tau_start must be > 0")
        if self.min_segment_rows < 1:
            raise ValidationError("min_segment_rows must be >= 1")
        if self.filter_min_rows < 1 or self.filter_min_extent < 0:
            raise ValidationError("path filter thresholds must be positive")

    def start_radius(self, dims: GridDims) -> float:
        return 0.25 * dims.width if self.tau_start is None else self.tau_start


@dataclass
class _Edge:
    id: int
    parent: int
    triplets: list[Triplet]
    contested: bool = False
    child: Optional[int] = None

    @property
    def tip(self) -> Triplet:
        return self.triplets[-1]


class _Builder:
    def __init__(self, dims: GridDims, cfg: TreeConfig, max_gap: int):
        self.dims = dims
        self.cfg = cfg
        self.max_gap = max_gap
        self.nodes: list[PathNode] = [PathNode(0, NodeKind.START, dims.width / 2.0, float(dims.height))]
        self.edges: list[_Edge] = []

    def add_node(self, kind: NodeKind, tip: Triplet, merge_suspected: bool = False) -> int:
        node = PathNode(len(self.nodes), kind, tip.x_center, float(tip.y), merge_suspected)
        self.nodes.append(node)
        return node.id

    def add_edge(self, parent: int, triplets: list[Triplet]) -> _Edge:
        edge = _Edge(len(self.edges), parent, list(triplets))
        self.edges.append(edge)
        return edge

    def candidate(self, seg: TrackSegment) -> Optional[_Edge]:
        b = seg.bottom
        best, best_d = None, 0.0
        for e in self.edges:
            if e.child is not None:
                continue
            tip = e.tip
            gap = tip.y - b.y
            d = abs(b.x_center - tip.x_center)
            if gap <= 0 or gap > self.max_gap or d > self.cfg.tau_seg:
                continue
            if best is None or d < best_d:
                if best is not None:
                    best.contested = True
                best, best_d = e, d
            else:
                e.contested = True
        return best

    def attach_band(self, pending: list[TrackSegment]) -> None:
        pending = sorted(pending, key=lambda s: (-s.bottom.y, s.bottom.x_center))
        while pending:
            groups: dict[int, list[TrackSegment]] = {}
            for seg in pending:
                edge = self.candidate(seg)
                if edge is not None:
                    groups.setdefault(edge.id, []).append(seg)
            if not groups:
                return
            for edge_id in sorted(groups):
                self.extend(self.edges[edge_id], groups[edge_id], pending)

    def extend(self, edge: _Edge, group: list[TrackSegment], pending: list[TrackSegment]) -> None:
        low, others = group[0], group[1:]
        if not others:
            edge.triplets.extend(low.triplets)
            edge.contested = False
            pending.remove(low)
            return
        split_y = max(s.bottom.y for s in others)
        if low.top.y > split_y:
            # fragment lying wholly below the others: a continuation, not a fork
            edge.triplets.extend(low.triplets)
            edge.contested = False
            pending.remove(low)
            return
        trunk = [t for t in low.triplets if t.y > split_y]
        rest = [t for t in low.triplets if t.y <= split_y]
        edge.triplets.extend(trunk)
        switch = self.add_node(NodeKind.SWITCH, edge.tip)
        edge.child = switch
        for triplets in [rest] + [s.triplets for s in others]:
            self.add_edge(switch, triplets)
        for seg in group:
            pending.remove(seg)

    def finish(self) -> PathTree:
        for e in self.edges:
            if e.child is None:
                e.child = self.add_node(NodeKind.END, e.tip, e.contested)
        edges = tuple(PathEdge(e.id, e.parent, e.child, tuple(e.triplets)) for e in self.edges)
        return PathTree(tuple(self.nodes), edges)


def build_path_tree(
    segments: Sequence[Sequence[TrackSegment]],
    cfg: TreeConfig,
    dims: GridDims,
) -> PathTree:
    """Link per-sub-region segments (bottom-most sub-region first) into a path tree.

    Raises :class:`NoStartPath` when no segment of the bottom sub-regions
    starts within ``tau_start`` of the bottom center.
    """
    if cfg.max_gap is not None:
        max_gap = cfg.max_gap
    else:
        # sub-region height is not stored on segments; the tallest one bounds it
        spans = [s.bottom.y - s.top.y + 1 for band in segments for s in band]
        max_gap = 2 * max(spans, default=1)
    segments = [[s for s in band if len(s) >= cfg.min_segment_rows] for band in segments]
    builder = _Builder(dims, cfg, max_gap)
    center = dims.width / 2.0
    radius = cfg.start_radius(dims)

    seed_band = seed = None
    for k, band in enumerate(segments):
        near = [s for s in band if abs(s.bottom.x_center - center) <= radius]
        if near:
            seed_band = k
            seed = min(near, key=lambda s: abs(s.bottom.x_center - center))
            break
        if k >= 1:
            break
    if seed is None:
        raise NoStartPath(f"no track segment within {radius:g} px of the bottom center")

    builder.add_edge(0, seed.triplets)
    for k in range(seed_band, len(segments)):
        pending = [s for s in segments[k] if s is not seed]
        builder.attach_band(pending)
    tree = builder.finish()
    return tree


def enumerate_ego_paths(tree: PathTree) -> list[EgoPath]:
    """One path per end node: edge trajectories concatenated from the root."""
    children: dict[int, list[PathEdge]] = {}
    for e in tree.edges:
        children.setdefault(e.parent, []).append(e)
    paths: list[EgoPath] = []
    stack: list[tuple[int, tuple[Triplet, ...], tuple[int, ...]]] = [(tree.root.id, (), ())]
    while stack:
        node, triplets, via = stack.pop()
        kids = children.get(node, [])
        if not kids:
            if via:
                paths.append(EgoPath(triplets, via))
            continue
        for e in reversed(kids):
            stack.append((e.child, triplets + e.trajectory, via + (e.id,)))
    return paths


def filter_paths(paths: Sequence[EgoPath], cfg: TreeConfig, height: int) -> list[EgoPath]:
    """Drop paths that are too short in triplets or in vertical extent."""
    return [
        p
        for p in paths
        if len(p) >= cfg.filter_min_rows and p.extent >= cfg.filter_min_extent * height
    ]
