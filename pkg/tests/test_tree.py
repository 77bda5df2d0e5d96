import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from railpath.geometry import GridDims, Triplet, ValidationError
from railpath.segments import ClusterConfig, TrackSegment, cluster_into_segments
from railpath.tree import (
    EgoPath,
    NodeKind,
    NoStartPath,
    PathEdge,
    PathNode,
    PathTree,
    TreeConfig,
    build_path_tree,
    enumerate_ego_paths,
    filter_paths,
)

DIMS = GridDims(40, 30)  # bands of 10 rows: [20..29], [10..19], [0..9]
CFG = TreeConfig(tau_seg=4, filter_min_rows=1, filter_min_extent=0)


def pt(y, x):
    return Triplet(y, x - 1.0, float(x), x + 1.0)


def seg(band, rows, x):
    xs = [x] * len(rows) if np.isscalar(x) else x
    return TrackSegment(band, [pt(y, xx) for y, xx in zip(rows, xs)])


def band_rows(i):
    return list(range(29 - 10 * i, 19 - 10 * i, -1))


def straight(x=20):
    return [[seg(i, band_rows(i), x)] for i in range(3)]


class TestBuild:
    def test_single_track(self):
        tree = build_path_tree(straight(), CFG, DIMS)
        tree.validate()
        assert [n.kind for n in tree.nodes] == [NodeKind.START, NodeKind.END]
        assert len(tree.edges) == 1 and len(tree.edges[0].trajectory) == 30
        assert (tree.root.x, tree.root.y) == (20.0, 30.0)

    def test_y_divergence(self):
        segments = [[seg(0, band_rows(0), 20)], [seg(1, band_rows(1), 18), seg(1, band_rows(1), 22)], []]
        tree = build_path_tree(segments, CFG, DIMS)
        tree.validate()
        assert tree.count(NodeKind.SWITCH) == 1 and tree.count(NodeKind.END) == 2
        switch = next(n for n in tree.nodes if n.kind is NodeKind.SWITCH)
        assert (switch.x, switch.y) == (20.0, 20.0)  # tip of the parent edge
        assert len(tree.children(switch.id)) == 2

    def test_far_parallel_track_is_excluded(self):
        segments = straight()
        for i, band in enumerate(segments):
            band.append(seg(i, band_rows(i), 4))
        tree = build_path_tree(segments, CFG, DIMS)
        assert tree.count(NodeKind.SWITCH) == 0
        xs = {t.x_center for e in tree.edges for t in e.trajectory}
        assert xs == {20.0}

    def test_no_start(self):
        with pytest.raises(NoStartPath):
            build_path_tree(straight(x=2), TreeConfig(tau_start=5), DIMS)
        with pytest.raises(NoStartPath):
            build_path_tree([[], [], []], CFG, DIMS)

    def test_start_may_sit_in_the_second_band(self):
        segments = straight()
        segments[0] = []
        tree = build_path_tree(segments, CFG, DIMS)
        assert len(tree.edges[0].trajectory) == 20

    def test_start_is_not_searched_beyond_the_second_band(self):
        segments = straight()
        segments[0], segments[1] = [], []
        with pytest.raises(NoStartPath):
            build_path_tree(segments, CFG, DIMS)

    def test_gap_within_limit_is_bridged(self):
        segments = straight()
        segments[1] = []
        tree = build_path_tree(segments, TreeConfig(tau_seg=4, max_gap=20), DIMS)
        assert tree.count(NodeKind.END) == 1 and len(tree.edges[0].trajectory) == 20
        tree = build_path_tree(segments, TreeConfig(tau_seg=4, max_gap=10), DIMS)
        assert len(tree.edges[0].trajectory) == 10

    def test_converging_segment_flags_the_loser(self):
        # two edges reach band 2; the only segment there is nearer to the right edge
        segments = [
            [seg(0, band_rows(0), 20)],
            [seg(1, band_rows(1), 17), seg(1, band_rows(1), 23)],
            [seg(2, band_rows(2), 21)],
        ]
        tree = build_path_tree(segments, TreeConfig(tau_seg=4), DIMS)
        tree.validate()
        ends = [n for n in tree.nodes if n.kind is NodeKind.END]
        assert sorted(n.merge_suspected for n in ends) == [False, True]
        flagged = next(n for n in ends if n.merge_suspected)
        assert flagged.x == 17.0

    def test_fragment_below_a_fork_is_a_continuation(self):
        # a short piece at the bottom of band 1 and the two branches above it
        segments = [
            [seg(0, band_rows(0), 20)],
            [seg(1, [19, 18, 17], 20), seg(1, [16, 15, 14, 13, 12, 11, 10], 18), seg(1, [16, 15, 14, 13, 12, 11, 10], 22)],
            [],
        ]
        tree = build_path_tree(segments, TreeConfig(tau_seg=4), DIMS)
        tree.validate()
        switch = next(n for n in tree.nodes if n.kind is NodeKind.SWITCH)
        assert switch.y == 17.0
        assert tree.count(NodeKind.END) == 2

    def test_branch_leaving_mid_band_keeps_the_trunk(self):
        # the lowest segment continues straight; the branch starts 4 rows higher
        segments = [
            [seg(0, band_rows(0), 20)],
            [seg(1, band_rows(1), 20), seg(1, [15, 14, 13, 12, 11, 10], [22, 23, 24, 25, 26, 27])],
            [],
        ]
        tree = build_path_tree(segments, TreeConfig(tau_seg=4), DIMS)
        tree.validate()
        switch = next(n for n in tree.nodes if n.kind is NodeKind.SWITCH)
        assert switch.y == 16.0
        trunk = tree.edges[0]
        assert [t.y for t in trunk.trajectory][-1] == 16
        paths = enumerate_ego_paths(tree)
        assert [len(p) for p in paths] == [20, 20]  # 14 trunk rows plus 6 per branch

    def test_config_invariants(self):
        with pytest.raises(ValidationError):
            TreeConfig(tau_seg=0)
        with pytest.raises(ValidationError):
            TreeConfig(tau_start=-1)
        with pytest.raises(ValidationError):
            TreeConfig(min_segment_rows=0)

    def test_short_segments_are_ignored(self):
        segments = straight()
        segments[1].append(seg(1, [19, 18], 22))
        tree = build_path_tree(segments, TreeConfig(tau_seg=4, min_segment_rows=3), DIMS)
        assert tree.count(NodeKind.SWITCH) == 0
        tree = build_path_tree(segments, TreeConfig(tau_seg=4), DIMS)
        assert tree.count(NodeKind.SWITCH) == 1


def caterpillar(k):
    """Start, then k switches in a row, each with one side branch."""
    nodes = [PathNode(0, NodeKind.START, 0, 100)]
    edges = []
    parent = 0
    y = 99
    for i in range(k):
        sw = len(nodes)
        nodes.append(PathNode(sw, NodeKind.SWITCH, 0, y - 1))
        edges.append(PathEdge(len(edges), parent, sw, (pt(y, 5), pt(y - 1, 5))))
        end = len(nodes)
        nodes.append(PathNode(end, NodeKind.END, 9, y - 3))
        edges.append(PathEdge(len(edges), sw, end, (pt(y - 2, 9), pt(y - 3, 9))))
        parent = sw
        y -= 2
    end = len(nodes)
    nodes.append(PathNode(end, NodeKind.END, 0, y - 1))
    edges.append(PathEdge(len(edges), parent, end, (pt(y, 5), pt(y - 1, 5))))
    return PathTree(tuple(nodes), tuple(edges))


class TestEnumerate:
    def test_single_edge(self):
        paths = enumerate_ego_paths(build_path_tree(straight(), CFG, DIMS))
        assert len(paths) == 1 and paths[0].edges == (0,)

    def test_two_paths_share_the_trunk(self):
        segments = [[seg(0, band_rows(0), 20)], [seg(1, band_rows(1), 18), seg(1, band_rows(1), 22)], []]
        paths = enumerate_ego_paths(build_path_tree(segments, CFG, DIMS))
        assert len(paths) == 2
        assert paths[0].triplets[:10] == paths[1].triplets[:10]

    @pytest.mark.parametrize("k", [0, 1, 2, 5])
    def test_caterpillar(self, k):
        tree = caterpillar(k)
        tree.validate()
        assert len(enumerate_ego_paths(tree)) == k + 1

    def test_validate_catches_bad_trees(self):
        t = caterpillar(1)
        with pytest.raises(ValidationError):
            PathTree(t.nodes, t.edges[:1] + t.edges[2:]).validate()  # switch with one child
        with pytest.raises(ValidationError):
            PathTree((t.nodes[1],) + t.nodes[1:], t.edges).validate()


class TestFilter:
    def test_too_few_rows(self):
        p = EgoPath((pt(29, 1), pt(28, 1)))
        assert filter_paths([p], TreeConfig(filter_min_rows=3, filter_min_extent=0), 30) == []

    def test_full_height(self):
        p = EgoPath(tuple(pt(y, 1) for y in range(29, -1, -1)))
        assert filter_paths([p], TreeConfig(), 30) == [p]

    def test_extent(self):
        p = EgoPath(tuple(pt(y, 1) for y in range(99, 84, -1)))  # 15 of 100 rows
        assert filter_paths([p], TreeConfig(filter_min_rows=1, filter_min_extent=0.2), 100) == []


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 59), st.integers(0, 79)), min_size=1, max_size=120),
    st.integers(2, 12),
    st.integers(1, 8),
)
def test_tree_properties_on_random_input(points, h, tau):
    dims = GridDims(80, 60)
    triplets = [pt(y, x) for y, x in sorted(set(points))]
    segments = cluster_into_segments(triplets, ClusterConfig(h, float(tau)), dims)
    try:
        tree = build_path_tree(segments, TreeConfig(tau_seg=float(tau) + 2, filter_min_rows=1), dims)
    except NoStartPath:
        return
    tree.validate()
    paths = enumerate_ego_paths(tree)
    assert len(paths) == tree.count(NodeKind.END)
    in_tree = {id(t) for e in tree.edges for t in e.trajectory}
    in_paths = {id(t) for p in paths for t in p.triplets}
    assert in_tree == in_paths
    for p in paths:
        ys = [t.y for t in p.triplets]
        assert all(a > b for a, b in zip(ys, ys[1:]))
