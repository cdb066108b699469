import math

import numpy as np
from hypothesis import given, settings, strategies as st

from xaer.sumtree import MaxTree, MinTree, SumTree


def _pairwise(leaves):
    level = list(leaves)
    while len(level) > 1:
        level = [level[i] + level[i + 1] for i in range(0, len(level), 2)]
    return level[0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=40), st.data())
def test_root_matches_leaves(values, data):
    tree = SumTree(len(values))
    tree[np.arange(len(values))] = values
    idx = data.draw(st.lists(st.integers(0, len(values) - 1), min_size=1, max_size=10))
    new = data.draw(st.lists(st.floats(0.0, 5.0), min_size=len(idx), max_size=len(idx)))
    tree[idx] = new
    leaves = tree.leaves()
    assert tree.total == _pairwise(leaves)
    assert math.isclose(tree.total, math.fsum(leaves), rel_tol=1e-12, abs_tol=1e-12)


def test_min_max_track_updates():
    mn, mx = MinTree(5), MaxTree(5)
    for t in (mn, mx):
        t[[0, 1, 2]] = [3.0, 1.0, 2.0]
    assert mn.reduce() == 1.0 and mx.reduce() == 3.0
    mn[1] = np.inf
    mx[0] = -np.inf
    assert mn.reduce() == 2.0 and mx.reduce() == 2.0


def test_find_respects_prefix_intervals():
    tree = SumTree(4)
    tree[[0, 1, 2, 3]] = [1.0, 0.0, 2.0, 1.0]
    got = tree.find([0.0, 0.5, 0.999, 1.0, 2.5, 3.0, 3.99])
    assert got.tolist() == [0, 0, 0, 2, 2, 3, 3]


def test_find_never_returns_zero_leaf_at_upper_edge():
    tree = SumTree(8)
    tree[[0, 3]] = [0.3, 0.7]
    assert set(tree.find(np.linspace(0, tree.total, 101)).tolist()) <= {0, 3}


def test_grow_keeps_leaves():
    tree = SumTree(4)
    tree[[0, 1, 2, 3]] = [1.0, 2.0, 3.0, 4.0]
    tree.grow(9)
    assert tree.capacity == 16
    assert tree.leaves()[:4].tolist() == [1.0, 2.0, 3.0, 4.0]
    assert tree.total == 10.0
