import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from xaer.replay import (
    HOW, HOW_WHY, PER, PRIORITIZED, UNIFORM, UNIVERSAL_KEY, WHY, XI_INF, BufferConfig, ClusteredBuffer,
    RunningMean, XATransition, assign_cluster, size_bounds,
)

from _oracles import filled, oracle, tr


# --- size bounds ---------------------------------------------------------------

@pytest.mark.parametrize("n,c,xi,expected", [
    (1000, 5, 1, (200, 200)),
    (1000, 5, 2, (100, 600)),
    (1000, 5, XI_INF, (0, 1000)),
])
def test_size_bounds_examples(n, c, xi, expected):
    assert size_bounds(n, xi, c) == expected


def test_size_bounds_needs_a_cluster():
    with pytest.raises(ValueError):
        size_bounds(10, 1, 0)


# --- clustering ----------------------------------------------------------------

def test_assign_cluster_examples():
    assert assign_cluster(tr(0), HOW, running_mean=3.2, episode_return=5.0) == "better"
    multi = XATransition(0, 0, 0.0, 1, False, ("school_zone", "roadworks_cap"))
    assert assign_cluster(multi, WHY, cluster_sizes={"school_zone": 40, "roadworks_cap": 12}) == "roadworks_cap"
    assert assign_cluster(tr(0, "off_road"), HOW_WHY, running_mean=1.0, episode_return=-1.0) == "off_road_worse"
    assert assign_cluster(tr(0, "off_road"), PER) == UNIVERSAL_KEY
    with pytest.raises(ValueError):
        assign_cluster(tr(0), HOW)


def test_running_mean():
    rm = RunningMean(4)
    assert rm.mean == 0.0
    for v in (1, 2, 3, 6):
        rm.push(v)
    assert rm.mean == 3.0
    rm.push(10)
    assert rm.mean == (2 + 3 + 6 + 10) / 4


def test_how_staging_and_flush():
    buf = ClusteredBuffer(BufferConfig(capacity=100, strategy=HOW), rng=0)
    for i in range(3):
        buf.stage(tr(i, r=1.0))
    assert len(buf) == 0
    buf.observe_episode_end(3.0)  # first episode is compared with 0
    assert buf.sizes() == {"better": 3}
    for i in range(2):
        buf.stage(tr(i, r=0.5))
    buf.observe_episode_end(1.0)
    assert buf.sizes() == {"better": 3, "worse": 2}
    assert buf.running_mean.mean == 2.0


def test_how_why_keys():
    buf = ClusteredBuffer(BufferConfig(capacity=100, strategy=HOW_WHY), rng=0)
    buf.stage(tr(0, "new_cell"))
    buf.stage(tr(1, "school_zone"))
    buf.observe_episode_end(-1.0)
    assert set(buf.keys) == {"new_cell_worse", "school_zone_worse"}


# --- add / eviction ----------------------------------------------------------------

def test_add_to_empty():
    buf = ClusteredBuffer(BufferConfig(capacity=5, strategy=WHY), rng=0)
    buf.add(tr(0))
    assert len(buf) == 1
    assert buf.clusters["x"].sum.total == 1.0  # max priority of an empty buffer


def test_eviction_hand_trace():
    buf = ClusteredBuffer(BufferConfig(capacity=6, xi=1, strategy=WHY), rng=0)
    for i, label in enumerate("aaaabb"):
        buf.add(tr(i, label))
    assert buf.s_min == 3
    buf.add(tr(6, "b"))
    assert buf.sizes() == {"a": 3, "b": 3}
    assert [buf.clusters["a"].items[s].s for s in buf.clusters["a"].priorities()[0]] == [1, 2, 3]


def test_eviction_fallback_to_globally_oldest():
    buf = ClusteredBuffer(BufferConfig(capacity=4, xi=1, strategy=WHY), rng=0)
    for i, label in enumerate("aabb"):
        buf.add(tr(i, label))
    # third cluster appears: S_min drops to 1, a and b still exceed it
    buf.add(tr(4, "c"))
    assert buf.s_min == 1
    assert buf.sizes() == {"a": 1, "b": 2, "c": 1}
    buf2 = ClusteredBuffer(BufferConfig(capacity=2, xi=1, strategy=WHY), rng=0)
    buf2.add(tr(0, "a"))
    buf2.add(tr(1, "b"))
    buf2.add(tr(2, "c"))  # S_min = 0 -> every cluster eligible, oldest goes
    assert buf2.sizes() == {"a": 0, "b": 1, "c": 1}


def test_new_items_enter_at_current_max_priority():
    buf = filled("ab", [3.0, 1.0])
    buf.add(tr(9, "b"))
    slots, prios = buf.clusters["b"].priorities()
    assert prios[-1] == pytest.approx(3.0)


def check_eviction_safety(buf):
    for victim, sizes, s_min in buf.evictions:
        if any(n > s_min for n in sizes.values()):
            assert sizes[victim] > s_min


@settings(max_examples=25, deadline=None)
@given(
    capacity=st.integers(1, 40),
    xi=st.sampled_from([1, 2, 3, XI_INF]),
    n_labels=st.integers(1, 8),
    seed=st.integers(0, 10_000),
)
def test_eviction_safety_property(capacity, xi, n_labels, seed):
    rng = np.random.default_rng(seed)
    buf = ClusteredBuffer(BufferConfig(capacity=capacity, xi=xi, strategy=WHY), rng=seed)
    buf.track_evictions = True
    weights = rng.dirichlet(np.ones(n_labels))
    for i in range(300):
        buf.add(tr(i, str(rng.choice(n_labels, p=weights))))
        assert len(buf) <= capacity
    assert len(buf.evictions) == 300 - capacity
    check_eviction_safety(buf)


# --- priorities ------------------------------------------------------------------

def test_update_priorities_examples():
    buf = filled("aaa", [0.0, -2.0, 1.0], alpha=1.0, eps=1e-6)
    _, prios = buf.clusters["a"].priorities()
    assert prios[0] == pytest.approx(1e-6) and prios[0] > 0
    assert prios[1] == pytest.approx(2.0 + 1e-6)
    assert buf.clusters["a"].sum.total == math.fsum(buf.clusters["a"].sum.leaves()) or math.isclose(
        buf.clusters["a"].sum.total, math.fsum(buf.clusters["a"].sum.leaves()), rel_tol=1e-15)


def test_update_length_mismatch():
    buf = filled("aa", [1.0, 1.0])
    with pytest.raises(ValueError):
        buf.update_priorities([("a", 0, 0)], [1.0, 2.0])


def test_evicted_handles_are_skipped():
    buf = ClusteredBuffer(BufferConfig(capacity=2, strategy=PER, alpha=1.0), rng=0)
    buf.add(tr(0))
    batch = buf.sample(4)
    buf.add(tr(1))
    buf.add(tr(2))  # evicts item 0
    buf.update_priorities(batch.handles, [5.0] * 4)
    assert buf.max_priority() == 1.0


# --- sampling ------------------------------------------------------------------

def test_empty_sample_raises():
    buf = ClusteredBuffer(BufferConfig(capacity=5), rng=0)
    with pytest.raises(ValueError):
        buf.sample(1)


def test_cluster_pick_frequencies():
    buf = filled("aaab", [1.0, 1.0, 1.0, 1.0], alpha=1.0, eps=1e-12, seed=5)
    n = 100_000
    batch = buf.sample(n)
    freq = Counter(h[0] for h in batch.handles)
    assert abs(freq["a"] / n - 0.75) < 0.01
    assert abs(freq["b"] / n - 0.25) < 0.01


def test_uniform_equal_everything_weights_are_one():
    buf = filled("aabb", [0.5] * 4, inter=UNIFORM)
    assert np.all(buf.sample(64).weights == 1.0)


def test_single_cluster_weight_example():
    buf = filled("xxx", [1.0, 1.0, 2.0], alpha=1.0, eps=1e-300)
    batch = buf.sample(200)
    by_item = {t.s: w for t, w in zip(batch.items, batch.weights)}
    assert by_item == {0: 1.0, 1: 1.0, 2: 0.5}


@settings(max_examples=30, deadline=None)
@given(
    tds=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=16),
    beta=st.floats(0.0, 1.0),
    alpha=st.floats(0.0, 1.0),
)
def test_per_mode_reproduces_classic_weights(tds, beta, alpha):
    buf = filled(["x"] * len(tds), tds, alpha=alpha, eps=1e-6, strategy=PER)
    batch = buf.sample(64, beta=beta)
    prio = np.array([(abs(d) + 1e-6) ** alpha for d in tds])
    expected = (prio.min() / prio[[t.s for t in batch.items]]) ** beta
    np.testing.assert_allclose(batch.weights, expected, rtol=1e-12)


@pytest.mark.parametrize("inter", [PRIORITIZED, UNIFORM])
def test_sampling_matches_enumeration(inter):
    rng = np.random.default_rng(7)
    labels = list(rng.choice(list("abcd"), size=12))
    tds = list(rng.exponential(1.0, size=12))
    buf = filled(labels, tds, alpha=0.6, eps=1e-6, inter=inter, seed=1)
    pc, pitem = oracle(labels, tds, 0.6, 1e-6, inter)
    n = 100_000
    batch = buf.sample(n)
    counts = Counter(t.s for t in batch.items)
    observed = np.array([counts[i] for i in range(12)])
    expected = np.array([pitem[i] for i in range(12)]) * n
    assert stats.chisquare(observed, expected).pvalue > 0.01
    np.testing.assert_allclose(batch.probabilities, [pitem[t.s] for t in batch.items], rtol=1e-10)
    pmin = min(pitem.values())
    np.testing.assert_allclose(batch.weights, [pmin / pitem[t.s] for t in batch.items], rtol=1e-10)
    assert batch.weights.max() == pytest.approx(1.0)


def test_snapshot_lists_clusters():
    buf = filled("aab", [1.0, 1.0, 2.0])
    snap = {row["key"]: row for row in buf.snapshot()}
    assert snap["a"]["size"] == 2 and snap["b"]["size"] == 1
    assert snap["a"]["oldest_age"] == 3
    assert '"clusters"' in buf.dumps_snapshot()


def test_cluster_growth_keeps_order_and_priorities():
    buf = ClusteredBuffer(BufferConfig(capacity=500, strategy=WHY, alpha=1.0, xi=XI_INF), rng=0)
    for i in range(200):
        buf.add(tr(i))
    c = buf.clusters["x"]
    slots, prios = c.priorities()
    assert [c.items[s].s for s in slots] == list(range(200))
    assert np.all(prios == 1.0)
    assert c.sum.total == 200.0


def test_known_keys_preallocate_bounds():
    buf = ClusteredBuffer(BufferConfig(capacity=100, xi=1, strategy=WHY, known_keys=("a", "b", "c", "d")), rng=0)
    assert buf.s_min == 25
