import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsclust.clustering import Cluster, Partitioning
from rsclust.evaluation import (
    PairStats,
    PrefixDistances,
    avg_growth,
    baseline_scatter,
    cluster_growth,
    correlation_buckets,
    diameter_growth,
    in_out_clients,
    in_out_cluster,
    latency_difference,
    length_band,
    pair_stats,
    partition_means,
    prefix_length_report,
    rsd_bucket_edges,
    within_stats,
)
from rsclust.io import MeasurementSet
from rsclust.rankings import DistanceParams, PartialRanking, g_dist, ps_dist
from rsclust.routing import Prefix, RsdMatrix

P2 = DistanceParams(2)
METRIC_FN = {"ps": ps_dist, "g": g_dist}


def pr(known, client=None, m=4):
    return PartialRanking(client, m, tuple(known))


def pfx(i, length=24):
    return Prefix.parse(f"10.0.{i}.0/{length}" if length >= 24 else f"10.{i}.0.0/{length}")


def random_rankings(rng, n_prefixes, m=6, max_clients=4):
    out = {}
    for i in range(n_prefixes):
        n = int(rng.integers(1, max_clients + 1))
        out[pfx(i)] = [pr(rng.permutation(m)[: rng.integers(1, m + 1)], (i, c), m) for c in range(n)]
    return out


def dist(a, b, metric, params):
    return METRIC_FN[metric](a, b, params)


# -- pair statistics ----------------------------------------------------------------------


def test_pair_stats_invariant():
    with pytest.raises(ValueError):
        PairStats(0.5, 0.2, 0.9)


def test_pair_stats_identical_and_single():
    same = [pr([0, 1]), pr([0, 1])]
    assert pair_stats(same, same, "ps", P2) == PairStats(0, 0, 0)
    s = pair_stats([pr([0, 1])], [pr([2, 1])], "ps", P2)
    assert s.min == s.avg == s.max


def test_pair_stats_two_by_two_oracle():
    left = [pr([0, 1]), pr([1, 0])]
    right = [pr([0, 2]), pr([3, 2])]
    vals = [ps_dist(a, b, P2) for a in left for b in right]
    s = pair_stats(left, right, "ps", P2)
    assert (s.min, s.avg, s.max) == pytest.approx((min(vals), np.mean(vals), max(vals)))
    with pytest.raises(ValueError):
        pair_stats([], right, "ps", P2)


def test_within_stats_uses_distinct_pairs():
    clients = [pr([0, 1]), pr([0, 1]), pr([2, 3])]
    s = within_stats(clients, "ps", P2)
    ordered = [ps_dist(a, b, P2) for a, b in itertools.permutations(clients, 2)]
    assert s.avg == pytest.approx(sum(ordered) / (3 * 2))
    assert s.min == 0 and s.max == 1
    assert within_stats(clients[:1], "ps", P2) is None


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["ps", "g"]))
def test_prefix_distances_match_loops(seed, metric):
    rng = np.random.default_rng(seed)
    rankings = random_rankings(rng, 5)
    params = DistanceParams(int(rng.integers(1, 7)))
    pd = PrefixDistances(rankings, metric, params)
    for p, q in itertools.product(pd.prefixes, repeat=2):
        if p == q:
            s = within_stats(rankings[p], metric, params)
        else:
            s = pair_stats(rankings[p], rankings[q], metric, params)
        got = pd.stats(p, q)
        if s is None:
            assert got is None
        else:
            assert (got.min, got.avg, got.max) == pytest.approx((s.min, s.avg, s.max), abs=1e-12)


# -- growth ------------------------------------------------------------------------------


def growth_oracle(cluster, rankings, metric, params, kind):
    clients = [r for p in cluster.members for r in rankings.get(p, [])]
    pairs = [dist(a, b, metric, params) for a, b in itertools.permutations(clients, 2)]
    if not pairs:
        return None
    num = max(pairs) if kind == "max" else sum(pairs) / len(pairs)
    dens = []
    for p in cluster.members:
        cs = rankings.get(p, [])
        inner = [dist(a, b, metric, params) for a, b in itertools.permutations(cs, 2)]
        if inner:
            dens.append(max(inner) if kind == "max" else sum(inner) / len(inner))
    if not dens or max(dens) == 0:
        return None
    return num / max(dens)


def test_growth_single_prefix_and_identical():
    p = pfx(0)
    rankings = {p: [pr([0, 1]), pr([1, 0])]}
    c = Cluster(0, [p])
    assert diameter_growth(c, rankings, "ps", P2) == 1.0
    assert avg_growth(c, rankings, "ps", P2) == 1.0
    same = {p: [pr([0, 1]), pr([0, 1])], pfx(1): [pr([0, 1])]}
    c2 = Cluster(0, [p, pfx(1)])
    assert diameter_growth(c2, same, "ps", P2) is None
    assert avg_growth(c2, same, "ps", P2) is None


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["ps", "g"]))
def test_growth_matches_oracle(seed, metric):
    rng = np.random.default_rng(seed)
    rankings = random_rankings(rng, 3)
    c = Cluster(0, list(rankings))
    params = DistanceParams(3)
    dg = diameter_growth(c, rankings, metric, params)
    ag = avg_growth(c, rankings, metric, params)
    want_dg = growth_oracle(c, rankings, metric, params, "max")
    want_ag = growth_oracle(c, rankings, metric, params, "avg")
    assert (dg is None) == (want_dg is None)
    assert (ag is None) == (want_ag is None)
    if dg is not None:
        assert dg == pytest.approx(want_dg)
        assert dg >= 1 - 1e-12
    if ag is not None:
        assert ag == pytest.approx(want_ag)
        assert ag >= 0


def test_cluster_growth_rows():
    rankings = {pfx(0): [pr([0, 1]), pr([1, 0])], pfx(1): [pr([2, 3])]}
    part = Partitioning([Cluster(0, [pfx(0), pfx(1)]), Cluster(1, [pfx(2)])], "random")
    rows = cluster_growth(part, rankings, "ps", P2)
    assert rows[0][:3] == (0, 2, 3)
    assert rows[1] == (1, 1, 0, None, None)


# -- in/out --------------------------------------------------------------------------------


def two_cluster_setup():
    rankings = {pfx(i): [pr([i % 2, 2], (i, 0)), pr([i % 2, 3], (i, 1))] for i in range(6)}
    part = Partitioning(
        [Cluster(0, [pfx(i) for i in (0, 2, 4)]), Cluster(1, [pfx(i) for i in (1, 3, 5)])], "random"
    )
    return rankings, part


def test_in_out_separates_planted_clusters():
    rankings, part = two_cluster_setup()
    res = in_out_cluster(part, rankings, "ps", P2, sample=1000, seed=0)
    assert res.in_available == 6 and res.out_available == 9
    assert len(res.in_values) == 6 and len(res.out_values) == 9
    assert "fewer-pairs-than-sample" in res.flags
    assert res.in_values.mean() < res.out_values.mean()


def test_in_out_sampling_is_seeded_and_bounded():
    rng = np.random.default_rng(0)
    rankings = random_rankings(rng, 40)
    prefixes = sorted(rankings)
    part = Partitioning([Cluster(i, prefixes[i::4]) for i in range(4)], "random")
    a = in_out_cluster(part, rankings, "g", P2, sample=50, seed=3)
    b = in_out_cluster(part, rankings, "g", P2, sample=50, seed=3)
    assert len(a.in_values) == len(a.out_values) == 50
    assert np.array_equal(a.in_values, b.in_values) and np.array_equal(a.out_values, b.out_values)
    assert a.flags == ()


def test_in_out_degenerate_cases():
    rankings, _ = two_cluster_setup()
    one = Partitioning([Cluster(0, list(rankings))], "random")
    res = in_out_cluster(one, rankings, "ps", P2)
    assert res.out_values.size == 0
    assert "single-cluster" in res.flags and "no-out-pairs" in res.flags
    _, part = two_cluster_setup()
    empty = in_out_cluster(part, rankings, "ps", P2, sample=0)
    assert empty.in_values.size == 0 and empty.out_values.size == 0


def test_in_out_clients_same_vs_cross_prefix():
    rankings, _ = two_cluster_setup()
    res = in_out_clients(rankings, "ps", P2, sample=100, seed=1)
    assert res.in_available == 6
    assert res.out_available == 12 * 11 // 2 - 6


# -- correlation buckets -------------------------------------------------------------------


def test_rsd_bucket_edges():
    assert rsd_bucket_edges(400) == [0, 50, 200, 400]
    assert rsd_bucket_edges(1460) == [0, 50, 200, 400, 600, 800, 1000, 1200, 1400, 1600]
    assert rsd_bucket_edges(30) == [0, 50, 200]


def test_buckets_single_bucket_and_empty_buckets():
    ps = [pfx(i) for i in range(3)]
    rankings = {p: [pr([0, 1], (p, 0)), pr([1, 0], (p, 1))] for p in ps}
    m = RsdMatrix(ps, 100, np.array([[0, 10, 10], [10, 0, 10], [10, 10, 0]], dtype=float))
    rsim = np.array([[9, 3, 3], [3, 9, 3], [3, 3, 9]])
    one = correlation_buckets(m, rankings, P2, "rsim", rsims=rsim)
    assert len(one) == 1 and one.counts == [3]
    sparse_rsim = np.array([[9, 0, 25], [0, 9, 0], [25, 0, 9]])
    series = correlation_buckets(m, rankings, P2, "rsim", rsims=sparse_rsim)
    assert series.counts == [2, 0, 1]
    assert series.means["ps_avg"][1] is None
    by_rsd = correlation_buckets(m, rankings, P2, "rsd")
    assert by_rsd.edges == [(0, 50), (50, 200)]
    assert by_rsd.counts == [3, 0]
    assert len(series.rows()[0]) == len(series.header())


def test_bucket_means_match_direct_average():
    rng = np.random.default_rng(4)
    rankings = random_rankings(rng, 6)
    ps = sorted(rankings)
    v = rng.uniform(0, 100, size=(6, 6))
    v = np.triu(v, 1) + np.triu(v, 1).T
    sim = rng.integers(0, 30, size=(6, 6))
    sim = np.triu(sim, 1) + np.triu(sim, 1).T
    m = RsdMatrix(ps, 100, v)
    series = correlation_buckets(m, rankings, P2, "rsim", rsims=sim)
    for b, (lo, hi) in enumerate(series.edges):
        vals = [
            pair_stats(rankings[ps[i]], rankings[ps[j]], "g", P2).avg
            for i, j in itertools.combinations(range(6), 2)
            if lo <= sim[i, j] < hi
        ]
        assert series.counts[b] == len(vals)
        if vals:
            assert series.means["g_avg"][b] == pytest.approx(np.mean(vals))
    with pytest.raises(ValueError):
        correlation_buckets(m, rankings, P2, "rsim")


# -- latency difference ----------------------------------------------------------------------


def test_latency_difference_identical_vectors():
    ms = MeasurementSet([(c, r, 10.0 + r) for c in "abc" for r in range(3)])
    assert latency_difference("abc", ms).values == [0, 0, 0]
    assert latency_difference("abc", ms, "representative-top1", "a").values == [0, 0]


def test_latency_difference_hand_computed():
    ms = MeasurementSet([("a", 0, 10.0), ("a", 1, 25.0), ("b", 0, 30.0), ("b", 1, 12.0)])
    worst = latency_difference(["a", "b"], ms)
    assert dict(zip(worst.clients, worst.values)) == {"a": 15.0, "b": 18.0}
    rep = latency_difference(["a", "b"], ms, "representative-top1", representative="a")
    assert rep.values == [18.0] and rep.clients == ["b"]
    self_rep = latency_difference(["a"], ms, "representative-top1", "a", include_representative=True)
    assert self_rep.values == [0.0]


def test_latency_difference_skips_unmeasured():
    ms = MeasurementSet([("a", 0, 10.0), ("b", 1, 12.0)])
    res = latency_difference(["a", "b", "ghost"], ms)
    assert res.values == [] and res.skipped == 3
    rep = latency_difference(["a", "b"], ms, "representative-top1", "a")
    assert rep.skipped == 1
    with pytest.raises(ValueError):
        latency_difference(["a"], ms, "nearest")


@given(st.integers(0, 2**32 - 1))
def test_latency_difference_non_negative(seed):
    rng = np.random.default_rng(seed)
    ms = MeasurementSet()
    for c in range(6):
        for r in rng.choice(5, size=rng.integers(1, 6), replace=False):
            ms.add(str(c), int(r), float(rng.uniform(0, 50)))
    group = [str(c) for c in range(6)]
    assert all(v >= 0 for v in latency_difference(group, ms).values)
    assert all(v >= 0 for v in latency_difference(group, ms, "representative-top1", "0").values)


# -- prefix length, partitions, baselines ----------------------------------------------------


@pytest.mark.parametrize(
    "length,band", [(10, "/10-/15"), (14, "/10-/15"), (15, "/15-/18"), (18, "/18-/24"), (24, "/24-/32"), (32, "/24-/32"), (8, "other")]
)
def test_length_band(length, band):
    assert length_band(length) == band


def test_prefix_length_report():
    p = Prefix.parse("10.0.0.0/16")
    q = Prefix.parse("10.1.1.0/24")
    rankings = {p: [pr([0, 1], "a"), pr([1, 0], "b")], q: [pr([0, 1], "c")]}
    ms = MeasurementSet([("a", 0, 1.0), ("a", 1, 2.0), ("b", 0, 4.0), ("b", 1, 3.0), ("c", 0, 1.0)])
    rows = prefix_length_report(rankings, "ps", P2, ms)
    assert rows[0][:4] == ("10.0.0.0/16", 16, "/15-/18", 2)
    assert rows[0][6] == pytest.approx(1.0)
    assert rows[1][4] is None and rows[1][6] is None


def test_partition_means():
    rs = [pr([0, 1], 1), pr([0, 1], 2), pr([0, 2], 3), pr([1, 0], 4)]
    assert partition_means(rs, 1, "ps", P2) == [pytest.approx(within_stats(rs[:3], "ps", P2).avg)]
    assert partition_means(rs, 2, "ps", P2) == [0.0]


def test_baseline_scatter():
    rankings, part = two_cluster_setup()
    pd = PrefixDistances(rankings, "ps", P2)
    flipped = Partitioning(
        [Cluster(0, [pfx(i) for i in (0, 1, 2)]), Cluster(1, [pfx(i) for i in (3, 4, 5)])], "random"
    )
    rows = baseline_scatter(part, flipped, pd)
    assert len(rows) == 6
    assert all(y > x for _p, x, y in rows)
    lonely = Partitioning([Cluster(i, [pfx(i)]) for i in range(6)], "random")
    assert all(y is None for _p, _x, y in baseline_scatter(part, lonely, pd))
