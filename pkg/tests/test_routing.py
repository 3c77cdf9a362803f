import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsclust.routing import (
    PathRecord,
    Prefix,
    RouteState,
    RoutingStateEncoder,
    SubAsId,
    build_routestates,
    collapse_prepending,
    extract_nexthops,
    rsd_matrix,
    rsd_normalized,
    rsim,
    rsim_matrix,
    split_sub_ases,
)

from oracles import min_replicas_oracle, rsd_oracle

P = Prefix.parse("10.1.0.0/16", 1)
Q = Prefix.parse("10.2.0.0/16", 1)


def state(prefix, mapping):
    return RouteState(prefix, {SubAsId(a): h for a, h in mapping.items()})


# -- prefixes ------------------------------------------------------------------------


def test_prefix_validation():
    assert Prefix.parse("10.1.0.0/16").length == 16
    with pytest.raises(ValueError):
        Prefix.parse("10.1.0.1/16")
    with pytest.raises(ValueError):
        Prefix.parse("0.0.0.0/0")


def test_prefix_equality_ignores_origin():
    assert Prefix.parse("10.1.0.0/16", 5) == Prefix.parse("10.1.0.0/16")
    assert len({Prefix.parse("10.1.0.0/16", 5), Prefix.parse("10.1.0.0/16")}) == 1


# -- next hops -------------------------------------------------------------------------


def test_single_path():
    out = extract_nexthops([(9, (3, 2, 1), P)])
    assert out == {(3, P): {2}, (2, P): {1}, (1, P): {1}}


def test_union_over_paths():
    out = extract_nexthops([(9, (3, 2, 1), P), (9, (3, 4, 1), P)])
    assert out[(3, P)] == {2, 4}


def test_prepending_collapse():
    assert collapse_prepending((5, 5, 2, 1)) == (5, 2, 1)
    assert extract_nexthops([(5, (5, 5, 2, 1), P)]) == extract_nexthops([(5, (5, 2, 1), P)])


def test_empty_path_skipped(caplog):
    out = extract_nexthops([(5, (), P), (5, (2, 1), P)])
    assert out == {(2, P): {1}, (1, P): {1}}
    assert "skipped 1 empty" in caplog.text


@given(st.randoms(use_true_random=False))
def test_extract_nexthops_order_independent(rnd):
    records = [
        PathRecord(o, tuple(rnd.sample(range(1, 8), rnd.randint(1, 5))), rnd.choice([P, Q]))
        for o in range(12)
    ]
    shuffled = records[:]
    rnd.shuffle(shuffled)
    assert extract_nexthops(records) == extract_nexthops(shuffled)


# -- sub-AS splitting --------------------------------------------------------------------


def test_split_example_two_replicas():
    x, y = 10, 20
    subs, assign = split_sub_ases({(1, P): {x}, (1, Q): {x, y}})
    assert subs == {SubAsId(1, 0), SubAsId(1, 1)}
    assert assign == {(SubAsId(1, 0), P): x, (SubAsId(1, 0), Q): x, (SubAsId(1, 1), Q): y}


def test_split_unique_hops_keeps_replica_zero():
    subs, _ = split_sub_ases({(1, P): {2}, (2, P): {3}, (1, Q): {2}})
    assert subs == {SubAsId(1, 0), SubAsId(2, 0)}


def test_split_sorted_assignment():
    _subs, assign = split_sub_ases({(1, P): {7, 5}, (1, Q): {9, 8}})
    assert assign[(SubAsId(1, 0), P)] == 5 and assign[(SubAsId(1, 1), P)] == 7
    assert assign[(SubAsId(1, 0), Q)] == 8 and assign[(SubAsId(1, 1), Q)] == 9


def test_split_is_minimal_and_valid_on_random_instances():
    rnd = random.Random(7)
    prefixes = [Prefix.parse(f"10.{i}.0.0/16") for i in range(6)]
    for _ in range(200):
        nexthops = {}
        for asn in range(1, rnd.randint(1, 6) + 1):
            for p in rnd.sample(prefixes, rnd.randint(1, 6)):
                nexthops[(asn, p)] = set(rnd.sample(range(100, 110), rnd.randint(1, 3)))
        subs, assign = split_sub_ases(nexthops)
        for asn in {a for a, _ in nexthops}:
            mine = {p: h for (a, p), h in nexthops.items() if a == asn}
            assert sum(1 for s in subs if s.base_as == asn) == min_replicas_oracle(mine)
        # coverage: every observation is carried by exactly one sub-AS
        carried = {}
        for (sub, p), hop in assign.items():
            carried.setdefault((sub.base_as, p), set()).add(hop)
        assert carried == nexthops


def test_build_routestates_flags_missing(caplog):
    split = split_sub_ases({(1, P): {2}})
    states = build_routestates(split, [P, Q])
    assert states[0].nexthop == {SubAsId(1): 2}
    assert states[1].is_empty
    assert "no observed next hops" in caplog.text


# -- rsim / RSD --------------------------------------------------------------------------


def test_rsim_and_rsd_examples():
    a = state(P, {1: "x", 2: "y", 4: "z"})
    b = state(Q, {1: "x", 2: "q", 4: "z"})
    assert rsim(a, b) == 2
    assert rsd_normalized(a, b, 5) == pytest.approx(5 / 3)
    assert rsd_normalized(a, a, 5) == 0
    assert rsd_normalized(a, state(Q, {7: "x"}), 5) == 5


def test_rsd_is_not_t_prime_minus_rsim_with_partial_states():
    a = state(P, {1: "x", 2: "y", 4: "z"})
    b = state(Q, {1: "x", 2: "q", 4: "z"})
    assert rsd_normalized(a, b, 5) != 5 - rsim(a, b)


def test_rsd_equals_t_prime_minus_rsim_when_fully_known():
    rnd = random.Random(1)
    for _ in range(100):
        t = rnd.randint(1, 8)
        a = state(P, {s: rnd.randint(0, 2) for s in range(t)})
        b = state(Q, {s: rnd.randint(0, 2) for s in range(t)})
        assert rsd_normalized(a, b, t) == pytest.approx(t - rsim(a, b))


def test_identical_maps_on_different_prefixes_are_zero():
    a = state(P, {1: 2})
    b = state(Q, {1: 2})
    assert rsd_normalized(a, b, 3) == 0


@given(st.integers(0, 2**32 - 1))
def test_rsd_matrix_matches_pairwise(seed):
    rng = np.random.default_rng(seed)
    t = int(rng.integers(1, 9))
    prefixes = [Prefix.parse(f"10.{i}.0.0/16") for i in range(6)]
    states = []
    for p in prefixes:
        known = rng.random(t) < 0.6
        states.append(state(p, {s: int(rng.integers(3)) for s in range(t) if known[s]}))
    mat = rsd_matrix(states, t)
    sim = rsim_matrix(states)
    v = mat.values
    assert np.allclose(v, v.T)
    assert np.all(np.diag(v) == 0)
    assert np.all((v >= 0) & (v <= t))
    for i in range(6):
        for j in range(6):
            if i != j:
                assert v[i, j] == pytest.approx(float(rsd_oracle(states[i].nexthop, states[j].nexthop, t)))
            assert sim[i, j] == rsim(states[i], states[j])


def test_rsd_matrix_identical_states():
    s = state(P, {1: 2})
    assert rsd_matrix([s, state(Q, {1: 2})], 3).values.tolist() == [[0, 0], [0, 0]]


# -- estimator ----------------------------------------------------------------------------


def test_encoder_fit_transform():
    records = [(9, (9, 3, 1), P), (9, (9, 4, 1), Q), (8, (8, 3, 1), P)]
    enc = RoutingStateEncoder()
    X = enc.fit_transform(records)
    assert enc.t_prime_ == len(enc.sub_ases_) == 5
    assert enc.n_ases_ == 5
    assert [p.origin_as for p in enc.prefixes_] == [1, 1]
    cols = {s: j for j, s in enumerate(enc.sub_ases_)}
    assert X[0, cols[SubAsId(9)]] == 3 and X[1, cols[SubAsId(9)]] == 4
    assert X[1, cols[SubAsId(8)]] == -1
    assert enc.get_params() == {}
    assert enc.rsd_matrix().values.shape == (2, 2)


def test_encoder_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        RoutingStateEncoder().transform([P])
