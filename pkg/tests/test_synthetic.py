import ipaddress

import numpy as np
import pytest

from rsclust.io import serialize_bgp_paths, serialize_measurements
from rsclust.routing import RoutingStateEncoder
from rsclust.synthetic import (
    SyntheticScenario,
    generate_synthetic,
    group_gap,
    noiseless_scenario,
    noisy_scenario,
)


def test_same_seed_same_bytes():
    spec = SyntheticScenario(groups=3, prefixes_per_group=4, t_prime=30, route_noise=0.2, latency_jitter=3, seed=9)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert serialize_bgp_paths(a.records) == serialize_bgp_paths(b.records)
    assert serialize_measurements(a.measurements) == serialize_measurements(b.measurements)
    c = generate_synthetic(SyntheticScenario(**{**spec.__dict__, "seed": 10}))
    assert serialize_measurements(c.measurements) != serialize_measurements(a.measurements)


def test_noiseless_planted_structure():
    data = generate_synthetic(noiseless_scenario(0))
    enc = RoutingStateEncoder().fit(data.records)
    assert enc.t_prime_ == 100
    m = enc.rsd_matrix(data.prefixes)
    lab = np.array([data.labels[p] for p in m.prefixes])
    same = lab[:, None] == lab[None, :]
    assert (m.values[same] == 0).all()
    assert (m.values[~same] == 100).all()
    # every client of a group sees the same latency order
    rankings = data.measurements.rankings(48)
    by_group = {}
    for client, prefix in data.client_prefix.items():
        by_group.setdefault(data.labels[prefix], set()).add(rankings[client].known)
    assert all(len(v) == 1 for v in by_group.values())
    assert len({next(iter(v)) for v in by_group.values()}) == 5


def test_client_ids_fall_inside_their_prefix():
    data = generate_synthetic(SyntheticScenario(groups=2, prefixes_per_group=3, t_prime=20, hubs=4))
    for client, prefix in data.client_prefix.items():
        assert ipaddress.IPv4Address(client) in prefix.network


def test_known_counts_respected():
    spec = SyntheticScenario(groups=2, prefixes_per_group=3, t_prime=20, hubs=4, regions=10, known_min=3, known_max=5)
    data = generate_synthetic(spec)
    for c in data.measurements.clients:
        assert 3 <= len(data.measurements.latencies(c)) <= 5


@pytest.mark.parametrize(
    "kwargs",
    [
        {"known_min": 31},
        {"known_min": 5, "known_max": 4},
        {"groups": 0},
        {"route_latency": 1.0, "latency_step": 2.0},
        {"route_noise": 1.5},
        {"t_prime": 10},
        {"hubs": 3, "groups": 5},
    ],
)
def test_infeasible_scenarios_rejected(kwargs):
    with pytest.raises(ValueError):
        SyntheticScenario(**kwargs)


def test_group_gap():
    assert group_gap(np.array([[0.0, 0.0], [2.0, 4.0]])) == 3.0
    assert group_gap(np.ones((1, 4))) == 0.0
    base = np.array([[0.0], [1.0], [3.0]])
    assert group_gap(base) == pytest.approx((1 + 3 + 2) / 3)


def test_noisy_preset_jitter_is_tenth_of_gap():
    spec = noisy_scenario(0)
    gap = generate_synthetic(spec).group_gap()
    assert spec.latency_jitter == pytest.approx(0.1 * gap)
    assert noisy_scenario(0, latency_jitter=5.0).latency_jitter == 5.0


def test_route_latency_tracks_routing():
    spec = noisy_scenario(1)
    data = generate_synthetic(spec)
    enc = RoutingStateEncoder().fit(data.records)
    m = enc.rsd_matrix(data.prefixes)
    lab = np.array([data.labels[p] for p in m.prefixes])
    same = lab[:, None] == lab[None, :]
    np.fill_diagonal(same, False)
    off = ~same
    np.fill_diagonal(off, False)
    assert m.values[same].mean() < m.values[off].mean()
