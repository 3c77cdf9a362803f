"""Synthetic scenarios with planted groups.

Each group of prefixes shares a template routing state and a base latency per
server region. The generator realizes the routing states as AS paths, so the
normal pipeline (``extract_nexthops`` -> ``split_sub_ases`` -> RSD) sees
exactly the planted states.

AS layout (``G`` groups, ``H`` hubs, ``O`` observers, ``t' = O + H + G``):

* one origin AS per group, announcing all of that group's prefixes;
* hub ASes, each with path ``[hub, origin]`` to every prefix;
* observer ASes with path ``[observer, hub, origin]``, where the hub is the
  observer's (possibly noisy) template entry for the prefix's group.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, replace

import numpy as np

from .io import MeasurementSet
from .routing import PathRecord, Prefix

__all__ = [
    "SyntheticScenario",
    "SyntheticData",
    "generate_synthetic",
    "group_gap",
    "noiseless_scenario",
    "noisy_scenario",
]

OBSERVER_BASE = 10_000
HUB_BASE = 20_000
ORIGIN_BASE = 30_000
COUNTRIES = ("FR", "DE", "ES", "IT", "CH", "BE")


@dataclass(frozen=True)
class SyntheticScenario:
    """Parameters of a planted scenario.

    Parameters
    ----------
    groups, prefixes_per_group, clients_per_prefix
        Sizes of the planted structure.
    t_prime
        Total number of (sub-)ASes, hubs and origins included.
    route_noise
        Probability that an observer's template entry is resampled for a prefix.
    latency_jitter
        Client latency is ``base + U(0, latency_jitter)`` ms.
    regions
        Number of server regions ``m``.
    known_min, known_max
        Each client measures a random subset of regions of a size drawn
        uniformly from ``[known_min, known_max]`` (``known_max`` defaults to
        ``regions``).
    hubs
        Number of hub ASes, i.e. the alphabet of observer next hops.
    template_drift
        ``1.0`` gives fully distinct templates (every observer uses a
        different hub for every group). Below 1, templates form a chain in
        which each observer entry changes with this probability from one
        group to the next.
    latency_step
        ``None`` draws group base latencies independently from
        ``[latency_low, latency_low + latency_spread]``. Otherwise they form a
        chain with per-step changes drawn from ``U(-latency_step, latency_step)``.
    observe_prob
        Probability that an observer's path toward a prefix is present.
    route_latency
        Couples latency to routing. When positive, every (observer, hub)
        choice carries a fixed per-region shift drawn from
        ``U(-route_latency, route_latency)`` and a prefix's base latency is a
        shared per-region level plus the shifts of all choices in its routing
        state. Prefixes that route alike then see alike latencies, at the
        group level and under route noise. Cannot be combined with
        ``latency_step``.
    """

    groups: int = 5
    prefixes_per_group: int = 20
    clients_per_prefix: int = 5
    t_prime: int = 100
    route_noise: float = 0.0
    latency_jitter: float = 0.0
    regions: int = 30
    known_min: int = 20
    known_max: int | None = None
    hubs: int = 8
    template_drift: float = 1.0
    latency_low: float = 5.0
    latency_spread: float = 200.0
    latency_step: float | None = None
    observe_prob: float = 1.0
    route_latency: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.groups < 1:
            raise ValueError("need at least one group")
        if not 1 <= self.prefixes_per_group <= 256:
            raise ValueError("prefixes_per_group must be in [1, 256]")
        if not 1 <= self.clients_per_prefix <= 254:
            raise ValueError("clients_per_prefix must be in [1, 254]")
        if self.groups > 256:
            raise ValueError("at most 256 groups")
        if self.route_noise < 0 or self.latency_jitter < 0 or self.route_latency < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0 <= self.route_noise <= 1 or not 0 < self.observe_prob <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if not 0 <= self.template_drift <= 1:
            raise ValueError("template_drift must lie in [0, 1]")
        if self.known_min < 1 or self.known_min > self.regions:
            raise ValueError("infeasible scenario: known_min must be in [1, regions]")
        if not self.known_min <= self.max_known <= self.regions:
            raise ValueError("infeasible scenario: known_max must be in [known_min, regions]")
        if self.route_latency > 0 and self.latency_step is not None:
            raise ValueError("route_latency and latency_step are mutually exclusive")
        if self.hubs < 2:
            raise ValueError("need at least two hubs")
        if self.template_drift == 1.0 and self.hubs < self.groups:
            raise ValueError("fully distinct templates need hubs >= groups")
        if self.n_observers < 1:
            raise ValueError("t_prime too small for the hubs and origins")
        if self.n_observers > HUB_BASE - OBSERVER_BASE or self.hubs > ORIGIN_BASE - HUB_BASE:
            raise ValueError("too many ASes for the numbering scheme")

    @property
    def max_known(self) -> int:
        return self.regions if self.known_max is None else self.known_max

    @property
    def n_observers(self) -> int:
        return self.t_prime - self.hubs - self.groups


@dataclass
class SyntheticData:
    scenario: SyntheticScenario
    records: list[PathRecord]
    measurements: MeasurementSet
    labels: dict[Prefix, int]
    client_prefix: dict[str, Prefix]
    geo: dict[Prefix, str]
    templates: np.ndarray
    base_latency: np.ndarray

    @property
    def prefixes(self) -> list[Prefix]:
        return sorted(self.labels)

    def client_labels(self) -> dict[str, int]:
        return {c: self.labels[p] for c, p in self.client_prefix.items()}

    def group_gap(self) -> float:
        return group_gap(self.base_latency)


def group_gap(base: np.ndarray) -> float:
    """Mean absolute base-latency difference over all group pairs and regions."""
    base = np.asarray(base, dtype=float)
    g = base.shape[0]
    if g < 2:
        return 0.0
    i, j = np.triu_indices(g, 1)
    return float(np.abs(base[i] - base[j]).mean())


def _templates(spec: SyntheticScenario, rng: np.random.Generator) -> np.ndarray:
    G, O, H = spec.groups, spec.n_observers, spec.hubs
    out = np.empty((G, O), dtype=np.int64)
    if spec.template_drift == 1.0:
        for o in range(O):
            out[:, o] = rng.permutation(H)[:G]
        return out
    out[0] = rng.integers(H, size=O)
    for g in range(1, G):
        row = out[g - 1].copy()
        change = rng.random(O) < spec.template_drift
        # shift by 1..H-1 so a changed entry always differs
        row[change] = (row[change] + rng.integers(1, H, size=change.sum())) % H
        out[g] = row
    return out


def _base_latencies(spec: SyntheticScenario, rng: np.random.Generator) -> np.ndarray:
    G, m = spec.groups, spec.regions
    lo, hi = spec.latency_low, spec.latency_low + spec.latency_spread
    if spec.latency_step is None:
        return rng.uniform(lo, hi, size=(G, m))
    out = np.empty((G, m))
    out[0] = rng.uniform(lo, hi, size=m)
    for g in range(1, G):
        step = rng.uniform(-spec.latency_step, spec.latency_step, size=m)
        out[g] = np.clip(out[g - 1] + step, lo, None)
    return out


def generate_synthetic(spec: SyntheticScenario) -> SyntheticData:
    """Draw a scenario; the same ``spec`` (seed included) gives identical output."""
    rng = np.random.default_rng(spec.seed)
    templates = _templates(spec, rng)
    base = _base_latencies(spec, rng)
    shifts = None
    if spec.route_latency > 0:
        shifts = rng.uniform(
            -spec.route_latency, spec.route_latency, size=(spec.n_observers, spec.hubs, spec.regions)
        )
        level = base[0]
        observers_idx = np.arange(spec.n_observers)
        base = np.stack([level + shifts[observers_idx, t].sum(axis=0) for t in templates])
        base = np.clip(base, 0.0, None)

    records: list[PathRecord] = []
    labels: dict[Prefix, int] = {}
    client_prefix: dict[str, Prefix] = {}
    geo: dict[Prefix, str] = {}
    ms = MeasurementSet()
    hubs = [HUB_BASE + h for h in range(spec.hubs)]
    observers = [OBSERVER_BASE + o for o in range(spec.n_observers)]

    for g in range(spec.groups):
        origin = ORIGIN_BASE + g
        for j in range(spec.prefixes_per_group):
            net = ipaddress.IPv4Network(((10 << 24) | (g << 16) | (j << 8), 24))
            prefix = Prefix(net, origin)
            labels[prefix] = g
            geo[prefix] = COUNTRIES[int(rng.integers(len(COUNTRIES)))]

            state = templates[g].copy()
            noisy = rng.random(state.size) < spec.route_noise
            state[noisy] = rng.integers(spec.hubs, size=noisy.sum())
            present = rng.random(state.size) < spec.observe_prob
            prefix_base = base[g]
            if shifts is not None:
                moved = np.flatnonzero(state != templates[g])
                delta = shifts[moved, state[moved]] - shifts[moved, templates[g, moved]]
                prefix_base = np.clip(prefix_base + delta.sum(axis=0), 0.0, None)
            for hub in hubs:
                records.append(PathRecord(hub, (hub, origin), prefix))
            for o, obs in enumerate(observers):
                if present[o]:
                    records.append(PathRecord(obs, (obs, hubs[state[o]], origin), prefix))

            for c in range(spec.clients_per_prefix):
                client = str(net.network_address + c + 1)
                client_prefix[client] = prefix
                size = int(rng.integers(spec.known_min, spec.max_known + 1))
                measured = np.sort(rng.choice(spec.regions, size=size, replace=False))
                jitter = rng.uniform(0.0, spec.latency_jitter, size=size)
                for region, lat in zip(measured, prefix_base[measured] + jitter):
                    ms.add(client, int(region), round(float(lat), 3))

    return SyntheticData(spec, records, ms, labels, client_prefix, geo, templates, base)


def noiseless_scenario(seed: int = 0) -> SyntheticScenario:
    """Five fully distinct groups, no noise, every client measuring all regions."""
    return SyntheticScenario(
        groups=5, prefixes_per_group=20, clients_per_prefix=5, t_prime=100,
        regions=48, known_min=48, template_drift=1.0, seed=seed,
    )


def noisy_scenario(
    seed: int = 0, latency_jitter: float | None = None, jitter_fraction: float = 0.1
) -> SyntheticScenario:
    """Five chained groups with route noise 0.1 and route-driven latency.

    Each client measures 20 of 30 regions. Without an explicit
    ``latency_jitter``, jitter is ``jitter_fraction`` times the mean
    inter-group base-latency gap of the drawn scenario.
    """
    spec = SyntheticScenario(
        groups=5, prefixes_per_group=20, clients_per_prefix=5, t_prime=100,
        route_noise=0.1, regions=30, known_min=20, known_max=20,
        template_drift=0.2, latency_spread=50.0, route_latency=2.0, seed=seed,
    )
    if latency_jitter is None:
        # base latencies do not depend on the jitter, so a jitter-free draw gives the gap
        latency_jitter = jitter_fraction * generate_synthetic(spec).group_gap()
    return replace(spec, latency_jitter=float(latency_jitter))
