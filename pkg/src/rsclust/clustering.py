"""Partitionings of prefixes and clients.

The main method is the randomized Pivot algorithm over an RSD matrix. The
other partitionings (top-r optimal, by longest-match prefix, by origin AS,
by country) serve as benchmarks and baselines.
"""

from __future__ import annotations

import ipaddress
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_distance_matrix, check_seed, check_tau
from .rankings import PartialRanking
from .routing import Prefix, RsdMatrix
from .trie import PrefixTable

__all__ = [
    "Cluster",
    "Partitioning",
    "PivotClustering",
    "SweepRow",
    "pivot_cluster",
    "pivot_labels",
    "tau_sweep",
    "optimal_partition",
    "partition_by_prefix",
    "partition_by_as",
    "partition_by_country",
    "random_partition",
    "mean_ci95",
    "METHODS",
]

METHODS = ("pivot-rsd", "r-optimal", "by-prefix", "by-as", "by-country", "random")


@dataclass(frozen=True)
class Cluster:
    id: Hashable
    members: frozenset
    pivot: Hashable | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise ValueError(f"cluster {self.id!r} is empty")
        if self.pivot is not None and self.pivot not in self.members:
            raise ValueError(f"pivot of cluster {self.id!r} is not a member")

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class Partitioning:
    """Disjoint clusters covering ``universe``.

    ``excluded`` lists inputs that could not be placed (unmatched IPs, prefixes
    without a country, ...); they are not part of the universe.
    """

    clusters: list[Cluster]
    method: str
    universe: frozenset = None
    excluded: tuple = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown partitioning method {self.method!r}")
        seen: set = set()
        ids: set = set()
        for cluster in self.clusters:
            if cluster.id in ids:
                raise ValueError(f"duplicate cluster id {cluster.id!r}")
            ids.add(cluster.id)
            if not seen.isdisjoint(cluster.members):
                raise ValueError("clusters overlap")
            seen |= cluster.members
        if self.universe is None:
            self.universe = frozenset(seen)
        elif frozenset(self.universe) != seen:
            raise ValueError("clusters do not cover the universe exactly")
        self.universe = frozenset(self.universe)

    def __len__(self) -> int:
        return len(self.clusters)

    def labels(self) -> dict:
        return {m: c.id for c in self.clusters for m in c.members}

    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def cluster(self, cluster_id) -> Cluster:
        for c in self.clusters:
            if c.id == cluster_id:
                return c
        raise KeyError(cluster_id)


def pivot_labels(values: np.ndarray, tau: float, rng: np.random.Generator):
    """Run Pivot on a square distance matrix.

    Returns ``(labels, pivots)`` where ``labels[i]`` is the creation index of
    the cluster holding item ``i`` and ``pivots[c]`` is the item that seeded
    cluster ``c``.
    """
    n = values.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    pivots: list[int] = []
    unassigned = np.arange(n)
    while unassigned.size:
        p = int(unassigned[rng.integers(unassigned.size)])
        within = values[p, unassigned] <= tau
        within[np.searchsorted(unassigned, p)] = True
        labels[unassigned[within]] = len(pivots)
        pivots.append(p)
        unassigned = unassigned[~within]
    return labels, np.asarray(pivots, dtype=np.int64)


def pivot_cluster(matrix: RsdMatrix, tau: float, seed=None) -> Partitioning:
    """Cluster prefixes with Pivot; cluster ids follow creation order."""
    check_tau(tau, matrix.t_prime)
    labels, pivots = pivot_labels(matrix.values, tau, np.random.default_rng(seed))
    members = defaultdict(list)
    for idx, label in enumerate(labels):
        members[int(label)].append(matrix.prefixes[idx])
    clusters = [
        Cluster(cid, members[cid], matrix.prefixes[int(p)]) for cid, p in enumerate(pivots)
    ]
    return Partitioning(clusters, "pivot-rsd", universe=frozenset(matrix.prefixes))


class PivotClustering(ClusterMixin, BaseEstimator):
    """Pivot clustering on a precomputed distance (RSD) matrix.

    Parameters
    ----------
    tau : float, default=200
        Items within ``tau`` of a pivot join its cluster (ties included).
    t_prime : int or None, default=None
        Upper bound of the distance scale. Taken from ``X`` when ``X`` is an
        :class:`~rsclust.routing.RsdMatrix`. When unknown, only ``tau >= 0``
        is checked.
    random_state : int or None, default=None
        Seed for pivot selection.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
    pivot_indices_ : ndarray of shape (n_clusters,)
    n_clusters_ : int
    """

    def __init__(self, tau=200.0, t_prime=None, random_state=None):
        self.tau = tau
        self.t_prime = t_prime
        self.random_state = random_state

    def fit(self, X, y=None):
        t_prime = self.t_prime
        if isinstance(X, RsdMatrix):
            t_prime = X.t_prime
            X = X.values
        X = check_distance_matrix(X)
        check_tau(self.tau, t_prime)
        rng = np.random.default_rng(self.random_state)
        self.labels_, self.pivot_indices_ = pivot_labels(X, self.tau, rng)
        self.n_clusters_ = len(self.pivot_indices_)
        return self


@dataclass(frozen=True)
class SweepRow:
    tau: float
    mean_clusters: float
    ci_low: float
    ci_high: float
    runs: int
    counts: tuple = field(default=(), compare=False, repr=False)


def mean_ci95(values: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width (0 for a single value)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)


def tau_sweep(matrix: RsdMatrix, taus: Iterable[float], runs: int = 10, seed: int = 0) -> list[SweepRow]:
    """Mean cluster count (with 95% CI) over ``runs`` Pivot runs per threshold.

    Run ``i`` uses seed ``seed + i``, so the table is reproducible and each
    run is independent of the others.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seed = check_seed(seed)
    rows = []
    for tau in taus:
        check_tau(tau, matrix.t_prime)
        counts = [
            len(pivot_labels(matrix.values, tau, np.random.default_rng(seed + i))[1])
            for i in range(runs)
        ]
        mean, half = mean_ci95(counts)
        rows.append(SweepRow(float(tau), mean, mean - half, mean + half, runs, tuple(counts)))
    return rows


def optimal_partition(rankings: Sequence[PartialRanking], r: int) -> Partitioning:
    """Group clients whose top-``r`` regions agree in the same order.

    Clients with fewer than ``r`` known regions are keyed by their whole
    known list.
    """
    if int(r) != r or r < 1:
        raise ValueError("r must be a positive integer")
    groups: dict[tuple, list] = defaultdict(list)
    for ranking in rankings:
        groups[ranking.known[:r]].append(ranking.client)
    clusters = [Cluster(i, groups[key]) for i, key in enumerate(sorted(groups))]
    return Partitioning(clusters, "r-optimal")


def partition_by_prefix(
    clients: Iterable[tuple[Hashable, str]], table: PrefixTable
) -> Partitioning:
    """Group clients by the longest BGP prefix matching their IP.

    Clients whose IP is invalid or unmatched end up in ``excluded``.
    """
    groups: dict[Prefix, list] = defaultdict(list)
    excluded = []
    for client, ip in clients:
        try:
            prefix = table.lookup(ip)
        except (ipaddress.AddressValueError, ValueError):
            prefix = None
        if prefix is None:
            excluded.append(client)
        else:
            groups[prefix].append(client)
    clusters = [Cluster(str(p), groups[p], None) for p in sorted(groups)]
    return Partitioning(clusters, "by-prefix", excluded=tuple(excluded))


def partition_by_as(prefixes: Iterable[Prefix]) -> Partitioning:
    groups: dict[int, list] = defaultdict(list)
    excluded = []
    for prefix in prefixes:
        if prefix.origin_as is None:
            excluded.append(prefix)
        else:
            groups[prefix.origin_as].append(prefix)
    clusters = [Cluster(asn, groups[asn]) for asn in sorted(groups)]
    return Partitioning(clusters, "by-as", excluded=tuple(excluded))


def partition_by_country(prefixes: Iterable[Prefix], geo: Mapping[Prefix, str]) -> Partitioning:
    groups: dict[str, list] = defaultdict(list)
    excluded = []
    for prefix in prefixes:
        country = geo.get(prefix)
        if not country:
            excluded.append(prefix)
        else:
            groups[country].append(prefix)
    clusters = [Cluster(cc, groups[cc]) for cc in sorted(groups)]
    return Partitioning(clusters, "by-country", excluded=tuple(excluded))


def random_partition(reference: Partitioning, seed=None) -> Partitioning:
    """Shuffle members across clusters while keeping every cluster size.

    A null baseline for comparisons; pivots are dropped.
    """
    members = sorted(reference.universe)
    order = np.random.default_rng(seed).permutation(len(members))
    shuffled = [members[i] for i in order]
    clusters, start = [], 0
    for cluster in reference.clusters:
        clusters.append(Cluster(cluster.id, shuffled[start : start + len(cluster)]))
        start += len(cluster)
    return Partitioning(clusters, "random", universe=reference.universe)
