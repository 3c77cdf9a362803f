"""Rank aggregation per cluster and representative clients."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .clustering import Cluster
from .rankings import DistanceParams, PartialRanking, cross_distances
from .routing import Prefix

log = logging.getLogger(__name__)

__all__ = [
    "ConsensusRanking",
    "Representative",
    "RankAggregator",
    "borda_scores",
    "borda_consensus",
    "plurality_consensus",
    "select_representative",
    "evaluate_representative",
    "STRATEGIES",
]

STRATEGIES = ("random-all", "random-pivot")


@dataclass(frozen=True)
class ConsensusRanking:
    cluster_id: Hashable
    method: str
    order: tuple[int, ...]

    def as_ranking(self, m: int) -> PartialRanking:
        return PartialRanking(client=("consensus", self.cluster_id), m=m, known=self.order)


def _check_voters(rankings: Sequence[PartialRanking]) -> None:
    if not rankings:
        raise ValueError("consensus needs at least one ranking")
    m = rankings[0].m
    if any(r.m != m for r in rankings):
        raise ValueError("rankings over different region counts")


def borda_scores(rankings: Sequence[PartialRanking], params: DistanceParams) -> dict[int, int]:
    """Sum of padded ranks per region over all voters (lower is better).

    A voter contributes the region's position when it is among the voter's
    top ``k``, and ``k + 1`` otherwise.
    """
    _check_voters(rankings)
    k = params.k
    pad = k + 1
    candidates = set()
    for voter in rankings:
        candidates.update(voter.known)
    # start everyone at the padded total and credit each listed position
    scores = dict.fromkeys(candidates, pad * len(rankings))
    for voter in rankings:
        for i, region in enumerate(voter.known[:k], start=1):
            scores[region] += i - pad
    return scores


def borda_consensus(
    rankings: Sequence[PartialRanking], params: DistanceParams, cluster_id: Hashable = None
) -> ConsensusRanking:
    scores = borda_scores(rankings, params)
    order = sorted(scores, key=lambda r: (scores[r], r))
    return ConsensusRanking(cluster_id, "borda", tuple(order))


def plurality_consensus(
    rankings: Sequence[PartialRanking], cluster_id: Hashable = None
) -> ConsensusRanking:
    """Fill position i with the unplaced region holding the most rank-i votes.

    Positions where no unplaced region received a vote are skipped; regions
    never placed this way are appended by ascending id.
    """
    _check_voters(rankings)
    votes: dict[int, Counter] = defaultdict(Counter)
    for voter in rankings:
        for i, region in enumerate(voter.known):
            votes[i][region] += 1
    placed: list[int] = []
    taken: set[int] = set()
    for i in range(max(r.k_effective for r in rankings)):
        tally = [(-n, region) for region, n in votes[i].items() if region not in taken]
        if tally:
            region = min(tally)[1]
            placed.append(region)
            taken.add(region)
    rest = sorted({r for x in rankings for r in x.known} - taken)
    return ConsensusRanking(cluster_id, "plurality", tuple(placed + rest))


class RankAggregator(BaseEstimator):
    """Estimator wrapper around the consensus methods.

    ``fit`` takes a list of :class:`PartialRanking`; the aggregated order is
    stored in ``consensus_``.
    """

    def __init__(self, method="borda", k=20):
        self.method = method
        self.k = k

    def fit(self, X, y=None):
        if self.method == "borda":
            params = DistanceParams(self.k)
            self.scores_ = borda_scores(X, params)
            self.consensus_ = borda_consensus(X, params)
        elif self.method == "plurality":
            self.consensus_ = plurality_consensus(X)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.n_regions_ = X[0].m
        return self

    def transform(self, X=None):
        return self.consensus_.as_ranking(self.n_regions_)


@dataclass(frozen=True)
class Representative:
    client: Hashable
    ranking: PartialRanking
    strategy: str
    fallback: bool = False


def _cluster_clients(members: Sequence[Prefix], rankings) -> list[PartialRanking]:
    return [r for p in members for r in rankings.get(p, ())]


def select_representative(
    cluster: Cluster,
    rankings: Mapping[Prefix, Sequence[PartialRanking]],
    strategy: str = "random-all",
    seed=None,
) -> Representative:
    """Pick one client uniformly at random.

    ``random-all`` draws from every client of the cluster, ``random-pivot``
    from the clients of the pivot prefix only. Without clients in the pivot
    prefix, ``random-pivot`` falls back to ``random-all`` and sets
    ``fallback``.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    fallback = False
    if strategy == "random-pivot":
        candidates = list(rankings.get(cluster.pivot, ())) if cluster.pivot is not None else []
        if not candidates:
            log.warning("cluster %s: pivot prefix has no clients, using all clients", cluster.id)
            fallback = True
    if strategy == "random-all" or fallback:
        candidates = _cluster_clients(sorted(cluster.members), rankings)
    if not candidates:
        raise ValueError(f"cluster {cluster.id!r} has no clients")
    pick = candidates[int(rng.integers(len(candidates)))]
    return Representative(pick.client, pick, strategy, fallback)


def evaluate_representative(
    cluster: Cluster,
    rankings: Mapping[Prefix, Sequence[PartialRanking]],
    consensus: ConsensusRanking,
    representative: Hashable | PartialRanking | Representative,
    metric: str,
    params: DistanceParams,
) -> tuple[float, float]:
    """Average distance from the consensus, and from the representative, to all members.

    The representative's own ranking is one of the members, so both averages
    run over the same set and a representative whose ranking equals the
    consensus lands exactly on the x=y line.
    """
    members = _cluster_clients(sorted(cluster.members), rankings)
    if not members:
        raise ValueError(f"cluster {cluster.id!r} has no clients")
    if isinstance(representative, (Representative, PartialRanking)):
        representative = representative.client
    rep = [r for r in members if r.client == representative]
    if not rep:
        raise ValueError(f"representative {representative!r} is not in cluster {cluster.id!r}")
    cons = consensus.as_ranking(members[0].m)
    cons_avg = float(cross_distances([cons], members, metric, params).mean())
    rep_avg = float(cross_distances(rep[:1], members, metric, params).mean())
    return cons_avg, rep_avg
