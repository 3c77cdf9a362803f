"""Server rankings and the distances used to compare them.

A client ranks server regions by measured latency. Only a subset of regions is
measured per client, so rankings are partial: regions that were not measured
are simply absent from ``PartialRanking.known``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

__all__ = [
    "PartialRanking",
    "DistanceParams",
    "ranking_from_latencies",
    "spearman_footrule",
    "ps_dist",
    "g_dist",
    "padded_ranks",
    "pairwise_distances",
    "cross_distances",
    "METRICS",
    "normalize_metric",
]

METRICS = ("ps", "g")
_METRIC_ALIASES = {"ps": "ps", "ps-dist": "ps", "g": "g", "g-dist": "g"}


def normalize_metric(metric: str) -> str:
    """Map ``ps``/``ps-dist``/``g``/``g-dist`` onto the short names."""
    try:
        return _METRIC_ALIASES[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}") from None


@dataclass(frozen=True)
class PartialRanking:
    """A client's preference order over the server regions it measured.

    ``known[0]`` is the client's best (lowest latency) region.
    """

    client: Hashable
    m: int
    known: tuple[int, ...]

    def __post_init__(self):
        known = tuple(int(r) for r in self.known)
        object.__setattr__(self, "known", known)
        if self.m < 1:
            raise ValueError("m must be positive")
        if not known:
            raise ValueError("a ranking needs at least one known region")
        if len(set(known)) != len(known):
            raise ValueError(f"duplicate regions in ranking of {self.client!r}")
        if min(known) < 0 or max(known) >= self.m:
            raise ValueError(f"region id out of range [0, {self.m})")

    @property
    def k_effective(self) -> int:
        return len(self.known)

    @property
    def top1(self) -> int:
        return self.known[0]

    def truncated(self, k: int) -> tuple[int, ...]:
        return self.known[:k]


@dataclass(frozen=True)
class DistanceParams:
    """Padding parameter for ps-dist: unknown regions get rank ``k + 1``."""

    k: int = 20

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")

    @property
    def normalizer(self) -> int:
        return self.k * (self.k + 1)


def ranking_from_latencies(
    latencies: Mapping[int, float], m: int, client: Hashable = None
) -> PartialRanking:
    """Order measured regions by ascending latency, ties broken by region id."""
    if not latencies:
        raise ValueError("no measurements")
    for region, value in latencies.items():
        value = float(value)
        if math.isnan(value) or math.isinf(value) or value < 0:
            raise ValueError(f"invalid latency {value!r} for region {region}")
    order = sorted(latencies, key=lambda r: (float(latencies[r]), r))
    return PartialRanking(client=client, m=m, known=tuple(order))


def spearman_footrule(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Classic footrule: sum of absolute rank displacements of two permutations."""
    if len(a) != len(b) or set(a) != set(b) or len(set(a)) != len(a):
        raise ValueError("footrule needs two complete rankings of the same elements")
    pos_b = {x: i for i, x in enumerate(b)}
    return sum(abs(i - pos_b[x]) for i, x in enumerate(a))


def _check_same_m(a: PartialRanking, b: PartialRanking) -> None:
    if a.m != b.m:
        raise ValueError(f"rankings over different region counts ({a.m} != {b.m})")


def ps_dist(a: PartialRanking, b: PartialRanking, params: DistanceParams) -> float:
    """Partial Spearman footrule distance normalized to [0, 1].

    Each ranking is truncated to its top ``k`` entries; a region at position
    ``i`` gets rank ``i`` and every other region gets rank ``k + 1``. The l1
    distance between the two rank vectors is divided by ``k * (k + 1)``.
    """
    _check_same_m(a, b)
    k = params.k
    ta = {r: i for i, r in enumerate(a.truncated(k), start=1)}
    tb = {r: i for i, r in enumerate(b.truncated(k), start=1)}
    pad = k + 1
    # regions unknown to both contribute |pad - pad| = 0
    total = sum(abs(ta.get(r, pad) - tb.get(r, pad)) for r in ta.keys() | tb.keys())
    return total / params.normalizer


def g_dist(
    a: PartialRanking, b: PartialRanking, params: DistanceParams | None = None
) -> float:
    """Geometric distance: ``1 - sum(2**-i)`` over positions where both agree.

    With ``params`` the known lists are truncated to the top ``k`` first.
    """
    _check_same_m(a, b)
    ka = a.known if params is None else a.truncated(params.k)
    kb = b.known if params is None else b.truncated(params.k)
    agree = 0.0
    for i, (x, y) in enumerate(zip(ka, kb), start=1):
        if x == y:
            agree += 2.0 ** -i
    return 1.0 - agree


# Vectorized forms used by the evaluation code. They agree with the scalar
# functions above to floating point precision (see tests/test_rankings.py).


def padded_ranks(rankings: Sequence[PartialRanking], params: DistanceParams) -> np.ndarray:
    """Rank matrix of shape ``(n, m)`` with ``k + 1`` for unknown regions."""
    if not rankings:
        return np.zeros((0, 0))
    m = rankings[0].m
    out = np.full((len(rankings), m), params.k + 1, dtype=np.int64)
    for row, r in enumerate(rankings):
        if r.m != m:
            raise ValueError("rankings over different region counts")
        top = r.truncated(params.k)
        out[row, list(top)] = np.arange(1, len(top) + 1)
    return out


def _position_matrix(rankings: Sequence[PartialRanking], width: int) -> np.ndarray:
    out = np.full((len(rankings), width), -1, dtype=np.int64)
    for row, r in enumerate(rankings):
        top = r.known[:width]
        out[row, : len(top)] = top
    return out


def cross_distances(
    left: Sequence[PartialRanking],
    right: Sequence[PartialRanking],
    metric: str,
    params: DistanceParams,
) -> np.ndarray:
    """Distance matrix between two lists of rankings, shape ``(len(left), len(right))``."""
    metric = normalize_metric(metric)
    if not left or not right:
        return np.zeros((len(left), len(right)))
    if left[0].m != right[0].m:
        raise ValueError("rankings over different region counts")
    if metric == "ps":
        from scipy.spatial.distance import cdist

        ra = padded_ranks(left, params)
        rb = padded_ranks(right, params)
        return cdist(ra, rb, metric="cityblock") / params.normalizer

    pa = _position_matrix(left, params.k)
    pb = _position_matrix(right, params.k)
    weights = 2.0 ** -np.arange(1, params.k + 1)
    out = np.empty((len(left), len(right)))
    # chunk rows to bound the (rows, n_right, k) temporary
    step = max(1, 4_000_000 // max(1, len(right) * params.k))
    for start in range(0, len(left), step):
        block = pa[start : start + step]
        match = (block[:, None, :] == pb[None, :, :]) & (block[:, None, :] >= 0)
        out[start : start + step] = 1.0 - match @ weights
    return out


def pairwise_distances(
    rankings: Sequence[PartialRanking], metric: str, params: DistanceParams
) -> np.ndarray:
    """Symmetric distance matrix over one list of rankings."""
    return cross_distances(rankings, rankings, metric, params)
