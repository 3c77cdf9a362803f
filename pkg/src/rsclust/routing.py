"""Routing states of BGP prefixes and the routing state distance (RSD).

The routing state of a prefix is the vector of next-hop choices that every
(sub-)AS makes toward it. ASes that use more than one next hop for some prefix
are split into the minimal number of sub-ASes so that every
(sub-AS, prefix) pair has a single next hop.
"""

from __future__ import annotations

import ipaddress
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

log = logging.getLogger(__name__)

__all__ = [
    "Prefix",
    "PathRecord",
    "SubAsId",
    "RouteState",
    "RsdMatrix",
    "collapse_prepending",
    "extract_nexthops",
    "split_sub_ases",
    "build_routestates",
    "rsim",
    "rsd_normalized",
    "rsd_matrix",
    "rsim_matrix",
    "RoutingStateEncoder",
]


@dataclass(frozen=True, order=True)
class Prefix:
    """An IPv4 prefix, optionally tagged with the AS that originates it.

    Equality and hashing use the network only, so a prefix parsed from a
    cluster file compares equal to the same prefix learned from BGP paths.
    """

    network: ipaddress.IPv4Network
    origin_as: int | None = field(default=None, compare=False)

    def __post_init__(self):
        net = self.network
        if not isinstance(net, ipaddress.IPv4Network):
            # strict: host bits below the mask must be zero
            net = ipaddress.IPv4Network(str(net), strict=True)
            object.__setattr__(self, "network", net)
        if net.prefixlen == 0:
            raise ValueError("prefix length must be in (0, 32]")

    @classmethod
    def parse(cls, text: str, origin_as: int | None = None) -> "Prefix":
        return cls(ipaddress.IPv4Network(text.strip(), strict=True), origin_as)

    @property
    def length(self) -> int:
        return self.network.prefixlen

    def __str__(self) -> str:
        return str(self.network)


class PathRecord(NamedTuple):
    observer: int
    path: tuple[int, ...]
    prefix: Prefix


class SubAsId(NamedTuple):
    base_as: int
    replica: int = 0

    def __str__(self) -> str:
        return f"{self.base_as}.{self.replica}"


@dataclass(frozen=True)
class RouteState:
    prefix: Prefix
    nexthop: Mapping[SubAsId, int]

    @property
    def is_empty(self) -> bool:
        return not self.nexthop


@dataclass
class RsdMatrix:
    """Pairwise normalized RSD over an ordered list of prefixes."""

    prefixes: list[Prefix]
    t_prime: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.prefixes)
        if self.values.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {self.values.shape}")

    def __len__(self) -> int:
        return len(self.prefixes)


def collapse_prepending(path: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for asn in path:
        if not out or out[-1] != asn:
            out.append(int(asn))
    return tuple(out)


def extract_nexthops(
    records: Iterable[PathRecord | tuple],
) -> dict[tuple[int, Prefix], set[int]]:
    """Next hops seen for every (AS, prefix) pair along the given AS paths.

    The last AS on a path is the origin and is its own next hop. Empty paths
    are skipped and counted in a log warning.
    """
    result: dict[tuple[int, Prefix], set[int]] = defaultdict(set)
    skipped = 0
    for _observer, path, prefix in records:
        path = collapse_prepending(path)
        if not path:
            skipped += 1
            continue
        for here, there in zip(path, path[1:]):
            result[(here, prefix)].add(there)
        origin = path[-1]
        result[(origin, prefix)].add(origin)
    if skipped:
        log.warning("skipped %d empty AS path(s)", skipped)
    return dict(result)


def split_sub_ases(
    nexthops: Mapping[tuple[int, Prefix], set[int]],
) -> tuple[set[SubAsId], dict[tuple[SubAsId, Prefix], int]]:
    """Split every AS into as many sub-ASes as its largest per-prefix next-hop set.

    For each (AS, prefix), the distinct next hops in ascending order go to
    replicas 0, 1, ... so every (sub-AS, prefix) pair has one next hop.
    """
    replicas: dict[int, int] = defaultdict(int)
    assignment: dict[tuple[SubAsId, Prefix], int] = {}
    for (asn, prefix), hops in nexthops.items():
        ordered = sorted(hops)
        replicas[asn] = max(replicas[asn], len(ordered))
        for replica, hop in enumerate(ordered):
            assignment[(SubAsId(asn, replica), prefix)] = hop
    sub_ases = {SubAsId(asn, i) for asn, count in replicas.items() for i in range(count)}
    return sub_ases, assignment


def build_routestates(
    split: tuple[set[SubAsId], Mapping[tuple[SubAsId, Prefix], int]],
    prefixes: Sequence[Prefix],
) -> list[RouteState]:
    _sub_ases, assignment = split
    by_prefix: dict[Prefix, dict[SubAsId, int]] = defaultdict(dict)
    for (sub, prefix), hop in assignment.items():
        by_prefix[prefix][sub] = hop
    states = []
    for prefix in prefixes:
        state = RouteState(prefix, by_prefix.get(prefix, {}))
        if state.is_empty:
            log.warning("prefix %s has no observed next hops", prefix)
        states.append(state)
    return states


def rsim(a: RouteState, b: RouteState) -> int:
    """Number of sub-ASes that pick the same known next hop toward both prefixes."""
    small, large = (a.nexthop, b.nexthop) if len(a.nexthop) <= len(b.nexthop) else (b.nexthop, a.nexthop)
    return sum(1 for sub, hop in small.items() if large.get(sub) == hop)


def rsd_normalized(a: RouteState, b: RouteState, t_prime: int) -> float:
    """Fraction of commonly known next hops that differ, scaled to ``[0, t_prime]``.

    Pairs with no commonly known sub-AS are maximally distant (``t_prime``).
    """
    if a is b or a == b:
        return 0.0
    common = a.nexthop.keys() & b.nexthop.keys()
    if not common:
        return float(t_prime)
    differ = sum(1 for sub in common if a.nexthop[sub] != b.nexthop[sub])
    return differ / len(common) * t_prime


def _indicator_matrices(states: Sequence[RouteState]):
    """Sparse known-indicator and (sub-AS, next hop) one-hot matrices."""
    columns: dict[SubAsId, int] = {}
    pairs: dict[tuple[SubAsId, int], int] = {}
    k_rows, k_cols, p_cols = [], [], []
    for row, state in enumerate(states):
        for sub, hop in state.nexthop.items():
            k_rows.append(row)
            k_cols.append(columns.setdefault(sub, len(columns)))
            p_cols.append(pairs.setdefault((sub, hop), len(pairs)))
    n = len(states)
    data = np.ones(len(k_rows), dtype=np.int64)
    known = sparse.csr_matrix((data, (k_rows, k_cols)), shape=(n, max(1, len(columns))))
    onehot = sparse.csr_matrix((data, (k_rows, p_cols)), shape=(n, max(1, len(pairs))))
    return known, onehot


def rsim_matrix(states: Sequence[RouteState]) -> np.ndarray:
    _known, onehot = _indicator_matrices(states)
    return np.asarray((onehot @ onehot.T).todense(), dtype=np.int64)


def rsd_matrix(states: Sequence[RouteState], t_prime: int) -> RsdMatrix:
    """All-pairs normalized RSD.

    Common-known counts and agreement counts are obtained as sparse Gram
    matrices, which gives the same values as calling ``rsd_normalized`` on
    every pair.
    """
    known, onehot = _indicator_matrices(states)
    common = np.asarray((known @ known.T).todense(), dtype=float)
    agree = np.asarray((onehot @ onehot.T).todense(), dtype=float)
    values = np.full(common.shape, float(t_prime))
    has = common > 0
    values[has] = (common[has] - agree[has]) / common[has] * t_prime
    np.fill_diagonal(values, 0.0)
    return RsdMatrix([s.prefix for s in states], int(t_prime), values)


class RoutingStateEncoder(TransformerMixin, BaseEstimator):
    """Learn the sub-AS universe from AS paths and encode prefixes as routing states.

    ``fit`` takes path records ``(observer, as_path, prefix)``. ``transform``
    maps a list of prefixes to an integer matrix of shape ``(n, t_prime)``
    whose column ``j`` holds the next hop chosen by ``sub_ases_[j]``, or -1
    when unknown.

    Attributes
    ----------
    sub_ases_ : list of SubAsId
        Sorted sub-AS universe; its length is ``t_prime_``.
    n_ases_ : int
        Number of distinct ASes before splitting.
    prefixes_ : list of Prefix
        Prefixes seen during ``fit``, sorted.
    """

    def fit(self, X, y=None):
        records = list(X)
        self.nexthops_ = extract_nexthops(records)
        sub_ases, self.assignment_ = split_sub_ases(self.nexthops_)
        self.sub_ases_ = sorted(sub_ases)
        self.t_prime_ = len(self.sub_ases_)
        self.n_ases_ = len({s.base_as for s in self.sub_ases_})
        origins: dict[Prefix, int] = {}
        for _obs, path, prefix in records:
            path = collapse_prepending(path)
            if path:
                origins.setdefault(prefix, path[-1])
        self.prefixes_ = sorted(
            Prefix(p.network, p.origin_as if p.origin_as is not None else origins.get(p))
            for p in {p for (_a, p) in self.nexthops_}
        )
        return self

    def routestates(self, prefixes: Sequence[Prefix] | None = None) -> list[RouteState]:
        check_is_fitted(self, "assignment_")
        prefixes = self.prefixes_ if prefixes is None else list(prefixes)
        return build_routestates((set(self.sub_ases_), self.assignment_), prefixes)

    def transform(self, X):
        states = self.routestates(X)
        column = {s: j for j, s in enumerate(self.sub_ases_)}
        out = np.full((len(states), self.t_prime_), -1, dtype=np.int64)
        for i, state in enumerate(states):
            for sub, hop in state.nexthop.items():
                out[i, column[sub]] = hop
        return out

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).transform(self.prefixes_)

    def rsd_matrix(self, prefixes: Sequence[Prefix] | None = None) -> RsdMatrix:
        return rsd_matrix(self.routestates(prefixes), self.t_prime_)
