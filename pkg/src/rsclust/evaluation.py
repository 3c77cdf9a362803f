"""Cluster quality measures based on client ranking distances.

Most functions take ``rankings``: a mapping from prefix to the rankings of
the clients that map to it. Prefixes missing from the mapping (or mapped to
an empty list) have no clients and are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .clustering import Cluster, Partitioning, mean_ci95, optimal_partition
from .io import MeasurementSet
from .rankings import DistanceParams, PartialRanking, cross_distances, normalize_metric
from .routing import Prefix, RsdMatrix

__all__ = [
    "PairStats",
    "PrefixDistances",
    "InOutResult",
    "BucketSeries",
    "LatencyDiff",
    "pair_stats",
    "within_stats",
    "diameter_growth",
    "avg_growth",
    "cluster_growth",
    "in_out_cluster",
    "in_out_clients",
    "correlation_buckets",
    "rsd_bucket_edges",
    "latency_difference",
    "prefix_length_report",
    "length_band",
    "LENGTH_BANDS",
    "partition_means",
    "baseline_scatter",
    "STAT_NAMES",
]

Rankings = Mapping[Prefix, Sequence[PartialRanking]]

STAT_NAMES = ("ps_min", "ps_avg", "ps_max", "g_min", "g_avg", "g_max")


@dataclass(frozen=True)
class PairStats:
    min: float
    avg: float
    max: float

    def __post_init__(self):
        if not (self.min <= self.avg + 1e-12 and self.avg <= self.max + 1e-12):
            raise ValueError("PairStats needs min <= avg <= max")


def _clients(rankings: Rankings, prefixes: Iterable[Prefix]) -> list[PartialRanking]:
    out: list[PartialRanking] = []
    for p in prefixes:
        out.extend(rankings.get(p, ()))
    return out


def _offdiag(d: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    return d[~np.eye(n, dtype=bool)]


def pair_stats(
    left: Sequence[PartialRanking],
    right: Sequence[PartialRanking],
    metric: str,
    params: DistanceParams,
) -> PairStats:
    """min / avg / max distance over all cross pairs of two client sets."""
    if not left or not right:
        raise ValueError("both prefixes need at least one client")
    d = cross_distances(left, right, metric, params)
    return PairStats(float(d.min()), float(d.mean()), float(d.max()))


def within_stats(
    clients: Sequence[PartialRanking], metric: str, params: DistanceParams
) -> PairStats | None:
    """Same-prefix statistics over pairs of distinct clients; ``None`` below two clients.

    Averaging over unordered pairs equals averaging over ordered pairs since
    both metrics are symmetric.
    """
    if len(clients) < 2:
        return None
    vals = _offdiag(cross_distances(clients, clients, metric, params))
    return PairStats(float(vals.min()), float(vals.mean()), float(vals.max()))


class PrefixDistances:
    """Block statistics of the client distance matrix, one block per prefix pair.

    ``mins``, ``avgs`` and ``maxs`` are ``(n, n)`` arrays over ``prefixes``.
    Diagonal entries use pairs of distinct clients and are NaN for prefixes
    with a single client. Memory is quadratic in the number of clients.
    """

    def __init__(
        self,
        rankings: Rankings,
        metric: str,
        params: DistanceParams,
        prefixes: Sequence[Prefix] | None = None,
    ):
        order = sorted(rankings) if prefixes is None else list(prefixes)
        self.prefixes = [p for p in order if rankings.get(p)]
        self.index = {p: i for i, p in enumerate(self.prefixes)}
        self.metric = normalize_metric(metric)
        clients = _clients(rankings, self.prefixes)
        counts = np.array([len(rankings[p]) for p in self.prefixes], dtype=np.int64)
        self.counts = counts
        n = len(self.prefixes)
        if n == 0:
            self.mins = self.avgs = self.maxs = np.zeros((0, 0))
            return
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        d = cross_distances(clients, clients, self.metric, params)
        diag = np.diag(d).copy()

        sums = np.add.reduceat(np.add.reduceat(d, offsets, axis=0), offsets, axis=1)
        np.fill_diagonal(d, np.inf)
        mins = np.minimum.reduceat(np.minimum.reduceat(d, offsets, axis=0), offsets, axis=1)
        np.fill_diagonal(d, -np.inf)
        maxs = np.maximum.reduceat(np.maximum.reduceat(d, offsets, axis=0), offsets, axis=1)

        denom = np.outer(counts, counts).astype(float)
        within = counts * (counts - 1)
        self_sums = np.add.reduceat(diag, offsets)
        np.fill_diagonal(sums, np.diag(sums) - self_sums)
        np.fill_diagonal(denom, within)
        with np.errstate(invalid="ignore", divide="ignore"):
            avgs = sums / denom
        single = within == 0
        for arr in (avgs, mins, maxs):
            arr[single, single] = np.nan
        self.mins, self.avgs, self.maxs = mins, avgs, maxs

    def __len__(self) -> int:
        return len(self.prefixes)

    def stats(self, p1: Prefix, p2: Prefix) -> PairStats | None:
        i, j = self.index[p1], self.index[p2]
        if math.isnan(self.avgs[i, j]):
            return None
        return PairStats(float(self.mins[i, j]), float(self.avgs[i, j]), float(self.maxs[i, j]))


def _growth(cluster: Cluster, rankings: Rankings, metric: str, params: DistanceParams, kind: str):
    members = sorted(p for p in cluster.members if rankings.get(p))
    clients = _clients(rankings, members)
    if len(clients) < 2:
        return None
    whole = _offdiag(cross_distances(clients, clients, metric, params))
    numerator = whole.max() if kind == "max" else whole.mean()
    per_prefix = [within_stats(rankings[p], metric, params) for p in members]
    per_prefix = [s for s in per_prefix if s is not None]
    if not per_prefix:
        return None
    denominator = max(s.max if kind == "max" else s.avg for s in per_prefix)
    if denominator == 0:
        return None
    return float(numerator / denominator)


def diameter_growth(
    cluster: Cluster, rankings: Rankings, metric: str, params: DistanceParams
) -> float | None:
    """Cluster diameter over the largest member-prefix diameter.

    ``None`` (NA) when the ratio is undefined: fewer than two clients, no
    prefix with two clients, or a zero denominator.
    """
    return _growth(cluster, rankings, metric, params, "max")


def avg_growth(
    cluster: Cluster, rankings: Rankings, metric: str, params: DistanceParams
) -> float | None:
    """Cluster average pairwise distance over the largest member-prefix average."""
    return _growth(cluster, rankings, metric, params, "avg")


def cluster_growth(
    part: Partitioning, rankings: Rankings, metric: str, params: DistanceParams
) -> list[tuple]:
    """Rows ``(cluster_id, n_prefixes, n_clients, dg, ag)`` for every cluster."""
    rows = []
    for cluster in part.clusters:
        n_clients = sum(len(rankings.get(p, ())) for p in cluster.members)
        rows.append(
            (
                cluster.id,
                len(cluster),
                n_clients,
                diameter_growth(cluster, rankings, metric, params),
                avg_growth(cluster, rankings, metric, params),
            )
        )
    return rows


@dataclass
class InOutResult:
    in_values: np.ndarray
    out_values: np.ndarray
    in_available: int
    out_available: int
    flags: tuple[str, ...] = ()

    def margin_in_se(self) -> float:
        """(out mean - in mean) divided by the pooled standard error."""
        a, b = self.in_values, self.out_values
        if a.size < 2 or b.size < 2:
            return math.nan
        se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        diff = b.mean() - a.mean()
        if se == 0:
            return math.inf if diff > 0 else math.nan
        return float(diff / se)


def _sample_pairs(labels: np.ndarray, sample: int, rng: np.random.Generator, same: bool):
    """Up to ``sample`` distinct unordered index pairs with equal (or unequal) labels."""
    n = labels.size
    groups: dict = {}
    for i, lab in enumerate(labels.tolist()):
        groups.setdefault(lab, []).append(i)
    n_same = sum(len(g) * (len(g) - 1) // 2 for g in groups.values())
    available = n_same if same else n * (n - 1) // 2 - n_same
    if sample <= 0 or available == 0:
        return np.zeros((0, 2), dtype=np.int64), available

    if same:
        pairs = [(g[a], g[b]) for g in groups.values() for a in range(len(g)) for b in range(a + 1, len(g))]
        pairs = np.asarray(pairs, dtype=np.int64)
        if available > sample:
            pairs = pairs[np.sort(rng.choice(available, size=sample, replace=False))]
        return pairs, available

    if available <= sample or available <= 4 * sample:
        iu, ju = np.triu_indices(n, k=1)
        keep = labels[iu] != labels[ju]
        pairs = np.stack([iu[keep], ju[keep]], axis=1)
        if available > sample:
            pairs = pairs[np.sort(rng.choice(available, size=sample, replace=False))]
        return pairs, available

    chosen: set = set()
    out = []
    while len(out) < sample:
        i, j = (int(x) for x in rng.integers(n, size=2))
        if i == j or labels[i] == labels[j]:
            continue
        key = (min(i, j), max(i, j))
        if key in chosen:
            continue
        chosen.add(key)
        out.append(key)
    return np.asarray(out, dtype=np.int64), available


def in_out_cluster(
    part: Partitioning,
    rankings: Rankings,
    metric: str,
    params: DistanceParams,
    sample: int = 1000,
    seed=0,
    distances: PrefixDistances | None = None,
) -> InOutResult:
    """Average client distance of sampled same-cluster and cross-cluster prefix pairs."""
    rng = np.random.default_rng(seed)
    if distances is None:
        distances = PrefixDistances(rankings, metric, params, sorted(part.universe))
    lab = part.labels()
    prefixes = [p for p in distances.prefixes if p in lab]
    idx = np.array([distances.index[p] for p in prefixes], dtype=np.int64)
    codes: dict = {}
    labels = np.array([codes.setdefault(lab[p], len(codes)) for p in prefixes], dtype=np.int64)
    flags = []
    if len(part.clusters) < 2:
        flags.append("single-cluster")
    in_pairs, n_in = _sample_pairs(labels, sample, rng, same=True)
    out_pairs, n_out = _sample_pairs(labels, sample, rng, same=False)
    in_vals = distances.avgs[idx[in_pairs[:, 0]], idx[in_pairs[:, 1]]] if len(in_pairs) else np.zeros(0)
    out_vals = distances.avgs[idx[out_pairs[:, 0]], idx[out_pairs[:, 1]]] if len(out_pairs) else np.zeros(0)
    if n_out == 0:
        flags.append("no-out-pairs")
    if n_in < sample or n_out < sample:
        flags.append("fewer-pairs-than-sample")
    return InOutResult(np.asarray(in_vals), np.asarray(out_vals), n_in, n_out, tuple(flags))


def in_out_clients(
    rankings: Rankings, metric: str, params: DistanceParams, sample: int = 1000, seed=0
) -> InOutResult:
    """Distances of sampled client pairs from the same prefix vs. different prefixes."""
    rng = np.random.default_rng(seed)
    prefixes = sorted(p for p in rankings if rankings[p])
    clients = _clients(rankings, prefixes)
    labels = np.repeat(np.arange(len(prefixes)), [len(rankings[p]) for p in prefixes])
    flags = []
    values = []
    counts = []
    for same in (True, False):
        pairs, available = _sample_pairs(labels, sample, rng, same=same)
        counts.append(available)
        d = [
            cross_distances([clients[i]], [clients[j]], metric, params)[0, 0] for i, j in pairs
        ]
        values.append(np.asarray(d, dtype=float))
    if counts[1] == 0:
        flags.append("no-out-pairs")
    if min(counts) < sample:
        flags.append("fewer-pairs-than-sample")
    return InOutResult(values[0], values[1], counts[0], counts[1], tuple(flags))


@dataclass
class BucketSeries:
    """Per-bucket means and 95% CI half-widths of the six pair statistics."""

    mode: str
    edges: list[tuple[float, float]]
    counts: list[int]
    means: dict[str, list[float | None]] = field(default_factory=dict)
    half_widths: dict[str, list[float | None]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.edges)

    def rows(self) -> list[tuple]:
        out = []
        names = [s for s in STAT_NAMES if s in self.means]
        for b, (lo, hi) in enumerate(self.edges):
            row = [self.mode, lo, hi, self.counts[b]]
            for s in names:
                row += [self.means[s][b], self.half_widths[s][b]]
            out.append(tuple(row))
        return out

    def header(self) -> list[str]:
        names = [s for s in STAT_NAMES if s in self.means]
        return ["mode", "low", "high", "pairs"] + [f"{s}{suf}" for s in names for suf in ("_mean", "_ci95")]


def rsd_bucket_edges(t_prime: float) -> list[float]:
    """``0, 50, 200, 400, ...`` in steps of 200 until ``t_prime`` is covered."""
    edges = [0.0, 50.0, 200.0]
    while edges[-1] < t_prime:
        edges.append(edges[-1] + 200.0)
    return edges


def correlation_buckets(
    matrix: RsdMatrix,
    rankings: Rankings,
    params: DistanceParams,
    mode: str = "rsim",
    rsims: np.ndarray | None = None,
    bucket_size: int = 10,
    metrics: Sequence[str] = ("ps", "g"),
    distances: Mapping[str, PrefixDistances] | None = None,
) -> BucketSeries:
    """Bucket prefix pairs by rsim (fixed width) or RSD (fixed edges).

    Every unordered pair of distinct prefixes that both have clients is
    placed in one bucket; empty buckets are kept with a count of 0.
    """
    if mode not in ("rsim", "rsd"):
        raise ValueError("mode must be 'rsim' or 'rsd'")
    if mode == "rsim" and rsims is None:
        raise ValueError("rsim mode needs the pairwise rsim matrix")
    metrics = [normalize_metric(m) for m in metrics]
    if distances is None:
        distances = {m: PrefixDistances(rankings, m, params, matrix.prefixes) for m in metrics}
    keep = np.array([i for i, p in enumerate(matrix.prefixes) if rankings.get(p)], dtype=np.int64)
    iu, ju = np.triu_indices(keep.size, k=1)
    pi, pj = keep[iu], keep[ju]

    if mode == "rsim":
        values = np.asarray(rsims)[pi, pj]
        n_buckets = int(values.max() // bucket_size) + 1 if values.size else 1
        bucket = (values // bucket_size).astype(np.int64)
        edges = [(b * bucket_size, (b + 1) * bucket_size) for b in range(n_buckets)]
    else:
        values = matrix.values[pi, pj]
        bounds = rsd_bucket_edges(matrix.t_prime)
        edges = list(zip(bounds[:-1], bounds[1:]))
        bucket = np.clip(np.searchsorted(bounds, values, side="right") - 1, 0, len(edges) - 1)

    series = BucketSeries(mode, edges, np.bincount(bucket, minlength=len(edges)).tolist())
    for m in metrics:
        pd = distances[m]
        ri = np.array([pd.index[matrix.prefixes[i]] for i in pi], dtype=np.int64)
        rj = np.array([pd.index[matrix.prefixes[j]] for j in pj], dtype=np.int64)
        for stat, arr in (("min", pd.mins), ("avg", pd.avgs), ("max", pd.maxs)):
            vals = arr[ri, rj] if ri.size else np.zeros(0)
            means, halves = [], []
            for b in range(len(edges)):
                chunk = vals[bucket == b]
                if chunk.size == 0:
                    means.append(None)
                    halves.append(None)
                else:
                    mean, half = mean_ci95(chunk)
                    means.append(mean)
                    halves.append(half)
            series.means[f"{m}_{stat}"] = means
            series.half_widths[f"{m}_{stat}"] = halves
    return series


@dataclass
class LatencyDiff:
    values: list[float]
    clients: list[Hashable]
    skipped: int = 0


def latency_difference(
    group: Iterable[Hashable],
    latencies: MeasurementSet,
    anchor: str = "per-prefix-worst",
    representative: Hashable | None = None,
    include_representative: bool = False,
) -> LatencyDiff:
    """Extra latency a client pays when served by someone else's best region.

    ``per-prefix-worst``: for each client, the candidate regions are the
    top-1 regions of the other group members that this client measured; the
    worst of them (highest latency for this client) is compared with the
    client's own best.

    ``representative-top1``: every other client is served the
    representative's top-1 region.

    Clients without measurements, or without a usable candidate, are skipped
    and counted.
    """
    members = list(dict.fromkeys(group))
    top = {c: latencies.top1(c) for c in members}
    values, clients, skipped = [], [], 0

    if anchor == "representative-top1":
        if representative is None:
            raise ValueError("representative-top1 needs a representative")
        target = latencies.top1(representative)
        for c in members:
            if c == representative and not include_representative:
                continue
            own = top[c]
            lat = latencies.latency(c, target) if target is not None else None
            if own is None or lat is None:
                skipped += 1
                continue
            values.append(lat - latencies.latency(c, own))
            clients.append(c)
        return LatencyDiff(values, clients, skipped)

    if anchor != "per-prefix-worst":
        raise ValueError(f"unknown anchor {anchor!r}")
    for c in members:
        own = top[c]
        if own is None:
            skipped += 1
            continue
        cand = {top[o] for o in members if o != c and top[o] is not None}
        lats = [latencies.latency(c, r) for r in cand]
        lats = [x for x in lats if x is not None]
        if not lats:
            skipped += 1
            continue
        values.append(max(lats) - latencies.latency(c, own))
        clients.append(c)
    return LatencyDiff(values, clients, skipped)


# half-open [lo, hi) on the mask length
LENGTH_BANDS = (("/10-/15", 10, 15), ("/15-/18", 15, 18), ("/18-/24", 18, 24), ("/24-/32", 24, 33))


def length_band(length: int) -> str:
    for label, lo, hi in LENGTH_BANDS:
        if lo <= length < hi:
            return label
    return "other"


def prefix_length_report(
    rankings: Rankings,
    metric: str,
    params: DistanceParams,
    latencies: MeasurementSet | None = None,
) -> list[tuple]:
    """Rows ``(prefix, length, band, n_clients, avg, max, mean_latency_diff)``.

    ``avg``/``max`` are within-prefix pair distances (NA below two clients);
    the latency column averages the per-prefix-worst differences.
    """
    rows = []
    for prefix in sorted(p for p in rankings if rankings[p]):
        clients = rankings[prefix]
        stats = within_stats(clients, metric, params)
        lat = None
        if latencies is not None:
            diffs = latency_difference([r.client for r in clients], latencies).values
            lat = float(np.mean(diffs)) if diffs else None
        rows.append(
            (
                str(prefix),
                prefix.length,
                length_band(prefix.length),
                len(clients),
                None if stats is None else stats.avg,
                None if stats is None else stats.max,
                lat,
            )
        )
    return rows


def partition_means(
    rankings: Sequence[PartialRanking], r: int, metric: str, params: DistanceParams
) -> list[float]:
    """Mean pairwise distance of every r-optimal partition holding two or more clients."""
    by_client = {x.client: x for x in rankings}
    out = []
    for cluster in optimal_partition(rankings, r).clusters:
        members = [by_client[c] for c in sorted(cluster.members, key=str)]
        stats = within_stats(members, metric, params)
        if stats is not None:
            out.append(stats.avg)
    return out


def baseline_scatter(
    rs: Partitioning, baseline: Partitioning, distances: PrefixDistances
) -> list[tuple]:
    """Per-prefix ``(prefix, rs_avg, baseline_avg)`` coordinates.

    Each coordinate is the mean of the prefix's average client distance to
    every other prefix of its cluster under that partitioning, NA when the
    prefix has no clustermate with clients. Points with
    ``baseline_avg > rs_avg`` lie above the x=y line.
    """
    rs_lab, base_lab = rs.labels(), baseline.labels()
    groups_rs: dict = {}
    groups_base: dict = {}
    for p in distances.prefixes:
        if p in rs_lab:
            groups_rs.setdefault(rs_lab[p], []).append(distances.index[p])
        if p in base_lab:
            groups_base.setdefault(base_lab[p], []).append(distances.index[p])

    def mean_to_mates(i, mates):
        others = [j for j in mates if j != i]
        if not others:
            return None
        return float(np.mean(distances.avgs[i, others]))

    rows = []
    for p in distances.prefixes:
        if p not in rs_lab or p not in base_lab:
            continue
        i = distances.index[p]
        rows.append(
            (
                p,
                mean_to_mates(i, groups_rs[rs_lab[p]]),
                mean_to_mates(i, groups_base[base_lab[p]]),
            )
        )
    return rows
