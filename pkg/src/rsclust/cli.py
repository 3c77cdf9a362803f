"""Command-line interface.

Subcommands ``synth``, ``cluster``, ``evaluate``, ``consensus``, ``sweep``,
``optimal`` and ``report`` (which runs the last five in one go). Settings come
from command-line flags, then ``RSCLUST_*`` environment variables, then a JSON
config file (``--config``), then built-in defaults.

Every command reads and validates all of its inputs before it writes
anything, so a failed run leaves no partial output. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .clustering import (
    Cluster,
    Partitioning,
    optimal_partition,
    partition_by_as,
    partition_by_country,
    partition_by_prefix,
    pivot_cluster,
    random_partition,
    tau_sweep,
)
from .consensus import STRATEGIES, borda_consensus, evaluate_representative, plurality_consensus, select_representative
from .evaluation import (
    PrefixDistances,
    cluster_growth,
    correlation_buckets,
    in_out_clients,
    in_out_cluster,
    latency_difference,
    partition_means,
    prefix_length_report,
    baseline_scatter,
)
from .io import (
    parse_assignments,
    parse_bgp_paths,
    parse_geo,
    parse_measurements,
    serialize_assignments,
    serialize_bgp_paths,
    serialize_geo,
    serialize_measurements,
    write_report,
)
from .rankings import DistanceParams, METRICS
from .routing import RoutingStateEncoder, rsim_matrix
from .synthetic import SyntheticScenario, generate_synthetic, noiseless_scenario, noisy_scenario
from .trie import PrefixTable
from ._validation import check_seed, check_tau

log = logging.getLogger("rsclust")

ENV_PREFIX = "RSCLUST_"

DEFAULTS: dict[str, Any] = {
    "tau": 200.0,
    "k": 20,
    "metric": "ps",
    "seed": 0,
    "out": "out",
    "runs": 10,
    "buckets": 10,
    "sample": 1000,
    "taus": None,
    "r_max": 10,
    "preset": "noiseless",
}

OUTPUT_FILES = {
    "synth": ("paths.txt", "measurements.csv", "geo.csv", "labels.csv"),
    "cluster": ("clusters.csv", "cluster_summary.csv", "cluster_sizes.csv"),
    "evaluate": (
        "growth.csv",
        "in_out.csv",
        "in_out_clients.csv",
        "buckets_rsim.csv",
        "buckets_rsd.csv",
        "prefix_length.csv",
        "baseline_as.csv",
        "baseline_country.csv",
        "baseline_random.csv",
    ),
    "consensus": ("consensus.csv", "latency_diff.csv"),
    "sweep": ("sweep.csv",),
    "optimal": ("optimal.csv",),
}


class Fatal(Exception):
    """An error that aborts the command with a nonzero exit code."""


# -- settings ------------------------------------------------------------------


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


CASTS: dict[str, Callable[[Any], Any]] = {
    "tau": float,
    "k": int,
    "metric": str,
    "seed": int,
    "out": str,
    "runs": int,
    "buckets": int,
    "sample": int,
    "taus": _float_list,
    "r_max": int,
    "paths": str,
    "measurements": str,
    "geo": str,
    "assignments": str,
    "preset": str,
}


class Settings:
    """Resolve a setting from flags, environment, config file and defaults, in that order."""

    def __init__(self, args: argparse.Namespace, environ=None):
        self.args = args
        self.environ = os.environ if environ is None else environ
        self.config: dict[str, Any] = {}
        if getattr(args, "config", None):
            try:
                with open(args.config, encoding="utf-8") as fh:
                    self.config = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise Fatal(f"cannot read config {args.config}: {exc}") from None
            if not isinstance(self.config, dict):
                raise Fatal("config file must hold a JSON object")

    def get(self, name: str):
        cast = CASTS.get(name, lambda x: x)
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        env = self.environ.get(ENV_PREFIX + name.upper())
        try:
            if env is not None:
                return cast(env)
            if name in self.config and self.config[name] is not None:
                return cast(self.config[name])
        except (TypeError, ValueError) as exc:
            raise Fatal(f"invalid value for {name}: {exc}") from None
        return DEFAULTS.get(name)

    def require(self, name: str):
        value = self.get(name)
        if value is None:
            raise Fatal(f"--{name.replace('_', '-')} is required")
        return value


# -- loading -------------------------------------------------------------------


def _report_errors(path, errors) -> None:
    for err in errors[:20]:
        print(f"{path}: {err}", file=sys.stderr)
    if len(errors) > 20:
        print(f"{path}: ... {len(errors) - 20} more line errors", file=sys.stderr)
    if errors:
        print(f"{path}: {len(errors)} line error(s) skipped", file=sys.stderr)


def _parse_file(parser, path, what: str, **kwargs):
    if not Path(path).is_file():
        raise Fatal(f"{what} file not found: {path}")
    try:
        parsed = parser(path, **kwargs)
    except (OSError, UnicodeDecodeError) as exc:
        raise Fatal(f"cannot read {what} file {path}: {exc}") from None
    _report_errors(path, parsed.errors)
    return parsed


@dataclass
class Routing:
    encoder: RoutingStateEncoder
    table: PrefixTable

    @property
    def prefixes(self):
        return self.encoder.prefixes_


def load_routing(path) -> Routing:
    parsed = _parse_file(parse_bgp_paths, path, "BGP path")
    if not parsed.value:
        raise Fatal(f"{path}: no valid path records")
    encoder = RoutingStateEncoder().fit(parsed.value)
    return Routing(encoder, PrefixTable(encoder.prefixes_))


@dataclass
class Measurements:
    data: Any
    by_prefix: dict
    rankings: dict
    m: int


def load_measurements(path, routing: Routing) -> Measurements:
    parsed = _parse_file(parse_measurements, path, "measurement")
    ms = parsed.value
    if not ms.clients:
        raise Fatal(f"{path}: no valid measurements")
    m = ms.n_regions
    rankings = ms.rankings(m)
    part = partition_by_prefix([(c, c) for c in ms.clients], routing.table)
    if part.excluded:
        print(
            f"{path}: {len(part.excluded)} client(s) match no prefix and are ignored",
            file=sys.stderr,
        )
    by_prefix = {}
    lookup = {str(p): p for p in routing.prefixes}
    for cluster in part.clusters:
        by_prefix[lookup[cluster.id]] = [rankings[c] for c in sorted(cluster.members)]
    if not by_prefix:
        raise Fatal(f"{path}: no client maps to a known prefix")
    return Measurements(ms, by_prefix, rankings, m)


def load_assignments(path, routing: Routing) -> Partitioning:
    parsed = _parse_file(parse_assignments, path, "cluster assignment")
    part = parsed.value
    if not part.clusters:
        raise Fatal(f"{path}: no valid assignments")
    known = set(routing.prefixes)
    unknown = [p for p in part.universe if p not in known]
    if unknown:
        raise Fatal(f"{path}: {len(unknown)} assigned prefix(es) do not appear in the path file")
    missing = len(known - part.universe)
    if missing:
        print(f"{path}: {missing} prefix(es) have no cluster and are ignored", file=sys.stderr)
    # re-attach origin ASes learned from the paths
    origin = {p: p for p in routing.prefixes}
    clusters = [
        Cluster(c.id, [origin[p] for p in c.members], None if c.pivot is None else origin[c.pivot])
        for c in part.clusters
    ]
    return Partitioning(clusters, part.method)


def _metric(settings: Settings) -> str:
    metric = settings.get("metric")
    if metric not in METRICS:
        raise Fatal(f"--metric must be one of {', '.join(METRICS)}")
    return metric


def _params(settings: Settings) -> DistanceParams:
    k = settings.get("k")
    if k < 1:
        raise Fatal("--k must be >= 1")
    return DistanceParams(k)


def _seed(settings: Settings) -> int:
    try:
        return check_seed(settings.get("seed"))
    except ValueError as exc:
        raise Fatal(str(exc)) from None


def _positive(settings: Settings, name: str, minimum: int = 1) -> int:
    value = settings.get(name)
    if value < minimum:
        raise Fatal(f"--{name.replace('_', '-')} must be >= {minimum}")
    return value


# -- outputs -------------------------------------------------------------------


class Outputs:
    """Collects rendered files and writes them together at the end."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.files: dict[str, str] = {}

    def report(self, name: str, header, rows) -> None:
        self.files[name] = write_report(header, rows)

    def text(self, name: str, content: str) -> None:
        self.files[name] = content

    def write(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        for name, content in self.files.items():
            with open(self.directory / name, "w", encoding="utf-8", newline="") as fh:
                fh.write(content)
        log.info("wrote %d file(s) to %s", len(self.files), self.directory)


# -- commands ------------------------------------------------------------------


def cmd_synth(settings: Settings, out: Outputs) -> None:
    seed = _seed(settings)
    preset = settings.get("preset")
    if preset == "noiseless":
        spec = noiseless_scenario(seed)
    elif preset == "noisy":
        spec = noisy_scenario(seed)
    else:
        raise Fatal("--preset must be noiseless or noisy")
    overrides = {}
    for f in fields(SyntheticScenario):
        value = getattr(settings.args, f.name, None)
        if value is not None and f.name != "seed":
            overrides[f.name] = value
    if overrides:
        spec = SyntheticScenario(**{**spec.__dict__, **overrides})
    try:
        data = generate_synthetic(spec)
    except ValueError as exc:
        raise Fatal(str(exc)) from None
    out.text("paths.txt", serialize_bgp_paths(data.records))
    out.text("measurements.csv", serialize_measurements(data.measurements))
    out.text("geo.csv", serialize_geo(data.geo))
    out.report(
        "labels.csv", ("prefix", "group"), [(str(p), data.labels[p]) for p in data.prefixes]
    )


def _cluster(settings: Settings, routing: Routing, out: Outputs) -> Partitioning:
    seed = _seed(settings)
    enc = routing.encoder
    tau = settings.get("tau")
    try:
        check_tau(tau, enc.t_prime_)
    except ValueError as exc:
        raise Fatal(f"{exc} (t' = {enc.t_prime_} for this data)") from None
    states = enc.routestates()
    empty = sum(s.is_empty for s in states)
    part = pivot_cluster(enc.rsd_matrix(), tau, seed)
    n = len(routing.prefixes)
    out.text("clusters.csv", serialize_assignments(part))
    out.report(
        "cluster_summary.csv",
        ("key", "value"),
        [
            ("prefixes", n),
            ("clusters", len(part)),
            ("reduction", 1.0 - len(part) / n),
            ("tau", float(tau)),
            ("seed", seed),
            ("t_prime", enc.t_prime_),
            ("n_ases", enc.n_ases_),
            ("empty_routestates", empty),
        ],
    )
    sizes = np.bincount(part.sizes())
    out.report(
        "cluster_sizes.csv",
        ("size", "clusters"),
        [(s, int(c)) for s, c in enumerate(sizes) if c],
    )
    print(
        f"{len(part)} clusters over {n} prefixes (reduction {1 - len(part) / n:.1%}), "
        f"t'={enc.t_prime_}, |A|={enc.n_ases_}",
        file=sys.stderr,
    )
    return part


def cmd_cluster(settings: Settings, out: Outputs) -> None:
    routing = load_routing(settings.require("paths"))
    _cluster(settings, routing, out)


def _evaluate(settings, routing, meas, part, geo, out: Outputs) -> None:
    metric = _metric(settings)
    params = _params(settings)
    seed = _seed(settings)
    sample = _positive(settings, "sample", 0)
    bucket_size = _positive(settings, "buckets")
    rankings = meas.by_prefix

    universe = sorted(part.universe)
    without = [p for p in universe if not rankings.get(p)]
    if without:
        print(f"{len(without)} clustered prefix(es) have no measured clients", file=sys.stderr)

    out.report(
        "growth.csv",
        ("metric", "cluster_id", "n_prefixes", "n_clients", "dg", "ag"),
        [(metric, *row) for row in cluster_growth(part, rankings, metric, params)],
    )

    distances = {m: PrefixDistances(rankings, m, params, universe) for m in METRICS}
    io_res = in_out_cluster(part, rankings, metric, params, sample, seed, distances[metric])
    for flag in io_res.flags:
        print(f"in/out: {flag}", file=sys.stderr)
    out.report(
        "in_out.csv",
        ("kind", "avg_distance"),
        [("in", float(v)) for v in io_res.in_values] + [("out", float(v)) for v in io_res.out_values],
    )
    cl_res = in_out_clients(rankings, metric, params, sample, seed)
    out.report(
        "in_out_clients.csv",
        ("kind", "distance"),
        [("same-prefix", float(v)) for v in cl_res.in_values]
        + [("cross-prefix", float(v)) for v in cl_res.out_values],
    )

    enc = routing.encoder
    states = enc.routestates()
    matrix = enc.rsd_matrix()
    all_distances = {m: PrefixDistances(rankings, m, params, matrix.prefixes) for m in METRICS}
    rsim = correlation_buckets(
        matrix, rankings, params, "rsim", rsim_matrix(states), bucket_size, METRICS, all_distances
    )
    out.report("buckets_rsim.csv", rsim.header(), rsim.rows())
    rsd = correlation_buckets(matrix, rankings, params, "rsd", None, bucket_size, METRICS, all_distances)
    out.report("buckets_rsd.csv", rsd.header(), rsd.rows())

    out.report(
        "prefix_length.csv",
        ("prefix", "length", "band", "n_clients", "avg", "max", "mean_latency_diff"),
        prefix_length_report(rankings, metric, params, meas.data),
    )

    scatter_header = ("prefix", "rs_avg", "baseline_avg", "above")

    def scatter(name, baseline):
        rows = []
        for p, x, y in baseline_scatter(part, baseline, distances[metric]):
            above = None if x is None or y is None else y > x
            rows.append((str(p), x, y, above))
        known = [r for r in rows if r[3] is not None]
        if known:
            share = sum(r[3] for r in known) / len(known)
            print(f"{name}: {share:.1%} of prefixes above x=y", file=sys.stderr)
        else:
            print(f"{name}: no comparable prefixes", file=sys.stderr)
        out.report(name, scatter_header, rows)

    if len(part) < 2:
        print("single cluster: baseline comparisons have no out-cluster pairs", file=sys.stderr)
    scatter("baseline_as.csv", partition_by_as(universe))
    if geo is not None:
        by_country = partition_by_country(universe, geo)
        if by_country.excluded:
            print(f"{len(by_country.excluded)} prefix(es) without country", file=sys.stderr)
        scatter("baseline_country.csv", by_country)
    scatter("baseline_random.csv", random_partition(part, seed))


def _geo(settings: Settings):
    path = settings.get("geo")
    if path is None:
        return None
    parsed = _parse_file(parse_geo, path, "geo")
    return parsed.value


def cmd_evaluate(settings: Settings, out: Outputs) -> None:
    routing = load_routing(settings.require("paths"))
    meas = load_measurements(settings.require("measurements"), routing)
    part = load_assignments(settings.require("assignments"), routing)
    geo = _geo(settings)
    _evaluate(settings, routing, meas, part, geo, out)


def _consensus(settings, meas, part, out: Outputs) -> None:
    params = _params(settings)
    seed = _seed(settings)
    rankings = meas.by_prefix
    rows, lat_rows = [], []
    skipped = 0
    for index, cluster in enumerate(part.clusters):
        members = [r for p in sorted(cluster.members) for r in rankings.get(p, ())]
        if not members:
            skipped += 1
            continue
        consensus = {
            "borda": borda_consensus(members, params, cluster.id),
            "plurality": plurality_consensus(members, cluster.id),
        }
        for strategy in STRATEGIES:
            rep = select_representative(cluster, rankings, strategy, (seed, index))
            for method, cons in consensus.items():
                for metric in METRICS:
                    cons_avg, rep_avg = evaluate_representative(
                        cluster, rankings, cons, rep, metric, params
                    )
                    rows.append(
                        (
                            cluster.id,
                            method,
                            strategy,
                            metric,
                            rep.client,
                            rep.fallback,
                            cons_avg,
                            rep_avg,
                            " ".join(map(str, cons.order)),
                        )
                    )
            diff = latency_difference(
                [r.client for r in members], meas.data, "representative-top1", rep.client
            )
            lat_rows += [(cluster.id, strategy, c, v) for c, v in zip(diff.clients, diff.values)]
    if skipped:
        print(f"{skipped} cluster(s) without clients skipped", file=sys.stderr)
    out.report(
        "consensus.csv",
        (
            "cluster_id",
            "method",
            "strategy",
            "metric",
            "representative",
            "fallback",
            "consensus_avg",
            "representative_avg",
            "order",
        ),
        rows,
    )
    out.report("latency_diff.csv", ("cluster_id", "strategy", "client", "diff_ms"), lat_rows)
    if lat_rows:
        med = float(np.median([r[3] for r in lat_rows]))
        print(f"median representative latency difference {med:.3f} ms", file=sys.stderr)


def cmd_consensus(settings: Settings, out: Outputs) -> None:
    routing = load_routing(settings.require("paths"))
    meas = load_measurements(settings.require("measurements"), routing)
    part = load_assignments(settings.require("assignments"), routing)
    _consensus(settings, meas, part, out)


def _sweep(settings, routing, out: Outputs) -> None:
    seed = _seed(settings)
    runs = _positive(settings, "runs")
    t_prime = routing.encoder.t_prime_
    taus = settings.get("taus")
    if taus is None:
        taus = [t_prime * i / 10 for i in range(11)]
    try:
        rows = tau_sweep(routing.encoder.rsd_matrix(), taus, runs, seed)
    except ValueError as exc:
        raise Fatal(f"{exc} (t' = {t_prime} for this data)") from None
    out.report(
        "sweep.csv",
        ("tau", "mean_clusters", "ci_low", "ci_high", "runs"),
        [(r.tau, r.mean_clusters, r.ci_low, r.ci_high, r.runs) for r in rows],
    )


def cmd_sweep(settings: Settings, out: Outputs) -> None:
    routing = load_routing(settings.require("paths"))
    _sweep(settings, routing, out)


def _optimal(settings, rankings: list, out: Outputs) -> None:
    metric = _metric(settings)
    params = _params(settings)
    r_max = _positive(settings, "r_max")
    rows = []
    for r in range(1, r_max + 1):
        part = optimal_partition(rankings, r)
        means = partition_means(rankings, r, metric, params)
        rows.append((r, len(part), metric, float(np.mean(means)) if means else None, len(means)))
    out.report(
        "optimal.csv", ("r", "partitions", "metric", "mean_avg_distance", "multi_client_partitions"), rows
    )


def cmd_optimal(settings: Settings, out: Outputs) -> None:
    path = settings.require("measurements")
    parsed = _parse_file(parse_measurements, path, "measurement")
    if not parsed.value.clients:
        raise Fatal(f"{path}: no valid measurements")
    rankings = list(parsed.value.rankings().values())
    _optimal(settings, rankings, out)


def cmd_report(settings: Settings, out: Outputs) -> None:
    routing = load_routing(settings.require("paths"))
    meas = load_measurements(settings.require("measurements"), routing)
    geo = _geo(settings)
    part = _cluster(settings, routing, out)
    _evaluate(settings, routing, meas, part, geo, out)
    _consensus(settings, meas, part, out)
    _sweep(settings, routing, out)
    _optimal(settings, list(meas.rankings.values()), out)


COMMANDS = {
    "synth": cmd_synth,
    "cluster": cmd_cluster,
    "evaluate": cmd_evaluate,
    "consensus": cmd_consensus,
    "sweep": cmd_sweep,
    "optimal": cmd_optimal,
    "report": cmd_report,
}


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsclust",
        description="Cluster IP prefixes by routing state and evaluate the clusters "
        "against client server rankings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="random seed (default: 0)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("--paths", help="BGP path file")
    inputs.add_argument("--measurements", help="measurement CSV")
    inputs.add_argument("--geo", help="prefix,country CSV")
    inputs.add_argument("--assignments", help="cluster assignment CSV")
    inputs.add_argument("--tau", type=float, help="RSD threshold (default: 200)")
    inputs.add_argument("--k", type=int, help="ranking depth k (default: 20)")
    inputs.add_argument("--metric", choices=METRICS, help="ranking distance (default: ps)")
    inputs.add_argument("--runs", type=int, help="Pivot runs per threshold (default: 10)")
    inputs.add_argument("--buckets", type=int, help="rsim bucket width (default: 10)")
    inputs.add_argument("--sample", type=int, help="pairs sampled for in/out (default: 1000)")
    inputs.add_argument("--taus", type=_float_list, help="comma-separated thresholds for sweep")
    inputs.add_argument("--r-max", dest="r_max", type=int, help="largest r for optimal (default: 10)")

    sub = parser.add_subparsers(dest="command", required=True)
    synth = sub.add_parser("synth", parents=[common], help="write a synthetic scenario")
    synth.add_argument("--preset", choices=("noiseless", "noisy"))
    synth.add_argument("--groups", type=int)
    synth.add_argument("--prefixes-per-group", dest="prefixes_per_group", type=int)
    synth.add_argument("--clients-per-prefix", dest="clients_per_prefix", type=int)
    synth.add_argument("--t-prime", dest="t_prime", type=int)
    synth.add_argument("--route-noise", dest="route_noise", type=float)
    synth.add_argument("--latency-jitter", dest="latency_jitter", type=float)
    synth.add_argument("--regions", type=int)
    synth.add_argument("--known-min", dest="known_min", type=int)
    synth.add_argument("--known-max", dest="known_max", type=int)
    synth.add_argument("--hubs", type=int)
    synth.add_argument("--template-drift", dest="template_drift", type=float)
    synth.add_argument("--route-latency", dest="route_latency", type=float)

    helps = {
        "cluster": "Pivot clustering over RSD",
        "evaluate": "cluster quality reports",
        "consensus": "consensus rankings and representatives",
        "sweep": "cluster count versus tau",
        "optimal": "r-optimal partition counts",
        "report": "cluster, evaluate, consensus, sweep and optimal in one run",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common, inputs], help=text)
    return parser


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        settings = Settings(args, environ)
        out = Outputs(settings.get("out"))
        COMMANDS[args.command](settings, out)
        out.write()
    except Fatal as exc:
        print(f"rsclust: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
