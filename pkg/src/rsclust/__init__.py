"""Routing-aware clustering of IP prefixes for CDN server ranking.

Prefixes are grouped by the similarity of the interdomain next hops that ASes
use to reach them (routing state distance), and clusters are judged by how
similarly their clients rank the CDN's server regions.
"""

from .clustering import (
    Cluster,
    Partitioning,
    PivotClustering,
    optimal_partition,
    partition_by_as,
    partition_by_country,
    partition_by_prefix,
    pivot_cluster,
    tau_sweep,
)
from .consensus import (
    ConsensusRanking,
    RankAggregator,
    borda_consensus,
    evaluate_representative,
    plurality_consensus,
    select_representative,
)
from .io import MeasurementSet, parse_bgp_paths, parse_measurements
from .rankings import (
    DistanceParams,
    PartialRanking,
    g_dist,
    ps_dist,
    ranking_from_latencies,
    spearman_footrule,
)
from .routing import (
    Prefix,
    RouteState,
    RoutingStateEncoder,
    RsdMatrix,
    SubAsId,
    extract_nexthops,
    rsd_matrix,
    rsd_normalized,
    rsim,
    split_sub_ases,
)
from .synthetic import SyntheticScenario, generate_synthetic, noiseless_scenario, noisy_scenario
from .trie import PrefixTable

__version__ = "0.1.0"
