"""Plain-text file formats.

========================  ==================================================
BGP paths                 ``observer_as|A.B.C.D/len|as1 as2 ... asN``
Measurements              CSV ``client,region,latency_ms``
Geo                       CSV ``prefix,country``
Cluster assignments       CSV ``prefix,cluster_id,is_pivot``
Reports                   CSV with a fixed header per report, floats printed
                          with 6 significant digits, ``NA`` for missing
========================  ==================================================

Parsers never stop at a bad line. Each bad line becomes a :class:`LineError`
and the remaining lines are still parsed.
"""

from __future__ import annotations

import csv
import io
import ipaddress
import math
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Generic, Iterable, Iterator, Mapping, Sequence, TypeVar, Union

from .clustering import Cluster, Partitioning
from .rankings import PartialRanking, ranking_from_latencies
from .routing import PathRecord, Prefix, collapse_prepending

__all__ = [
    "LineError",
    "Parsed",
    "MeasurementSet",
    "parse_bgp_paths",
    "serialize_bgp_paths",
    "parse_measurements",
    "serialize_measurements",
    "parse_geo",
    "serialize_geo",
    "parse_assignments",
    "serialize_assignments",
    "read_report",
    "write_report",
    "format_value",
]

Source = Union[str, os.PathLike, IO[str]]
T = TypeVar("T")

_MAX_ASN = 2**32 - 1
_COUNTRY = re.compile(r"^[A-Z]{2}$")


@dataclass(frozen=True)
class LineError:
    line: int
    message: str
    text: str = ""

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class Parsed(Generic[T]):
    value: T
    errors: list[LineError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _read_text(source: Source) -> str:
    if hasattr(source, "read"):
        return source.read()
    with open(source, encoding="utf-8", newline="") as fh:
        return fh.read()


def _write_text(target: Source | None, text: str) -> str:
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _parse_asn(token: str) -> int:
    value = int(token)
    if not 0 <= value <= _MAX_ASN or not token.strip().isdigit():
        raise ValueError(token)
    return value


# -- BGP paths ---------------------------------------------------------------


def parse_bgp_paths(source: Source) -> Parsed[list[PathRecord]]:
    """Parse ``observer|prefix|path`` lines; ``#`` comments and blanks are skipped.

    The prefix of each record carries the last AS on its path as origin.
    """
    records: list[PathRecord] = []
    errors: list[LineError] = []
    for lineno, raw in enumerate(_read_text(source).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 3:
            errors.append(LineError(lineno, "expected 3 '|'-separated fields", raw))
            continue
        obs_text, prefix_text, path_text = (p.strip() for p in parts)
        try:
            observer = _parse_asn(obs_text)
        except ValueError:
            errors.append(LineError(lineno, "invalid observer AS", raw))
            continue
        try:
            network = ipaddress.IPv4Network(prefix_text, strict=True)
            if network.prefixlen == 0 or "/" not in prefix_text:
                raise ValueError(prefix_text)
        except ValueError:
            errors.append(LineError(lineno, "invalid prefix", raw))
            continue
        tokens = path_text.split()
        if not tokens:
            errors.append(LineError(lineno, "empty AS path", raw))
            continue
        try:
            path = tuple(_parse_asn(t) for t in tokens)
        except ValueError:
            errors.append(LineError(lineno, "invalid AS path", raw))
            continue
        origin = collapse_prepending(path)[-1]
        records.append(PathRecord(observer, path, Prefix(network, origin)))
    return Parsed(records, errors)


def serialize_bgp_paths(records: Iterable[PathRecord], target: Source | None = None) -> str:
    lines = [
        f"{obs}|{prefix}|{' '.join(str(a) for a in path)}\n" for obs, path, prefix in records
    ]
    return _write_text(target, "".join(lines))


# -- measurements ------------------------------------------------------------


class MeasurementSet:
    """Latencies per (client, region); repeated probes keep the minimum."""

    def __init__(self, rows: Iterable[tuple[str, int, float]] = ()):
        self._data: dict[str, dict[int, float]] = defaultdict(dict)
        for client, region, latency in rows:
            self.add(client, region, latency)

    def add(self, client: str, region: int, latency: float) -> None:
        latency = float(latency)
        if math.isnan(latency) or math.isinf(latency) or latency < 0:
            raise ValueError(f"invalid latency {latency!r}")
        region = int(region)
        if region < 0:
            raise ValueError(f"invalid region {region!r}")
        current = self._data[client].get(region)
        if current is None or latency < current:
            self._data[client][region] = latency

    def __len__(self) -> int:
        return sum(len(v) for v in self._data.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return {c: v for c, v in self._data.items() if v} == {
            c: v for c, v in other._data.items() if v
        }

    def __repr__(self) -> str:
        return f"MeasurementSet({len(self.clients)} clients, {len(self)} values)"

    @property
    def clients(self) -> list[str]:
        return sorted(c for c, v in self._data.items() if v)

    @property
    def n_regions(self) -> int:
        """One more than the largest region id seen (0 when empty)."""
        return max((max(v) + 1 for v in self._data.values() if v), default=0)

    def latencies(self, client: str) -> dict[int, float]:
        return dict(self._data.get(client, {}))

    def latency(self, client: str, region: int) -> float | None:
        return self._data.get(client, {}).get(region)

    def top1(self, client: str) -> int | None:
        lat = self._data.get(client)
        if not lat:
            return None
        return min(lat, key=lambda r: (lat[r], r))

    def rows(self) -> Iterator[tuple[str, int, float]]:
        for client in self.clients:
            for region in sorted(self._data[client]):
                yield client, region, self._data[client][region]

    def rankings(self, m: int | None = None) -> dict[str, PartialRanking]:
        m = self.n_regions if m is None else m
        return {
            c: ranking_from_latencies(self._data[c], m, client=c) for c in self.clients
        }


MEASUREMENT_HEADER = ("client", "region", "latency_ms")


def parse_measurements(source: Source) -> Parsed[MeasurementSet]:
    result = MeasurementSet()
    errors: list[LineError] = []
    reader = csv.reader(io.StringIO(_read_text(source)))
    header = next(reader, None)
    if header is None:
        return Parsed(result, errors)
    if tuple(h.strip() for h in header) != MEASUREMENT_HEADER:
        errors.append(LineError(1, f"expected header {','.join(MEASUREMENT_HEADER)}"))
        return Parsed(result, errors)
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            errors.append(LineError(lineno, "expected 3 columns", ",".join(row)))
            continue
        client, region_text, latency_text = (c.strip() for c in row)
        if not client:
            errors.append(LineError(lineno, "empty client", ",".join(row)))
            continue
        try:
            region = int(region_text)
            if region < 0:
                raise ValueError
        except ValueError:
            errors.append(LineError(lineno, "invalid region", ",".join(row)))
            continue
        try:
            result.add(client, region, float(latency_text))
        except ValueError:
            errors.append(LineError(lineno, "invalid latency", ",".join(row)))
    return Parsed(result, errors)


def serialize_measurements(ms: MeasurementSet, target: Source | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MEASUREMENT_HEADER)
    for client, region, latency in ms.rows():
        writer.writerow((client, region, repr(latency)))
    return _write_text(target, buf.getvalue())


# -- geo -----------------------------------------------------------------


def parse_geo(source: Source) -> Parsed[dict[Prefix, str]]:
    geo: dict[Prefix, str] = {}
    errors: list[LineError] = []
    reader = csv.reader(io.StringIO(_read_text(source)))
    header = next(reader, None)
    if header is not None and tuple(h.strip() for h in header) != ("prefix", "country"):
        errors.append(LineError(1, "expected header prefix,country"))
        return Parsed(geo, errors)
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            errors.append(LineError(lineno, "expected 2 columns", ",".join(row)))
            continue
        try:
            prefix = Prefix.parse(row[0])
        except ValueError:
            errors.append(LineError(lineno, "invalid prefix", ",".join(row)))
            continue
        country = row[1].strip().upper()
        if not _COUNTRY.match(country):
            errors.append(LineError(lineno, "invalid country code", ",".join(row)))
            continue
        geo[prefix] = country
    return Parsed(geo, errors)


def serialize_geo(geo: Mapping[Prefix, str], target: Source | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("prefix", "country"))
    for prefix in sorted(geo):
        writer.writerow((str(prefix), geo[prefix]))
    return _write_text(target, buf.getvalue())


# -- cluster assignments -----------------------------------------------------

ASSIGNMENT_HEADER = ("prefix", "cluster_id", "is_pivot")


def _cluster_key(cid):
    return (0, cid, "") if isinstance(cid, int) else (1, 0, str(cid))


def parse_assignments(source: Source, method: str = "pivot-rsd") -> Parsed[Partitioning]:
    members: dict = defaultdict(list)
    pivots: dict = {}
    errors: list[LineError] = []
    seen: set[Prefix] = set()
    reader = csv.reader(io.StringIO(_read_text(source)))
    header = next(reader, None)
    if header is not None and tuple(h.strip() for h in header) != ASSIGNMENT_HEADER:
        errors.append(LineError(1, f"expected header {','.join(ASSIGNMENT_HEADER)}"))
        return Parsed(Partitioning([], method), errors)
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            errors.append(LineError(lineno, "expected 3 columns", ",".join(row)))
            continue
        try:
            prefix = Prefix.parse(row[0])
        except ValueError:
            errors.append(LineError(lineno, "invalid prefix", ",".join(row)))
            continue
        if prefix in seen:
            errors.append(LineError(lineno, "prefix assigned twice", ",".join(row)))
            continue
        cid_text = row[1].strip()
        if not cid_text:
            errors.append(LineError(lineno, "empty cluster id", ",".join(row)))
            continue
        cid = int(cid_text) if re.fullmatch(r"-?\d+", cid_text) else cid_text
        flag = row[2].strip()
        if flag not in ("0", "1"):
            errors.append(LineError(lineno, "is_pivot must be 0 or 1", ",".join(row)))
            continue
        if flag == "1":
            if cid in pivots:
                errors.append(LineError(lineno, "second pivot for cluster", ",".join(row)))
                continue
            pivots[cid] = prefix
        seen.add(prefix)
        members[cid].append(prefix)
    clusters = [
        Cluster(cid, members[cid], pivots.get(cid)) for cid in sorted(members, key=_cluster_key)
    ]
    return Parsed(Partitioning(clusters, method), errors)


def serialize_assignments(part: Partitioning, target: Source | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ASSIGNMENT_HEADER)
    for cluster in sorted(part.clusters, key=lambda c: _cluster_key(c.id)):
        for prefix in sorted(cluster.members):
            writer.writerow((str(prefix), cluster.id, int(prefix == cluster.pivot)))
    return _write_text(target, buf.getvalue())


# -- reports -------------------------------------------------------------------


def format_value(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _convert(text: str):
    if text == "NA":
        return None
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def write_report(
    header: Sequence[str], rows: Iterable[Sequence], target: Source | None = None
) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        writer.writerow([format_value(v) for v in row])
    return _write_text(target, buf.getvalue())


def read_report(source: Source) -> tuple[list[str], list[list]]:
    """Read a report written by :func:`write_report`.

    Integers and floats are converted back, ``NA`` becomes ``None``.
    """
    reader = csv.reader(io.StringIO(_read_text(source)))
    header = next(reader, [])
    return header, [[_convert(c) for c in row] for row in reader if row]
