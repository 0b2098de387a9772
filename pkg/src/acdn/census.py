"""Active census pipeline: ranked URLs -> hostnames -> /32 addresses -> /24
groups -> ping campaign -> per-/24 anycast verdicts -> conservative filter ->
GeoJSON map.

Name resolution and probing are injected callables, so the pipeline itself is
deterministic and never touches the network.
"""

from __future__ import annotations

import csv
import io
import ipaddress
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Mapping, Sequence, TextIO
from urllib.parse import urlsplit

from .detect import (
    ANYCAST,
    UNICAST,
    AnycastInstance,
    CityDb,
    PingMeasurement,
    classify_batch,
    instance_to_dict,
    ip_sort_key,
)
from .flows import slash24
from .geodesy import FIBER_SPEED_KM_PER_MS, GeoPoint, LatencyDisk
from .sim import VantagePoint

EXCLUDED = "excluded (conservative)"
UNKNOWN = "unknown"
CONTINENTS = ("EU", "NA", "SA", "AS", "AF", "OC")
DEFAULT_REPRESENTATIVES = 4

Resolver = Callable[[str], Iterable[str]]
Prober = Callable[[VantagePoint, str], "float | None"]

_HOST_RE = re.compile(r"^(?=.{1,253}$)([a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?)(\.[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?)+$")


@lru_cache(maxsize=1)
def continent_table() -> dict[str, str]:
    text = resources.files("acdn.data").joinpath("continents.csv").read_text(encoding="utf-8")
    rows = csv.reader(io.StringIO(text))
    next(rows)
    return {country: cont for country, cont in rows}


def read_target_list(fh: Iterable[str]) -> list[tuple[int, str]]:
    """``rank,url`` lines; ranks must be unique positive integers."""
    out, seen = [], set()
    for no, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rank, _, url = line.partition(",")
        r = int(rank)
        if r <= 0 or r in seen:
            raise ValueError(f"line {no}: bad or duplicate rank {rank}")
        seen.add(r)
        out.append((r, url.strip()))
    return out


def read_vps(fh: Iterable[str]) -> list[VantagePoint]:
    out = []
    for line in fh:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vp, lat, lon = (p.strip() for p in line.split(","))
        out.append(VantagePoint(vp, GeoPoint(float(lat), float(lon))))
    return out


def write_vps(vps: Iterable[VantagePoint], fh: TextIO) -> None:
    for v in vps:
        fh.write(f"{v.vp_id},{v.location.lat!r},{v.location.lon!r}\n")


def _hostname(url: str) -> str | None:
    url = url.strip()
    if not url or any(ch.isspace() for ch in url):
        return None
    if "://" not in url:
        url = "http://" + url
    try:
        host = urlsplit(url).hostname
    except ValueError:
        return None
    if host is None:
        return None
    host = host.rstrip(".").lower()
    return host if _HOST_RE.match(host) else None


def extract_hostnames(targets: Iterable[tuple[int, str]]) -> tuple[list[tuple[int, str]], list[dict]]:
    """Hostnames with their best (smallest) rank, ordered by rank."""
    best: dict[str, int] = {}
    warnings = []
    for rank, url in targets:
        host = _hostname(url)
        if host is None:
            warnings.append({"stage": "extract", "rank": rank, "url": url, "reason": "malformed URL"})
            continue
        if host not in best or rank < best[host]:
            best[host] = rank
    return sorted(((r, h) for h, r in best.items())), warnings


def resolve_targets(
    hosts: Iterable[tuple[int, str] | str], resolver: Resolver
) -> tuple[list[str], dict[str, list[str]], list[dict]]:
    """Resolve hostnames; returns (unique /32s, /24 -> members, warnings)."""
    ips: set[str] = set()
    warnings = []
    for h in hosts:
        host = h[1] if isinstance(h, tuple) else h
        try:
            answers = [str(ipaddress.IPv4Address(a)) for a in resolver(host)]
        except Exception as exc:  # resolver is user-supplied
            warnings.append({"stage": "resolve", "host": host, "reason": f"resolver error: {exc}"})
            continue
        if not answers:
            warnings.append({"stage": "resolve", "host": host, "reason": "no addresses"})
        ips.update(answers)
    ordered = sorted(ips, key=ip_sort_key)
    groups: dict[str, list[str]] = {}
    for ip in ordered:
        groups.setdefault(slash24(ip), []).append(ip)
    return ordered, groups, warnings


def static_resolver(table: Mapping[str, Sequence[str]]) -> Resolver:
    return lambda host: table.get(host, ())


def read_hosts_file(fh: Iterable[str]) -> dict[str, list[str]]:
    """``hostname ip[,ip...]`` lines."""
    table: dict[str, list[str]] = {}
    for line in fh:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        host, _, addrs = line.partition(" ")
        table[host.lower()] = [a for a in addrs.strip().split(",") if a]
    return table


@dataclass
class SubnetVerdict:
    slash24: str
    verdict: str
    location_count: int
    continents: list[str]
    members: list[str]
    probed: list[str]
    anycast_members: list[str]
    instances: list[AnycastInstance] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "slash24": self.slash24,
            "verdict": self.verdict,
            "location_count": self.location_count,
            "continents": self.continents,
            "members": self.members,
            "probed": self.probed,
            "anycast_members": self.anycast_members,
            "instances": [instance_to_dict(i) for i in self.instances],
        }


@dataclass
class CensusReport:
    subnets: dict[str, SubnetVerdict]
    stats: dict[str, int]
    warnings: list[dict] = field(default_factory=list)

    def anycast_slash24s(self) -> list[str]:
        return [p for p, s in self.subnets.items() if s.verdict == ANYCAST]

    def to_dict(self) -> dict:
        return {"stats": self.stats, "subnets": [s.to_dict() for s in self.subnets.values()]}

    @classmethod
    def from_dict(cls, doc: dict) -> CensusReport:
        from .detect import City

        subnets = {}
        for s in doc["subnets"]:
            insts = []
            for i in s.get("instances", []):
                c = i.get("city")
                city = None if c is None else City(c["name"], c["country"], GeoPoint(c["lat"], c["lon"]), c["population"])
                insts.append(AnycastInstance(LatencyDisk(GeoPoint(*i["center"]), i["radius_km"]),
                                             i["witness_vp"], city, i["high_confidence"]))
            subnets[s["slash24"]] = SubnetVerdict(
                s["slash24"], s["verdict"], s["location_count"], list(s["continents"]), list(s["members"]),
                list(s.get("probed", [])), list(s.get("anycast_members", [])), insts)
        return cls(subnets, dict(doc.get("stats", {})))


def representatives(members: Sequence[str], k: int = DEFAULT_REPRESENTATIVES) -> list[str]:
    """Up to ``k`` members spread evenly over the sorted member list."""
    members = sorted(members, key=ip_sort_key)
    if len(members) <= k:
        return members
    return [members[i * len(members) // k] for i in range(k)]


def _continents(instances: Iterable[AnycastInstance]) -> list[str]:
    table = continent_table()
    found = {table.get(i.location.country) for i in instances if i.location is not None}
    return [c for c in CONTINENTS if c in found]


def run_census(
    groups: Mapping[str, Sequence[str]],
    prober: Prober,
    vps: Sequence[VantagePoint],
    cities: CityDb | None = None,
    *,
    representatives_per_subnet: int = DEFAULT_REPRESENTATIVES,
    max_in_flight: int = 8,
    speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS,
    jobs: int = 1,
    timestamp: float = 0.0,
) -> CensusReport:
    """Probe representatives of every /24 from every VP and aggregate verdicts.

    A /24 is anycast when any probed member is; its location count is the
    largest enumeration among members. Probes that time out (prober returns
    None or raises TimeoutError) are skipped.
    """
    warnings: list[dict] = []
    if len(vps) < 2:
        warnings.append({"stage": "census", "reason": f"{len(vps)} vantage point(s): anycast cannot be detected"})
    probed = {p: representatives(m, representatives_per_subnet) for p, m in groups.items()}
    targets = sorted({t for reps in probed.values() for t in reps}, key=ip_sort_key)

    def probe_target(target: str) -> tuple[list[PingMeasurement], int]:
        ms, missing = [], 0
        for vp in vps:
            try:
                rtt = prober(vp, target)
            except TimeoutError:
                rtt = None
            if rtt is None:
                missing += 1
                continue
            ms.append(PingMeasurement(vp.vp_id, vp.location, target, rtt, timestamp))
        return ms, missing

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        probed_out = list(pool.map(probe_target, targets))
    campaign = {}
    for target, (ms, missing) in zip(targets, probed_out):
        if missing:
            warnings.append({"stage": "probe", "target": target, "reason": f"{missing} probe(s) timed out"})
        campaign[target] = ms
    results, failures = classify_batch(campaign, cities, speed_km_per_ms, jobs=jobs)
    for f in failures:
        warnings.append({"stage": "classify", "target": f.target, "reason": f.error})
    by_target = {r.target: r for r in results}

    subnets = {}
    for prefix in sorted(groups, key=lambda p: ip_sort_key(p.split("/")[0])):
        rs = [by_target[t] for t in probed[prefix] if t in by_target]
        anycast = [r for r in rs if r.is_anycast]
        if anycast:
            best = max(anycast, key=lambda r: (r.num_locations, -ip_sort_key(r.target)[1]))
            verdict, count, insts = ANYCAST, best.num_locations, best.instances
        elif rs:
            verdict, count, insts = UNICAST, 1, []
        else:
            verdict, count, insts = UNKNOWN, 0, []
        subnets[prefix] = SubnetVerdict(
            prefix, verdict, count, _continents(insts), sorted(groups[prefix], key=ip_sort_key),
            probed[prefix], [r.target for r in anycast], list(insts))
    stats = {
        "subnets": len(subnets),
        "ip32": sum(len(m) for m in groups.values()),
        "probed_ip32": len(targets),
        "vantage_points": len(vps),
        "measurements": sum(len(ms) for ms in campaign.values()),
        "anycast_ip32": sum(len(s.anycast_members) for s in subnets.values()),
        "anycast_subnets": sum(s.verdict == ANYCAST for s in subnets.values()),
    }
    return CensusReport(subnets, stats, warnings)


def filter_conservative(report: CensusReport, min_locations: int = 3) -> CensusReport:
    """Demote anycast /24s seen in fewer than ``min_locations`` places."""
    if min_locations < 2:
        raise ValueError("min_locations must be >= 2")
    subnets = {
        p: replace(s, verdict=EXCLUDED) if s.verdict == ANYCAST and s.location_count < min_locations else s
        for p, s in report.subnets.items()
    }
    stats = dict(report.stats)
    stats["anycast_subnets"] = sum(s.verdict == ANYCAST for s in subnets.values())
    stats["excluded_subnets"] = sum(s.verdict == EXCLUDED for s in subnets.values())
    return CensusReport(subnets, stats, list(report.warnings))


def export_geojson(report: CensusReport, owners: Mapping[str, str] | None = None) -> dict:
    """One point feature per located instance of every anycast /24."""
    owners = owners or {}
    features, omitted = [], 0
    for prefix, s in report.subnets.items():
        if s.verdict != ANYCAST:
            continue
        for inst in s.instances:
            if inst.location is None:
                omitted += 1
                continue
            loc = inst.location
            features.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [loc.location.lon, loc.location.lat]},
                "properties": {
                    "slash24": prefix,
                    "owner": owners.get(prefix),
                    "city": loc.name,
                    "country": loc.country,
                    "confidence": "high" if inst.high_confidence else "low",
                    "radius_km": inst.disk.radius_km,
                    "witness_vp": inst.witness_vp,
                },
            })
    return {
        "type": "FeatureCollection",
        "properties": {"features": len(features), "unlocated_instances": omitted},
        "features": features,
    }
