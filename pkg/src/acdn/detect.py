"""Anycast detection, replica enumeration and geolocation from ping campaigns.

Each ping from a geolocated vantage point (VP) bounds the target to a latency
disk around that VP. Two disjoint disks cannot contain the same server, so the
target address must be served from at least two places. A maximal set of
pairwise-disjoint disks, picked greedily from the smallest radius up, gives a
lower bound on the number of replica sites, and each selected disk is
geolocated to the most populous known city it contains.
"""

from __future__ import annotations

import csv
import ipaddress
import io
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np

from .geodesy import (
    FIBER_SPEED_KM_PER_MS,
    GeoPoint,
    LatencyDisk,
    haversine_matrix_km,
    rtt_to_radius_km,
)

log = logging.getLogger(__name__)

UNICAST = "unicast"
ANYCAST = "anycast"

HIGH_CONFIDENCE_RADIUS_KM = 300.0
# Two disks are disjoint only if their gap exceeds this many km; absorbs
# floating-point error when a site sits exactly on the VP-VP geodesic.
DISJOINT_SLACK_KM = 1e-6


def canonical_ip(addr: str) -> str:
    return str(ipaddress.IPv4Address(addr.strip()))


@dataclass(frozen=True, slots=True)
class PingMeasurement:
    vp_id: str
    vp_location: GeoPoint
    target: str
    rtt_ms: float
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", canonical_ip(self.target))
        rtt = float(self.rtt_ms)
        if not rtt >= 0.0:
            raise ValueError(f"RTT must be nonnegative, got {self.rtt_ms}")
        object.__setattr__(self, "rtt_ms", rtt)


@dataclass(frozen=True, slots=True)
class City:
    name: str
    country: str
    location: GeoPoint
    population: int


class CityDb:
    """Geolocation candidates, kept sorted by population (largest first)."""

    def __init__(self, entries: Iterable[City]):
        entries = sorted(entries, key=lambda c: (-c.population, c.name, c.country))
        seen = set()
        for c in entries:
            if c.population < 0:
                raise ValueError(f"negative population for {c.name}")
            key = (c.name, c.country)
            if key in seen:
                raise ValueError(f"duplicate city {c.name!r} in {c.country!r}")
            seen.add(key)
        self.entries: list[City] = entries
        self._lat = np.array([c.location.lat for c in entries], dtype=float)
        self._lon = np.array([c.location.lon for c in entries], dtype=float)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[City]:
        return iter(self.entries)

    def head(self, n: int) -> CityDb:
        """The ``n`` most populous cities."""
        return CityDb(self.entries[:n])

    def largest_in_disk(self, disk: LatencyDisk) -> City | None:
        if not self.entries:
            return None
        d = haversine_matrix_km([disk.center.lat], [disk.center.lon], self._lat, self._lon)[0]
        inside = np.flatnonzero(d <= disk.radius_km)
        if inside.size == 0:
            return None
        return self.entries[inside[0]]


def load_cities(source: str | TextIO) -> CityDb:
    """Read a ``name,country,lat,lon,population`` file (header optional)."""
    fh = open(source, newline="", encoding="utf-8") if isinstance(source, str) else source
    try:
        entries = []
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "name":
                continue
            name, country, lat, lon, pop = row
            entries.append(City(name, country, GeoPoint(float(lat), float(lon)), int(pop)))
    finally:
        if isinstance(source, str):
            fh.close()
    return CityDb(entries)


def default_cities(n: int | None = None) -> CityDb:
    """Bundled world cities (GeoNames, population > 15k), most populous first."""
    text = resources.files("acdn.data").joinpath("world_cities.csv").read_text(encoding="utf-8")
    db = load_cities(io.StringIO(text))
    return db.head(n) if n is not None else db


@dataclass(frozen=True, slots=True)
class AnycastInstance:
    disk: LatencyDisk
    witness_vp: str
    location: City | None = None
    high_confidence: bool = False

    @property
    def located(self) -> bool:
        return self.location is not None


@dataclass(frozen=True)
class DetectionResult:
    target: str
    verdict: str
    witness_pair: tuple[str, str] | None = None
    instances: list[AnycastInstance] = field(default_factory=list)
    num_locations: int = 1

    def __post_init__(self) -> None:
        anycast = self.verdict == ANYCAST
        if anycast != (self.witness_pair is not None) or anycast != (self.num_locations >= 2):
            raise AssertionError(f"inconsistent detection result for {self.target}")

    @property
    def is_anycast(self) -> bool:
        return self.verdict == ANYCAST

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "verdict": self.verdict,
            "witness_pair": list(self.witness_pair) if self.witness_pair else None,
            "num_locations": self.num_locations,
            "instances": [instance_to_dict(i) for i in self.instances],
        }


@dataclass(frozen=True, slots=True)
class BatchFailure:
    target: str
    error: str

    def to_dict(self) -> dict:
        return {"target": self.target, "error": self.error}


def instance_to_dict(inst: AnycastInstance) -> dict:
    loc = inst.location
    return {
        "witness_vp": inst.witness_vp,
        "center": [inst.disk.center.lat, inst.disk.center.lon],
        "radius_km": inst.disk.radius_km,
        "high_confidence": inst.high_confidence,
        "city": None if loc is None else {
            "name": loc.name,
            "country": loc.country,
            "lat": loc.location.lat,
            "lon": loc.location.lon,
            "population": loc.population,
        },
    }


class _Campaign:
    """Vectorized view of the measurements toward one target."""

    def __init__(self, ms: Sequence[PingMeasurement], speed_km_per_ms: float):
        if not ms:
            raise ValueError("no measurements")
        targets = {m.target for m in ms}
        if len(targets) != 1:
            raise ValueError(f"measurements mix targets: {sorted(targets)}")
        self.target = next(iter(targets))
        ms = sorted(ms, key=lambda m: m.vp_id)
        for a, b in zip(ms, ms[1:]):
            if a.vp_id == b.vp_id:
                raise ValueError(f"duplicate measurement from {a.vp_id} to {self.target}")
        self.ms = ms
        self.disks = [LatencyDisk(m.vp_location, rtt_to_radius_km(m.rtt_ms, speed_km_per_ms)) for m in ms]
        self.radius = np.array([d.radius_km for d in self.disks])
        lat = np.array([m.vp_location.lat for m in ms])
        lon = np.array([m.vp_location.lon for m in ms])
        dist = haversine_matrix_km(lat, lon, lat, lon)
        self.disjoint = dist > self.radius[:, None] + self.radius[None, :] + DISJOINT_SLACK_KM

    def witness(self) -> tuple[int, int] | None:
        i, j = np.nonzero(np.triu(self.disjoint, k=1))
        if i.size == 0:
            return None
        # smallest combined radius, then vp_id order (rows are vp_id-sorted)
        best = np.lexsort((j, i, self.radius[i] + self.radius[j]))[0]
        return int(i[best]), int(j[best])

    def greedy(self, seed: Sequence[int] = ()) -> list[int]:
        order = np.lexsort((np.arange(len(self.ms)), self.radius))
        chosen = list(seed)
        for k in order:
            if k in chosen or self.disks[k].covers_sphere:
                continue
            if all(self.disjoint[k, c] for c in chosen):
                chosen.append(int(k))
        return chosen

    def instance(self, k: int) -> AnycastInstance:
        disk = self.disks[k]
        return AnycastInstance(disk, self.ms[k].vp_id, high_confidence=disk.radius_km <= HIGH_CONFIDENCE_RADIUS_KM)


def detect_anycast(
    ms: Sequence[PingMeasurement], speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS
) -> DetectionResult:
    """Speed-of-light test only; ``instances`` is left empty.

    A positive verdict reports ``num_locations=2``, the count the witness pair
    alone proves.
    """
    camp = _Campaign(ms, speed_km_per_ms)
    w = camp.witness()
    if w is None:
        return DetectionResult(camp.target, UNICAST, num_locations=1)
    pair = (camp.ms[w[0]].vp_id, camp.ms[w[1]].vp_id)
    return DetectionResult(camp.target, ANYCAST, pair, num_locations=2)


def enumerate_instances(
    ms: Sequence[PingMeasurement], speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS
) -> list[AnycastInstance]:
    """Greedy maximal set of pairwise-disjoint latency disks, smallest first."""
    camp = _Campaign(ms, speed_km_per_ms)
    return [camp.instance(k) for k in camp.greedy()]


def geolocate_instance(inst: AnycastInstance, cities: CityDb) -> AnycastInstance:
    return replace(
        inst,
        location=cities.largest_in_disk(inst.disk),
        high_confidence=inst.disk.radius_km <= HIGH_CONFIDENCE_RADIUS_KM,
    )


def classify_target(
    ms: Sequence[PingMeasurement],
    cities: CityDb | None = None,
    speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS,
) -> DetectionResult:
    """Detect, enumerate and (if ``cities`` is given) geolocate one target."""
    camp = _Campaign(ms, speed_km_per_ms)
    w = camp.witness()
    chosen = camp.greedy()
    if w is not None and len(chosen) < 2:
        # the smallest disk can overlap both witnesses; restart from them
        chosen = camp.greedy(seed=w)
    instances = [camp.instance(k) for k in chosen]
    if cities is not None:
        instances = [geolocate_instance(i, cities) for i in instances]
    if w is None:
        return DetectionResult(camp.target, UNICAST, None, instances, min(len(instances), 1))
    pair = (camp.ms[w[0]].vp_id, camp.ms[w[1]].vp_id)
    return DetectionResult(camp.target, ANYCAST, pair, instances, len(instances))


def group_by_target(ms: Iterable[PingMeasurement]) -> dict[str, list[PingMeasurement]]:
    groups: dict[str, list[PingMeasurement]] = defaultdict(list)
    for m in ms:
        groups[m.target].append(m)
    return dict(groups)


def ip_sort_key(target: str):
    try:
        return (0, int(ipaddress.IPv4Address(target)), "")
    except ValueError:
        return (1, 0, str(target))


def _classify_chunk(args):
    chunk, cities, speed = args
    out = []
    for target, ms in chunk:
        try:
            out.append(classify_target(ms, cities, speed))
        except (ValueError, TypeError) as exc:
            out.append(BatchFailure(target, str(exc)))
    return out


def classify_batch(
    campaign: Mapping[str, Sequence[PingMeasurement]] | Iterable[PingMeasurement],
    cities: CityDb | None = None,
    speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS,
    jobs: int = 1,
) -> tuple[list[DetectionResult], list[BatchFailure]]:
    """Classify every target of a campaign, ordered by target address.

    A target whose measurements are unusable becomes a :class:`BatchFailure`
    instead of aborting the batch.
    """
    if not isinstance(campaign, Mapping):
        campaign = group_by_target(campaign)
    items = sorted(campaign.items(), key=lambda kv: ip_sort_key(kv[0]))
    if jobs > 1 and len(items) > 1:
        size = -(-len(items) // jobs)
        chunks = [(items[i:i + size], cities, speed_km_per_ms) for i in range(0, len(items), size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_classify_chunk, chunks))
        records = [r for part in parts for r in part]
    else:
        records = _classify_chunk((items, cities, speed_km_per_ms))
    results = [r for r in records if isinstance(r, DetectionResult)]
    failures = [r for r in records if isinstance(r, BatchFailure)]
    for f in failures:
        log.warning("target %s failed: %s", f.target, f.error)
    return results, failures


# -- measurement text format: vp_id,vp_lat,vp_lon,target_ip,rtt_ms,ts


def format_measurement(m: PingMeasurement) -> str:
    return f"{m.vp_id},{m.vp_location.lat!r},{m.vp_location.lon!r},{m.target},{m.rtt_ms!r},{m.timestamp!r}"


def write_measurements(ms: Iterable[PingMeasurement], fh: TextIO) -> None:
    for m in ms:
        fh.write(format_measurement(m) + "\n")


def read_measurements(lines: Iterable[str], errors: list | None = None) -> Iterator[PingMeasurement]:
    """Parse measurement lines; bad lines go to ``errors`` as ``(line_no, reason)``."""
    for no, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) != 6:
                raise ValueError(f"expected 6 fields, got {len(parts)}")
            vp, lat, lon, target, rtt, ts = parts
            yield PingMeasurement(vp, GeoPoint(float(lat), float(lon)), target, float(rtt), float(ts))
        except ValueError as exc:
            if errors is None:
                raise ValueError(f"line {no}: {exc}") from exc
            errors.append((no, str(exc)))
