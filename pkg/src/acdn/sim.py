"""Synthetic ground truth: anycast deployments probed from vantage points, and
month-long flow logs with scheduled routing changes.

Every generator is a pure function of its inputs and seed.
"""

from __future__ import annotations

import hashlib
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .detect import CityDb, PingMeasurement
from .flows import DnsObservation, FlowTable, L7_LABELS, int_to_ip, slash24_key
from .geodesy import (
    FIBER_SPEED_KM_PER_MS,
    GeoPoint,
    haversine_km,
    haversine_matrix_km,
    radius_to_rtt_ms,
)

TTL_INITIALS = (32, 64, 128, 255)
SEPTEMBER_2014 = 1_409_529_600  # 2014-09-01T00:00:00Z

WORLD = (-90.0, 90.0, -180.0, 180.0)
EUROPE = (36.0, 70.0, -10.0, 40.0)

_STD_NORMAL = statistics.NormalDist()


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class VantagePoint:
    vp_id: str
    location: GeoPoint


@dataclass(frozen=True)
class SyntheticDeployment:
    target: str
    sites: tuple[GeoPoint, ...]
    ttl_initial: tuple[int, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.sites:
            raise ValueError("deployment needs at least one site")
        if len(self.ttl_initial) != len(self.sites):
            raise ValueError("one initial TTL per site")
        if any(t not in TTL_INITIALS for t in self.ttl_initial):
            raise ValueError(f"initial TTL must be one of {TTL_INITIALS}")
        for i, a in enumerate(self.sites):
            for b in self.sites[i + 1:]:
                if haversine_km(a, b) <= 0.0:
                    raise ValueError("co-located sites")

    @property
    def is_anycast(self) -> bool:
        return len(self.sites) > 1

    def to_dict(self) -> dict:
        return {"target": self.target, "seed": self.seed,
                "sites": [[s.lat, s.lon] for s in self.sites], "ttl_initial": list(self.ttl_initial)}


@dataclass(frozen=True)
class RttModel:
    """RTT = light-in-fiber floor x ``inflation`` + half-normal noise of scale ``jitter_ms``."""

    inflation: float = 1.5
    jitter_ms: float = 0.0
    seed: int = 0
    speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS

    def __post_init__(self) -> None:
        if self.inflation < 1.0:
            raise ValueError("inflation must be >= 1 (never faster than light)")
        if self.jitter_ms < 0.0:
            raise ValueError("jitter must be nonnegative")


def _unit_hash(*parts) -> float:
    """Deterministic uniform in (0, 1) from arbitrary key parts."""
    h = hashlib.blake2b("|".join(map(str, parts)).encode(), digest_size=8).digest()
    return (int.from_bytes(h, "big") + 0.5) / 2.0**64


def _quantize_up(x: float, step: float = 1e-3) -> float:
    q = math.ceil(x / step) * step
    while q < x:
        q += step
    return q


def _rtt(distance_km: float, vp_id: str, target: str, model: RttModel) -> float:
    floor = radius_to_rtt_ms(distance_km, model.speed_km_per_ms)
    noise = 0.0
    if model.jitter_ms > 0.0:
        u = _unit_hash(model.seed, target, vp_id)
        noise = abs(_STD_NORMAL.inv_cdf(0.5 + u / 2.0)) * model.jitter_ms
    return _quantize_up(max(floor * model.inflation + noise, floor))


def _nearest_km(lat, lon, sites: Sequence[GeoPoint]) -> np.ndarray:
    d = haversine_matrix_km(lat, lon, [s.lat for s in sites], [s.lon for s in sites])
    return d.min(axis=1)


def nearest_site(p: GeoPoint, sites: Sequence[GeoPoint]) -> tuple[int, float]:
    d = haversine_matrix_km([p.lat], [p.lon], [s.lat for s in sites], [s.lon for s in sites])[0]
    k = int(np.argmin(d))
    return k, float(d[k])


def simulate_ping(vp: VantagePoint, deployment: SyntheticDeployment, model: RttModel,
                  timestamp: float = 0.0) -> PingMeasurement:
    """One ping answered by the site nearest to the VP (the BGP-proximity stand-in)."""
    _, d = nearest_site(vp.location, deployment.sites)
    return PingMeasurement(vp.vp_id, vp.location, deployment.target,
                           _rtt(d, vp.vp_id, deployment.target, model), timestamp)


def simulate_campaign(vps: Sequence[VantagePoint], deployments: Iterable[SyntheticDeployment],
                      model: RttModel, timestamp: float = 0.0) -> list[PingMeasurement]:
    """Every VP pings every deployment; equal to repeated :func:`simulate_ping`."""
    vlat = np.array([v.location.lat for v in vps])
    vlon = np.array([v.location.lon for v in vps])
    out = []
    for dep in deployments:
        for v, dist in zip(vps, _nearest_km(vlat, vlon, dep.sites).tolist()):
            out.append(PingMeasurement(v.vp_id, v.location, dep.target,
                                       _rtt(dist, v.vp_id, dep.target, model), timestamp))
    return out


def spread_vantage_points(n: int, prefix: str = "vp") -> list[VantagePoint]:
    """``n`` VPs evenly covering the globe (Fibonacci lattice)."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    vps = []
    width = len(str(n - 1))
    for i in range(n):
        z = 1.0 - (2.0 * i + 1.0) / n
        lat = math.degrees(math.asin(z))
        lon = math.degrees(golden * i) % 360.0
        vps.append(VantagePoint(f"{prefix}{i:0{width}d}", GeoPoint(lat, lon)))
    return vps


def _sample_point(rng: np.random.Generator, bounds) -> GeoPoint:
    lat0, lat1, lon0, lon1 = bounds
    # uniform on the sphere patch: uniform in sin(lat)
    z = rng.uniform(math.sin(math.radians(lat0)), math.sin(math.radians(lat1)))
    lat = math.degrees(math.asin(z))
    lon = rng.uniform(lon0, lon1)
    return GeoPoint(lat, lon)


def gen_deployment(n_sites: int, bounds=WORLD, seed: int = 0, *, target: str | None = None,
                   min_separation_km: float = 500.0, candidates: CityDb | None = None,
                   ttl_choices: Sequence[int] = (64, 128), max_tries: int = 20_000) -> SyntheticDeployment:
    """Sites sampled in ``bounds`` (lat_min, lat_max, lon_min, lon_max), pairwise
    farther apart than ``min_separation_km``.

    With ``candidates``, sites are drawn from those cities (inside bounds)
    instead of uniformly.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    rng = np.random.default_rng(seed)
    if target is None:
        target = int_to_ip(0x0A000000 | (seed & 0xFFFFFF))
    pool = None
    if candidates is not None:
        lat0, lat1, lon0, lon1 = bounds
        pool = [c.location for c in candidates
                if lat0 <= c.location.lat <= lat1 and lon0 <= c.location.lon <= lon1]
        if not pool:
            raise InfeasibleError("no candidate city inside bounds")
    sites: list[GeoPoint] = []
    tries = 0
    while len(sites) < n_sites:
        tries += 1
        if tries > max_tries:
            raise InfeasibleError(
                f"could not place {n_sites} sites {min_separation_km} km apart in {bounds} "
                f"({len(sites)} placed after {max_tries} tries)")
        p = pool[rng.integers(len(pool))] if pool is not None else _sample_point(rng, bounds)
        if all(haversine_km(p, s) >= min_separation_km and haversine_km(p, s) > 0.0 for s in sites):
            sites.append(p)
    ttls = tuple(int(t) for t in rng.choice(list(ttl_choices), size=n_sites))
    return SyntheticDeployment(target, tuple(sites), ttls, seed)


# -- passive side


@dataclass
class _Regime:
    rtt_ms: float
    ttl_initials: tuple[int, ...]
    ttl_weights: tuple[float, ...]
    hops: dict[int, int]
    think_ms: float

    def ttl_pattern(self) -> list[list[int]]:
        return sorted([t, self.hops[t]] for t in self.ttl_initials)

    def ttfb_level(self) -> float:
        return 2.0 * self.rtt_ms + self.think_ms


@dataclass
class FlowLog:
    flows: FlowTable
    dns: list[DnsObservation]
    truth: list[dict]
    anycast_slash24s: list[str] = field(default_factory=list)


DEFAULT_DIURNAL = (
    0.30, 0.20, 0.15, 0.12, 0.12, 0.15, 0.25, 0.40, 0.55, 0.62, 0.66, 0.70,
    0.74, 0.72, 0.70, 0.70, 0.74, 0.80, 0.88, 0.95, 1.00, 1.00, 0.85, 0.55,
)

_TLDS = ("com", "net", "it", "co.uk", "com", "org", "de", "fr")


def _client_ids(n: int, seed: int) -> list[str]:
    return [hashlib.blake2b(f"client|{seed}|{i}".encode(), digest_size=8).hexdigest() for i in range(n)]


def _regime(params: dict, base: _Regime | None = None) -> _Regime:
    if base is None:
        base = _Regime(20.0, (64,), (1.0,), {}, 20.0)
    initials = tuple(int(t) for t in params.get("ttl_initials", base.ttl_initials))
    if any(t not in TTL_INITIALS for t in initials):
        raise ValueError(f"initial TTL must be one of {TTL_INITIALS}")
    weights = params.get("ttl_weights")
    if weights is None:
        weights = base.ttl_weights if initials == base.ttl_initials else (1.0,) * len(initials)
    hops = dict(base.hops)
    raw_hops = params.get("hops", {})
    if isinstance(raw_hops, (int, float)):
        raw_hops = {t: raw_hops for t in initials}
    hops.update({int(k): int(v) for k, v in raw_hops.items()})
    for t in initials:
        hops.setdefault(t, 9)
    return _Regime(float(params.get("rtt_ms", base.rtt_ms)), initials, tuple(float(w) for w in weights),
                   hops, float(params.get("think_ms", base.think_ms)))


def _schedule(subnets: list[dict], events: list[dict], start: float):
    """Per subnet: sorted list of (t_from, regime); plus the truth event list."""
    by_subnet: dict[str, list[dict]] = {}
    known = {s["slash24"] for s in subnets}
    for ev in events:
        if ev["slash24"] not in known:
            raise ValueError(f"event on unknown subnet {ev['slash24']}")
        by_subnet.setdefault(ev["slash24"], []).append(ev)
    timelines, truth = {}, []
    for s in subnets:
        base = _regime(s)
        timeline = [(-math.inf, base)]
        evs = sorted(by_subnet.get(s["slash24"], []), key=lambda e: e["at_s"])
        for a, b in zip(evs, evs[1:]):
            if a.get("until_s") is None or a["until_s"] > b["at_s"]:
                raise ValueError(f"overlapping events on {s['slash24']} at {a['at_s']} and {b['at_s']}")
        for ev in evs:
            if ev.get("until_s") is not None and ev["until_s"] <= ev["at_s"]:
                raise ValueError("event ends before it starts")
            new = _regime(ev, base)
            timeline.append((start + ev["at_s"], new))
            truth += _transition_truth(s["slash24"], start + ev["at_s"], base, new)
            if ev.get("until_s") is not None:
                timeline.append((start + ev["until_s"], base))
                truth += _transition_truth(s["slash24"], start + ev["until_s"], new, base)
        timelines[s["slash24"]] = timeline
    truth.sort(key=lambda e: (e["ts"], e["slash24"], e["kind"]))
    return timelines, truth


def _transition_truth(prefix: str, ts: float, old: _Regime, new: _Regime) -> list[dict]:
    out = []
    if old.rtt_ms != new.rtt_ms:
        out.append({"slash24": prefix, "ts": ts, "kind": "rtt_shift", "before": old.rtt_ms, "after": new.rtt_ms})
    if old.ttfb_level() != new.ttfb_level():
        out.append({"slash24": prefix, "ts": ts, "kind": "ttfb_shift",
                    "before": old.ttfb_level(), "after": new.ttfb_level()})
    if old.ttl_pattern() != new.ttl_pattern():
        out.append({"slash24": prefix, "ts": ts, "kind": "ttl_pattern_change",
                    "before": old.ttl_pattern(), "after": new.ttl_pattern()})
    return out


def gen_flowlog(scenario: dict, seed: int) -> FlowLog:
    """Generate flows, the DNS observations that explain their FQDNs, and the
    list of scheduled routing changes.

    Scenario keys (all optional): ``start``, ``duration_s``, ``users``,
    ``flows`` (approximate web flow count), ``anycast_share``,
    ``unannotated_share``, ``other_subnets``, ``diurnal`` (24 weights),
    ``rtt_jitter_ms``, ``dns_ttl_s``, ``subnets`` (list of anycast subnet
    specs) and ``events`` (list of scheduled changes). See README for the
    field list of subnets and events.
    """
    rng = np.random.default_rng(seed)
    start = float(scenario.get("start", SEPTEMBER_2014))
    duration = float(scenario.get("duration_s", 30 * 86_400))
    n_users = int(scenario.get("users", 0))
    n_flows = int(scenario.get("flows", 0))
    subnets = [dict(s) for s in scenario.get("subnets", [])]
    timelines, truth = _schedule(subnets, scenario.get("events", []), start)
    anycast = [s["slash24"] for s in subnets]
    if n_users == 0 or n_flows == 0:
        return FlowLog(FlowTable.empty(), [], truth, anycast)

    diurnal = np.asarray(scenario.get("diurnal", DEFAULT_DIURNAL), dtype=float)
    n_hours = int(math.ceil(duration / 3600.0))
    hour_w = diurnal[(np.arange(n_hours) + int(start // 3600)) % 24]
    # flows grow faster than the active population at peak
    flows_per_hour = rng.multinomial(n_flows, hour_w**1.5 / np.sum(hour_w**1.5))
    active = np.maximum(1, np.round(n_users * 0.75 * hour_w)).astype(int)

    hour_idx = np.repeat(np.arange(n_hours), flows_per_hour)
    n = len(hour_idx)
    users = np.empty(n, dtype=np.int64)
    pos = 0
    for h in range(n_hours):
        k = flows_per_hour[h]
        if k:
            pool = rng.choice(n_users, size=min(active[h], n_users), replace=False)
            users[pos:pos + k] = pool[rng.integers(len(pool), size=k)]
        pos += k
    ts_start = start + hour_idx * 3600.0 + rng.uniform(0.0, 3600.0, size=n)
    ts_start = np.round(ts_start, 6)
    keep = ts_start < start + duration
    users, ts_start = users[keep], ts_start[keep]
    n = len(ts_start)

    # destination: anycast subnet index, or -1 for other web traffic
    share = float(scenario.get("anycast_share", 0.25)) if subnets else 0.0
    is_any = rng.random(n) < share
    weights = np.array([float(s.get("weight", 1.0)) for s in subnets]) if subnets else np.ones(1)
    dest = np.where(is_any, rng.choice(len(weights), size=n, p=weights / weights.sum()), -1)

    fqdn_names: list[str] = []
    fqdn_ips: list[np.ndarray] = []
    flow_fqdn = np.full(n, -1, dtype=np.int64)
    server_ip = np.zeros(n, dtype=np.int64)
    rtt_base = np.zeros(n)
    ttl_obs = np.zeros(n, dtype=np.int64)
    think = np.zeros(n)

    jitter = float(scenario.get("rtt_jitter_ms", 0.3))

    def _fill(mask, ips_of_fqdn, fq_weights, name_offset):
        idx = np.flatnonzero(mask)
        choice = rng.choice(len(fq_weights), size=len(idx), p=fq_weights)
        flow_fqdn[idx] = choice + name_offset
        for j in np.unique(choice):
            sel = idx[choice == j]
            ips = ips_of_fqdn[j]
            server_ip[sel] = ips[rng.integers(len(ips), size=len(sel))]

    for si, s in enumerate(subnets):
        base = slash24_key(s["slash24"]) << 8
        n_servers = int(s.get("servers", 8))
        hosts = np.sort(rng.choice(np.arange(1, 255), size=min(n_servers, 254), replace=False))
        servers = base + hosts
        sibling = s.get("sibling")
        sib_servers = None
        if sibling:
            sib_servers = (slash24_key(sibling) << 8) + np.sort(rng.choice(np.arange(1, 255), size=8, replace=False))
        n_services = int(s.get("services", 10))
        n_fq = max(int(s.get("fqdns", 3 * n_services)), 1)
        lb = int(s.get("ips_per_fqdn", 1))
        offset = len(fqdn_names)
        tag = s.get("name", f"n{si}")
        for j in range(n_fq):
            svc = j % n_services
            tld = _TLDS[(svc + j // n_services) % len(_TLDS)]
            fqdn_names.append(f"h{j}.{tag}svc{svc}.{tld}")
            k = 1 if lb <= 1 else int(rng.integers(1, lb + 1))
            ips = rng.choice(servers, size=min(k, len(servers)), replace=False)
            if sib_servers is not None and lb > 1:
                ips = np.concatenate([ips, rng.choice(sib_servers, size=int(rng.integers(0, 8)), replace=False)])
            fqdn_ips.append(np.sort(ips))
        zipf = 1.0 / np.arange(1, n_fq + 1)
        _fill(dest == si, fqdn_ips[offset:], zipf / zipf.sum(), offset)

        mask = np.flatnonzero(dest == si)
        for t_from, reg in timelines[s["slash24"]]:
            sel = mask[ts_start[mask] >= t_from]
            rtt_base[sel] = reg.rtt_ms
            think[sel] = reg.think_ms
            w = np.asarray(reg.ttl_weights) / np.sum(reg.ttl_weights)
            init = np.asarray(reg.ttl_initials)[rng.choice(len(w), size=len(sel), p=w)]
            ttl_obs[sel] = init - np.array([reg.hops[int(t)] for t in init], dtype=np.int64)

    # background (non-anycast) web subnets
    n_other = int(scenario.get("other_subnets", 20))
    other = np.flatnonzero(dest == -1)
    if len(other):
        o_sub = rng.integers(n_other, size=len(other))
        o_rtt = rng.uniform(5.0, 80.0, size=n_other)
        o_init = rng.choice([64, 128], size=n_other)
        o_hops = rng.integers(5, 20, size=n_other)
        offset = len(fqdn_names)
        per_sub = 20
        for k in range(n_other):
            base = ((151 << 24) | (101 << 16) | (k << 8))
            for j in range(per_sub):
                fqdn_names.append(f"w{j}.web{k}x{j % 5}.com")
                fqdn_ips.append(np.array([base + 1 + j % 16]))
        j = rng.integers(per_sub, size=len(other))
        flow_fqdn[other] = offset + o_sub * per_sub + j
        server_ip[other] = np.array([fqdn_ips[f][0] for f in flow_fqdn[other]])
        rtt_base[other] = o_rtt[o_sub]
        think[other] = 30.0
        ttl_obs[other] = o_init[o_sub] - o_hops[o_sub]

    min_rtt = np.round(rtt_base + rng.exponential(jitter, size=n), 3)
    think_t = think * rng.lognormal(0.0, 0.4, size=n)
    ttfb = np.ceil((2.0 * min_rtt + think_t) * 1000.0) / 1000.0
    ttfb = np.maximum(ttfb, 2.0 * min_rtt)
    ts_end = np.round(ts_start + rng.exponential(20.0, size=n) + ttfb / 1000.0, 6)
    ts_end = np.maximum(ts_end, ts_start)
    l7_draw = rng.random(n)
    l7 = np.where(l7_draw < 0.6, 1, np.where(l7_draw < 0.99, 0, 2))
    port = np.where(l7 == 1, 443, np.where(l7 == 0, 80, 1935))
    bytes_down = np.floor(rng.lognormal(9.0, 1.5, size=n)).astype(np.int64)

    unannotated = rng.random(n) < float(scenario.get("unannotated_share", 0.02))

    order = np.lexsort((np.arange(n), ts_start))
    cols = dict(ts_start=ts_start, ts_end=ts_end, client=users, server_ip=server_ip, server_port=port,
                l7=l7, bytes_down=bytes_down, min_rtt_ms=min_rtt, min_ttl=ttl_obs, ttfb_ms=ttfb,
                fqdn=np.where(unannotated, -1, flow_fqdn))
    cols = {k: v[order] for k, v in cols.items()}
    clients = _client_ids(n_users, seed)
    table = FlowTable(**cols, clients=clients, l7_labels=list(L7_LABELS), fqdns=fqdn_names)
    dns = _dns_for(table, fqdn_ips, float(scenario.get("dns_ttl_s", 86_400.0)))
    return FlowLog(table, dns, truth, anycast)


def _dns_for(table: FlowTable, fqdn_ips: list[np.ndarray], ttl_s: float) -> list[DnsObservation]:
    """Emit an observation right at flow start whenever a replaying cache
    would not already map (client, server) to the flow's FQDN."""
    state: dict[tuple[int, int], tuple[int, float]] = {}
    answers_txt = [tuple(int_to_ip(ip) for ip in ips) for ips in fqdn_ips]
    out = []
    clients = table.clients
    for ts, c, ip, fq in zip(table.ts_start.tolist(), table.client.tolist(),
                             table.server_ip.tolist(), table.fqdn.tolist()):
        if fq < 0:
            continue
        cur = state.get((c, ip))
        if cur is not None and cur[0] == fq and ts - cur[1] <= ttl_s:
            continue
        for a in fqdn_ips[fq].tolist():
            state[(c, a)] = (fq, ts)
        out.append(DnsObservation(ts, clients[c], table.fqdns[fq], answers_txt[fq]))
    return out


# -- ready-made scenarios

def default_flow_scenario(n_subnets: int = 13, users: int = 2_000, flows: int = 300_000,
                          days: float = 30.0, with_events: bool = True) -> dict:
    """A month of traffic towards ``n_subnets`` anycast /24s.

    With ``with_events`` three subnets carry scheduled changes: an RTT step
    from 8 to 28 ms reverted three days later, a switch from two initial TTLs
    to one, and a change moving RTT, TTL and TTFB together.
    """
    if n_subnets < 3 and with_events:
        raise ValueError("scheduled events need at least 3 subnets")
    subnets = []
    for i in range(n_subnets):
        subnets.append({
            "slash24": f"93.{184 + i // 200}.{(i * 7) % 200 + 16}.0/24",
            "name": f"cdn{i}",
            "weight": 1.0 / (1 + i) ** 0.8,
            "servers": 4 + (i * 5) % 40,
            "services": 3 + i % 9,
            "ips_per_fqdn": 1 + (i % 4) * 3,
            "rtt_ms": 4.0 + (i * 11) % 37,
            "ttl_initials": [128] if i % 3 == 0 else [64],
            "hops": 7 + i % 6,
            "think_ms": 10.0 + (i * 3) % 25,
        })
    events = []
    if with_events:
        day = 86_400
        subnets[0].update(rtt_ms=8.0, ttl_initials=[64], ttl_weights=[1.0], sibling=f"93.184.{250}.0/24")
        events.append({"slash24": subnets[0]["slash24"], "at_s": 8 * day + 14 * 3600,
                       "until_s": 11 * day + 14 * 3600, "rtt_ms": 28.0})
        subnets[1].update(ttl_initials=[128, 64], ttl_weights=[0.5, 0.5], rtt_ms=12.0, weight=8.0)
        events.append({"slash24": subnets[1]["slash24"], "at_s": 15 * day + 10 * 3600,
                       "ttl_initials": [64], "ttl_weights": [1.0]})
        subnets[2].update(rtt_ms=10.0, ttl_initials=[128], ttl_weights=[1.0], hops=8, weight=4.0)
        events.append({"slash24": subnets[2]["slash24"], "at_s": 21 * day + 9 * 3600,
                       "rtt_ms": 45.0, "hops": 14})
    return {"start": SEPTEMBER_2014, "duration_s": days * 86_400.0, "users": users, "flows": flows,
            "anycast_share": 0.3, "subnets": subnets, "events": events}


@dataclass
class CensusWorld:
    vps: list[VantagePoint]
    targets: list[tuple[int, str]]
    hosts: dict[str, list[str]]
    deployments: list[SyntheticDeployment]
    measurements: list[PingMeasurement]

    def truth(self) -> dict:
        """/24 -> true site count (all members of a /24 share their sites)."""
        out: dict[str, dict] = {}
        for d in self.deployments:
            p = int_to_ip(slash24_key(d.target + "/24") << 8) + "/24"
            out.setdefault(p, {"sites": len(d.sites), "members": []})["members"].append(d.target)
        return out


def gen_census_world(n_subnets: int, seed: int, *, n_vps: int = 100, anycast_share: float = 0.1,
                     max_sites: int = 20, min_separation_km: float = 3000.0,
                     inflation: tuple[float, float] = (1.0, 1.5), jitter_ms: float = 0.0,
                     members_per_subnet: tuple[int, int] = (1, 4), timestamp: float = 0.0,
                     extra_anycast: Sequence[str] = (), extra_unicast: Sequence[str] = ()) -> CensusWorld:
    """Ranked URL list, hostname table and ping campaign for a synthetic census.

    Each /24 is one deployment (unicast or anycast); its members are its /32s,
    each reachable through one hostname. ``extra_anycast`` / ``extra_unicast``
    add named /24s (e.g. the servers of a flow log) after the generated ones;
    extra anycast deployments get at least 8 sites.
    """
    if n_subnets < 1 or n_vps < 1 or not 0.0 <= anycast_share <= 1.0:
        raise ValueError("n_subnets, n_vps >= 1 and anycast_share in [0, 1] required")
    rng = np.random.default_rng(seed)
    vps = spread_vantage_points(n_vps)
    targets, hosts, deps, ms = [], {}, [], []
    rank = 0
    plan = [((11 << 24) | (i + 1) << 8, None) for i in range(n_subnets)]
    plan += [(slash24_key(p) << 8, True) for p in extra_anycast]
    plan += [(slash24_key(p) << 8, False) for p in extra_unicast]
    for i, (base, forced) in enumerate(plan):
        if forced is None:
            n_sites = int(rng.integers(2, max_sites + 1)) if rng.random() < anycast_share else 1
        else:
            n_sites = int(rng.integers(min(8, max_sites), max_sites + 1)) if forced else 1
        dep_seed = int(rng.integers(2**31))
        dep = gen_deployment(n_sites, seed=dep_seed, target=int_to_ip(base + 1),
                             min_separation_km=min_separation_km)
        model = RttModel(float(rng.uniform(*inflation)), jitter_ms, dep_seed)
        k = int(rng.integers(members_per_subnet[0], members_per_subnet[1] + 1))
        for j in range(k):
            member = SyntheticDeployment(int_to_ip(base + 1 + j), dep.sites, dep.ttl_initial, dep_seed)
            deps.append(member)
            ms.extend(simulate_campaign(vps, [member], model, timestamp))
            host = f"www{j}.site{i}.example.com"
            hosts[host] = [member.target]
            rank += 1
            targets.append((rank, f"http://{host}/"))
    return CensusWorld(vps, targets, hosts, deps, ms)
