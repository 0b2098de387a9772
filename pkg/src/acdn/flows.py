"""Per-flow TCP logs: parsing, FQDN annotation from a DNS cache, and filtering.

Log lines are space-delimited::

    ts_start ts_end client_id server_ip server_port l7 bytes_down min_rtt_ms min_ttl ttfb_ms [fqdn]

with ``-`` (or a missing last column) for an unknown FQDN. DNS observations
are ``ts client_id fqdn ip[,ip...]``. Client identifiers are opaque hashes;
raw IPv4 client addresses are refused at the ingest boundary.
"""

from __future__ import annotations

import hashlib
import heapq
import ipaddress
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

L7_LABELS = ("HTTP", "TLS", "other")
DEFAULT_DNS_TTL_S = 86_400.0
DEFAULT_CACHE_CAPACITY = 1_000_000
REORDER_WINDOW_S = 60.0


def ip_to_int(ip: str) -> int:
    return int(ipaddress.IPv4Address(ip))


def int_to_ip(n: int) -> str:
    n = int(n)
    return f"{n >> 24 & 255}.{n >> 16 & 255}.{n >> 8 & 255}.{n & 255}"


def slash24(ip: str | int) -> str:
    """``'93.184.220.7'`` -> ``'93.184.220.0/24'``."""
    n = ip if isinstance(ip, (int, np.integer)) else ip_to_int(ip)
    return int_to_ip(int(n) & 0xFFFFFF00) + "/24"


def slash24_key(prefix: str) -> int:
    """Integer value of a /24 prefix written as ``a.b.c.0/24`` or ``a.b.c.0``."""
    net = ipaddress.IPv4Network(prefix if "/" in prefix else prefix + "/24", strict=False)
    if net.prefixlen != 24:
        raise ValueError(f"not a /24: {prefix}")
    return int(net.network_address) >> 8


def anonymize_client(address: str, salt: str = "") -> str:
    """Irreversible opaque identifier for a client address."""
    return hashlib.blake2b(f"{salt}|{address}".encode(), digest_size=8).hexdigest()


def _looks_like_ipv4(s: str) -> bool:
    try:
        ipaddress.IPv4Address(s)
        return True
    except ValueError:
        return False


@dataclass(frozen=True, slots=True)
class FlowRecord:
    ts_start: float
    ts_end: float
    client_id: str
    server_ip: str
    server_port: int
    l7: str
    bytes_down: int
    min_rtt_ms: float
    min_ttl: int
    ttfb_ms: float
    fqdn: str | None = None

    def __post_init__(self) -> None:
        if not self.ts_end >= self.ts_start:
            raise ValueError("ts_end before ts_start")
        if self.bytes_down < 0:
            raise ValueError("negative bytes_down")
        if not 1 <= self.min_ttl <= 255:
            raise ValueError(f"min_ttl {self.min_ttl} outside 1..255")
        if not self.ttfb_ms >= 0:
            raise ValueError("negative ttfb")
        if not self.min_rtt_ms >= 0:
            raise ValueError("negative min_rtt")

    @property
    def slash24(self) -> str:
        return slash24(self.server_ip)


@dataclass(frozen=True, slots=True)
class ParseError:
    line_no: int
    line: str
    reason: str

    def to_dict(self) -> dict:
        return {"line": self.line_no, "reason": self.reason, "text": self.line}


def format_number(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def format_flow(f: FlowRecord) -> str:
    return " ".join((
        format_number(f.ts_start), format_number(f.ts_end), f.client_id, f.server_ip, str(f.server_port), f.l7,
        str(f.bytes_down), format_number(f.min_rtt_ms), str(f.min_ttl), format_number(f.ttfb_ms), f.fqdn or "-",
    ))


def parse_flow_line(line: str) -> FlowRecord:
    parts = line.split()
    if len(parts) not in (10, 11):
        raise ValueError(f"expected 10 or 11 fields, got {len(parts)}")
    fqdn = parts[10] if len(parts) == 11 and parts[10] != "-" else None
    client = parts[2]
    if _looks_like_ipv4(client):
        raise ValueError("raw client address; client_id must be an opaque hash")
    return FlowRecord(
        ts_start=float(parts[0]),
        ts_end=float(parts[1]),
        client_id=client,
        server_ip=str(ipaddress.IPv4Address(parts[3])),
        server_port=int(parts[4]),
        l7=parts[5],
        bytes_down=int(parts[6]),
        min_rtt_ms=float(parts[7]),
        min_ttl=int(parts[8]),
        ttfb_ms=float(parts[9]),
        fqdn=fqdn,
    )


def canonical_flow_line(line: str) -> str:
    return format_flow(parse_flow_line(line))


def parse_flow_log(
    stream: Iterable[str],
    errors: list[ParseError] | None = None,
    reorder_window_s: float = REORDER_WINDOW_S,
) -> Iterator[FlowRecord]:
    """Yield valid records in input order.

    Malformed lines, and lines starting more than ``reorder_window_s`` before
    the latest start seen so far, are appended to ``errors`` (or raise if
    ``errors`` is None).
    """
    latest = -np.inf
    for no, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rec = parse_flow_line(line)
            if rec.ts_start < latest - reorder_window_s:
                raise ValueError(f"out of order by {latest - rec.ts_start:.3f} s")
        except ValueError as exc:
            if errors is None:
                raise ValueError(f"line {no}: {exc}") from exc
            errors.append(ParseError(no, line, str(exc)))
            continue
        latest = max(latest, rec.ts_start)
        yield rec


def write_flow_log(flows: Iterable[FlowRecord], fh: TextIO) -> None:
    for f in flows:
        fh.write(format_flow(f) + "\n")


# -- DNS


@dataclass(frozen=True, slots=True)
class DnsObservation:
    ts: float
    client_id: str
    fqdn: str
    answers: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.answers:
            raise ValueError("DNS observation without answers")
        object.__setattr__(self, "answers", tuple(str(ipaddress.IPv4Address(a)) for a in self.answers))


def format_dns(o: DnsObservation) -> str:
    return f"{format_number(o.ts)} {o.client_id} {o.fqdn} {','.join(o.answers)}"


def parse_dns_log(stream: Iterable[str], errors: list[ParseError] | None = None) -> Iterator[DnsObservation]:
    for no, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"expected 4 fields, got {len(parts)}")
            if _looks_like_ipv4(parts[1]):
                raise ValueError("raw client address; client_id must be an opaque hash")
            yield DnsObservation(float(parts[0]), parts[1], parts[2].lower().rstrip("."), tuple(parts[3].split(",")))
        except ValueError as exc:
            if errors is None:
                raise ValueError(f"line {no}: {exc}") from exc
            errors.append(ParseError(no, line, str(exc)))


def write_dns_log(obs: Iterable[DnsObservation], fh: TextIO) -> None:
    for o in obs:
        fh.write(format_dns(o) + "\n")


class DnsCache:
    """(client, server_ip) -> (fqdn, observed_ts), bounded LRU with entry TTL.

    A newer observation for a key replaces the older one; lookups never return
    an entry older than ``ttl_s`` or observed after the lookup time.
    """

    def __init__(self, capacity: int = DEFAULT_CACHE_CAPACITY, ttl_s: float = DEFAULT_DNS_TTL_S):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.ttl_s = ttl_s
        self._entries: OrderedDict[tuple[str, str], tuple[str, float]] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def observe(self, obs: DnsObservation) -> DnsCache:
        for ip in obs.answers:
            key = (obs.client_id, ip)
            old = self._entries.get(key)
            if old is not None and old[1] > obs.ts:
                self._entries.move_to_end(key)
                continue
            self._entries[key] = (obs.fqdn, obs.ts)
            self._entries.move_to_end(key)
            if len(self._entries) > self.capacity:
                self._entries.popitem(last=False)
        return self

    def lookup(self, client_id: str, server_ip: str, at: float) -> str | None:
        key = (client_id, server_ip)
        entry = self._entries.get(key)
        if entry is None:
            return None
        self._entries.move_to_end(key)
        fqdn, ts = entry
        if ts > at or at - ts > self.ttl_s:
            return None
        return fqdn


def dns_observe(cache: DnsCache, obs: DnsObservation) -> DnsCache:
    return cache.observe(obs)


def annotate_flow(cache: DnsCache, f: FlowRecord) -> FlowRecord:
    if f.fqdn is not None:
        return f
    fqdn = cache.lookup(f.client_id, f.server_ip, f.ts_start)
    return f if fqdn is None else replace(f, fqdn=fqdn)


def annotate_stream(
    flows: Iterable[FlowRecord], observations: Iterable[DnsObservation], cache: DnsCache | None = None
) -> Iterator[FlowRecord]:
    """Replay observations and flows in timestamp order, annotating each flow.

    On equal timestamps the observation is applied first.
    """
    cache = DnsCache() if cache is None else cache
    tagged_obs = ((o.ts, 0, i, o) for i, o in enumerate(observations))
    tagged_flows = ((f.ts_start, 1, i, f) for i, f in enumerate(flows))
    for _, kind, _, item in heapq.merge(tagged_obs, tagged_flows, key=lambda t: t[:3]):
        if kind == 0:
            cache.observe(item)
        else:
            yield annotate_flow(cache, item)


def filter_anycast_flows(flows: Iterable[FlowRecord], anycast_slash24s: Iterable[str]) -> Iterator[FlowRecord]:
    keys = {slash24_key(p) for p in anycast_slash24s}
    if not keys:
        raise ValueError("empty anycast subnet set")
    for f in flows:
        if ip_to_int(f.server_ip) >> 8 in keys:
            yield f


# -- columnar view


class FlowTable:
    """Column-oriented flows for vectorized aggregation.

    String columns (client, l7, fqdn) are dictionary-encoded: ``client`` holds
    indices into ``clients``; ``fqdn`` holds indices into ``fqdns`` with -1 for
    an absent FQDN.
    """

    COLUMNS = ("ts_start", "ts_end", "client", "server_ip", "server_port", "l7",
               "bytes_down", "min_rtt_ms", "min_ttl", "ttfb_ms", "fqdn")

    def __init__(self, *, ts_start, ts_end, client, server_ip, server_port, l7, bytes_down,
                 min_rtt_ms, min_ttl, ttfb_ms, fqdn, clients: Sequence[str],
                 l7_labels: Sequence[str], fqdns: Sequence[str]):
        self.ts_start = np.asarray(ts_start, dtype=np.float64)
        self.ts_end = np.asarray(ts_end, dtype=np.float64)
        self.client = np.asarray(client, dtype=np.int64)
        self.server_ip = np.asarray(server_ip, dtype=np.int64)
        self.server_port = np.asarray(server_port, dtype=np.int64)
        self.l7 = np.asarray(l7, dtype=np.int64)
        self.bytes_down = np.asarray(bytes_down, dtype=np.int64)
        self.min_rtt_ms = np.asarray(min_rtt_ms, dtype=np.float64)
        self.min_ttl = np.asarray(min_ttl, dtype=np.int64)
        self.ttfb_ms = np.asarray(ttfb_ms, dtype=np.float64)
        self.fqdn = np.asarray(fqdn, dtype=np.int64)
        self.clients = list(clients)
        self.l7_labels = list(l7_labels)
        self.fqdns = list(fqdns)
        n = len(self.ts_start)
        if any(len(getattr(self, c)) != n for c in self.COLUMNS):
            raise ValueError("column length mismatch")

    def __len__(self) -> int:
        return len(self.ts_start)

    @property
    def slash24(self) -> np.ndarray:
        return self.server_ip >> 8

    @classmethod
    def empty(cls) -> FlowTable:
        z = np.zeros(0)
        return cls(ts_start=z, ts_end=z, client=z, server_ip=z, server_port=z, l7=z, bytes_down=z,
                   min_rtt_ms=z, min_ttl=z, ttfb_ms=z, fqdn=z, clients=[], l7_labels=list(L7_LABELS), fqdns=[])

    @classmethod
    def from_records(cls, records: Iterable[FlowRecord]) -> FlowTable:
        clients: dict[str, int] = {}
        l7s: dict[str, int] = {lab: i for i, lab in enumerate(L7_LABELS)}
        fqdns: dict[str, int] = {}
        cols: dict[str, list] = {c: [] for c in cls.COLUMNS}
        for r in records:
            cols["ts_start"].append(r.ts_start)
            cols["ts_end"].append(r.ts_end)
            cols["client"].append(clients.setdefault(r.client_id, len(clients)))
            cols["server_ip"].append(ip_to_int(r.server_ip))
            cols["server_port"].append(r.server_port)
            cols["l7"].append(l7s.setdefault(r.l7, len(l7s)))
            cols["bytes_down"].append(r.bytes_down)
            cols["min_rtt_ms"].append(r.min_rtt_ms)
            cols["min_ttl"].append(r.min_ttl)
            cols["ttfb_ms"].append(r.ttfb_ms)
            cols["fqdn"].append(-1 if r.fqdn is None else fqdns.setdefault(r.fqdn, len(fqdns)))
        return cls(**cols, clients=list(clients), l7_labels=list(l7s), fqdns=list(fqdns))

    def take(self, index) -> FlowTable:
        """Rows selected by a boolean mask or an index array."""
        return FlowTable(**{c: getattr(self, c)[index] for c in self.COLUMNS},
                         clients=self.clients, l7_labels=self.l7_labels, fqdns=self.fqdns)

    def in_slash24s(self, prefixes: Iterable[str]) -> np.ndarray:
        keys = np.array(sorted({slash24_key(p) for p in prefixes}), dtype=np.int64)
        return np.isin(self.slash24, keys)

    def record(self, i: int) -> FlowRecord:
        fq = int(self.fqdn[i])
        return FlowRecord(
            ts_start=float(self.ts_start[i]), ts_end=float(self.ts_end[i]),
            client_id=self.clients[self.client[i]], server_ip=int_to_ip(self.server_ip[i]),
            server_port=int(self.server_port[i]), l7=self.l7_labels[self.l7[i]],
            bytes_down=int(self.bytes_down[i]), min_rtt_ms=float(self.min_rtt_ms[i]),
            min_ttl=int(self.min_ttl[i]), ttfb_ms=float(self.ttfb_ms[i]),
            fqdn=None if fq < 0 else self.fqdns[fq],
        )

    def __iter__(self) -> Iterator[FlowRecord]:
        # tolist() avoids numpy scalar overhead per field
        cols = [getattr(self, c).tolist() for c in self.COLUMNS]
        clients, l7s, fqdns = self.clients, self.l7_labels, self.fqdns
        for ts0, ts1, c, ip, port, l7, b, rtt, ttl, ttfb, fq in zip(*cols):
            yield FlowRecord(ts0, ts1, clients[c], int_to_ip(ip), port, l7s[l7], b, rtt, ttl, ttfb,
                             None if fq < 0 else fqdns[fq])


def as_table(flows: FlowTable | Iterable[FlowRecord]) -> FlowTable:
    return flows if isinstance(flows, FlowTable) else FlowTable.from_records(flows)
