"""Aggregate anycast flows into per-subnet summaries, per-service tables,
user-activity and server-discovery series, and DNS load-balancing CDFs.

Counting is exact (no sketches). Volumes are kept in bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .flows import DnsObservation, FlowRecord, FlowTable, as_table, int_to_ip, ip_to_int, slash24_key
from .psl import SuffixRules, default_rules

OTHERS = "Others"
UNKNOWN_SERVICE = "(unknown)"
DEFAULT_OTHERS_CUTOFF = 1000


@dataclass(frozen=True)
class SubnetSummary:
    slash24: str
    distinct_ip32: int
    volume_bytes: int
    flow_count: int
    user_count: int
    fqdn_count: int
    window: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {"slash24": self.slash24, "ip32": self.distinct_ip32, "volume_bytes": self.volume_bytes,
                "flows": self.flow_count, "users": self.user_count, "fqdn": self.fqdn_count,
                "window": list(self.window) if self.window else None}


@dataclass(frozen=True)
class ServiceRow:
    service: str
    servers: int
    volume_bytes: int
    flows: int
    users: int
    fqdn_count: int

    def to_dict(self) -> dict:
        return {"service": self.service, "servers": self.servers, "volume_bytes": self.volume_bytes,
                "flows": self.flows, "users": self.users, "fqdn": self.fqdn_count}


@dataclass(frozen=True)
class CdfPoint:
    x: int
    y: float


def _distinct_per_group(group: np.ndarray, values: np.ndarray, n_groups: int, skip_negative=False) -> np.ndarray:
    if skip_negative:
        keep = values >= 0
        group, values = group[keep], values[keep]
    if len(group) == 0:
        return np.zeros(n_groups, dtype=np.int64)
    width = int(values.max()) + 1
    pairs = np.unique(group.astype(np.int64) * width + values)
    return np.bincount(pairs // width, minlength=n_groups)


def _aggregate(t: FlowTable, group: np.ndarray, n_groups: int):
    return dict(
        ip32=_distinct_per_group(group, t.server_ip, n_groups),
        volume=_int_sum(group, t.bytes_down, n_groups),
        flows=np.bincount(group, minlength=n_groups),
        users=_distinct_per_group(group, t.client, n_groups),
        fqdn=_distinct_per_group(group, t.fqdn, n_groups, skip_negative=True),
    )


def _int_sum(group: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    # exact integer sums (bincount weights would go through float64)
    out = np.zeros(n_groups, dtype=np.int64)
    np.add.at(out, group, values)
    return out


def window_mask(t: FlowTable, window: tuple[float, float] | None) -> np.ndarray:
    if window is None:
        return np.ones(len(t), dtype=bool)
    return (t.ts_start >= window[0]) & (t.ts_start < window[1])


def subnet_summary(
    flows: FlowTable | Iterable[FlowRecord],
    window: tuple[float, float] | None = None,
    *,
    others_cutoff: int | None = None,
    top_n: int | None = None,
) -> list[SubnetSummary]:
    """One row per /24, most users first.

    With ``others_cutoff`` and/or ``top_n``, subnets with at most
    ``others_cutoff`` users or ranked beyond ``top_n`` are merged into a
    single ``Others`` row (distinct counts recomputed over the merged flows).
    """
    t = as_table(flows)
    t = t.take(window_mask(t, window))
    if len(t) == 0:
        return []
    keys, group = np.unique(t.slash24, return_inverse=True)
    agg = _aggregate(t, group, len(keys))
    rows = [
        SubnetSummary(int_to_ip(int(k) << 8) + "/24", int(agg["ip32"][i]), int(agg["volume"][i]),
                      int(agg["flows"][i]), int(agg["users"][i]), int(agg["fqdn"][i]), window)
        for i, k in enumerate(keys)
    ]
    order = sorted(range(len(rows)), key=lambda i: (-rows[i].user_count, int(keys[i])))
    rows = [rows[i] for i in order]
    if others_cutoff is None and top_n is None:
        return rows
    kept, tail = [], []
    for rank, (i, row) in enumerate(zip(order, rows)):
        ok = (others_cutoff is None or row.user_count > others_cutoff) and (top_n is None or rank < top_n)
        (kept if ok else tail).append(int(keys[i]))
    if not tail:
        return rows
    mask = np.isin(t.slash24, np.array(tail, dtype=np.int64))
    rest = t.take(mask)
    a = _aggregate(rest, np.zeros(len(rest), dtype=np.int64), 1)
    others = SubnetSummary(OTHERS, int(a["ip32"][0]), int(a["volume"][0]), int(a["flows"][0]),
                           int(a["users"][0]), int(a["fqdn"][0]), window)
    kept_set = set(kept)
    return [r for r in rows if slash24_key(r.slash24) in kept_set] + [others]


def active_user_series(
    web_flows: FlowTable | Iterable[FlowRecord],
    anycast_slash24s: Iterable[str],
    bin_s: float = 3600.0,
    window: tuple[float, float] | None = None,
) -> list[tuple[float, float | None]]:
    """Per time bin, share of active clients that reached an anycast subnet.

    Bins are aligned to multiples of ``bin_s``; a bin with no active client
    maps to None.
    """
    if bin_s <= 0:
        raise ValueError("bin_s must be positive")
    t = as_table(web_flows)
    t = t.take(window_mask(t, window))
    if len(t) == 0:
        return []
    b = np.floor(t.ts_start / bin_s).astype(np.int64)
    lo = int(b.min()) if window is None else int(np.floor(window[0] / bin_s))
    hi = int(b.max()) if window is None else int(np.ceil(window[1] / bin_s)) - 1
    n_bins = hi - lo + 1
    g = b - lo
    active = _distinct_per_group(g, t.client, n_bins)
    is_any = t.in_slash24s(anycast_slash24s)
    touched = _distinct_per_group(g[is_any], t.client[is_any], n_bins)
    return [((lo + i) * bin_s, None if active[i] == 0 else int(touched[i]) / int(active[i]))
            for i in range(n_bins)]


def discovery_curve(
    flows: FlowTable | Iterable[FlowRecord], reorder_tolerance_s: float = 60.0
) -> tuple[np.ndarray, np.ndarray]:
    """(flow start times, distinct servers seen up to and including each flow)."""
    t = as_table(flows)
    ts = t.ts_start
    if len(ts) == 0:
        return ts.copy(), np.zeros(0, dtype=np.int64)
    late = ts < np.maximum.accumulate(ts) - reorder_tolerance_s
    if late.any():
        i = int(np.argmax(late))
        raise ValueError(f"flow {i} is out of order beyond {reorder_tolerance_s} s")
    _, first = np.unique(t.server_ip, return_index=True)
    new = np.zeros(len(ts), dtype=np.int64)
    new[first] = 1
    return ts.copy(), np.cumsum(new)


def second_level_domain(fqdn: str, rules: SuffixRules | None = None) -> str:
    if not fqdn:
        raise ValueError("empty FQDN")
    return (default_rules() if rules is None else rules).service_label(fqdn)


def service_table(
    flows: FlowTable | Iterable[FlowRecord], top_n: int | None = None, rules: SuffixRules | None = None
) -> list[ServiceRow]:
    """Flows grouped by service label, most users first; FQDN-less flows
    form the ``(unknown)`` row."""
    t = as_table(flows)
    if len(t) == 0:
        return []
    rules = default_rules() if rules is None else rules
    labels = [second_level_domain(f, rules) for f in t.fqdns] + [UNKNOWN_SERVICE]
    names, code = np.unique(np.array(labels, dtype=object), return_inverse=True)
    fq = t.fqdn.copy()
    fq[fq < 0] = len(t.fqdns)
    group = code[fq]
    agg = _aggregate(t, group, len(names))
    rows = [ServiceRow(str(names[i]), int(agg["ip32"][i]), int(agg["volume"][i]), int(agg["flows"][i]),
                       int(agg["users"][i]), int(agg["fqdn"][i]))
            for i in range(len(names)) if agg["flows"][i] > 0]
    rows.sort(key=lambda r: (-r.users, -r.flows, r.service))
    return rows if top_n is None else rows[:top_n]


def fqdn_ip_multimap(
    observations: Iterable[DnsObservation], owner_slash24s: Iterable[str] | None = None
) -> dict[str, set[str]]:
    """FQDN -> all addresses it resolved to.

    With ``owner_slash24s``, keep only FQDNs that resolved at least once into
    one of those subnets (but keep all their addresses).
    """
    mm: dict[str, set[str]] = {}
    for o in observations:
        mm.setdefault(o.fqdn, set()).update(o.answers)
    if owner_slash24s is not None:
        keys = {slash24_key(p) for p in owner_slash24s}
        mm = {f: ips for f, ips in mm.items() if any(ip_to_int(ip) >> 8 in keys for ip in ips)}
    return mm


def lb_cdf(multimap: Mapping[str, Iterable[str]], within: str | None = None) -> list[CdfPoint]:
    """Empirical CDF over FQDNs of their number of distinct addresses.

    ``within`` restricts counting to addresses of one /24; FQDNs with no
    address there are left out.
    """
    if not multimap:
        raise ValueError("empty FQDN multimap")
    key = None if within is None else slash24_key(within)
    counts = []
    for ips in multimap.values():
        ips = set(ips)
        if key is not None:
            ips = {ip for ip in ips if ip_to_int(ip) >> 8 == key}
        if ips:
            counts.append(len(ips))
    if not counts:
        return []
    xs, n = np.unique(np.array(counts), return_counts=True)
    cum = np.cumsum(n)
    total = len(counts)
    return [CdfPoint(int(x), int(c) / total) for x, c in zip(xs, cum)]
