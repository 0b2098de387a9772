"""Routing-change detection on per-subnet RTT, TTFB and TTL series.

Flows are binned per /24 (hourly by default). For RTT and TTFB each bin is
summarized by the median of the per-flow minima; a level shift is reported
when a run of ``persistence_bins`` consecutive bins moves away from the
median of the current regime by more than ``max(abs_min_ms, rel_min *
baseline)``, all in the same direction. The regime then restarts at the new
level, so a later return to the old level is a second event.

TTL values are mapped back to (initial TTL, hop count) pairs; a bin's pattern
is the set of pairs with enough support, and a persistent change of that set
is a TTL event.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .flows import FlowRecord, FlowTable, as_table, int_to_ip

TTL_INITIALS = (32, 64, 128, 255)
KIND_ORDER = ("rtt_shift", "ttl_pattern_change", "ttfb_shift")
METRIC_KIND = {"rtt": "rtt_shift", "ttfb": "ttfb_shift"}


@dataclass(frozen=True)
class DetectorConfig:
    bin_s: float = 3600.0
    min_samples: int = 5
    min_support: int = 3
    abs_min_ms: float = 5.0
    rel_min: float = 0.5
    persistence_bins: int = 2
    window_bins: int = 2
    absence_alpha: float = 0.01

    def __post_init__(self) -> None:
        if self.bin_s <= 0 or self.min_samples < 1 or self.min_support < 1:
            raise ValueError("bin_s, min_samples and min_support must be positive")
        if self.abs_min_ms < 0 or self.rel_min < 0:
            raise ValueError("thresholds must be nonnegative")
        if not 0.0 < self.absence_alpha < 1.0:
            raise ValueError("absence_alpha must lie in (0, 1)")
        if self.persistence_bins < 1 or self.window_bins < 0:
            raise ValueError("persistence_bins >= 1 and window_bins >= 0 required")


@dataclass(frozen=True)
class MetricSeries:
    slash24: str
    metric: str
    bin_s: float
    bin_start: np.ndarray
    level: np.ndarray
    count: np.ndarray

    def __len__(self) -> int:
        return len(self.bin_start)


@dataclass(frozen=True)
class TtlPatternSeries:
    slash24: str
    bin_s: float
    bin_start: np.ndarray
    patterns: list[frozenset]
    observed: list[frozenset] = field(default_factory=list)
    counts: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.observed:
            object.__setattr__(self, "observed", list(self.patterns))

    def consistent(self, k: int, pattern: frozenset, shares: Mapping | None = None,
                   alpha: float = 0.01) -> bool:
        """Bin ``k`` could have been produced by ``pattern``: every supported
        pair is in it, and every pair of it was either seen or, given its
        ``shares`` and the bin size, plausibly missed (chance >= ``alpha``)."""
        if not self.patterns[k] <= pattern:
            return False
        missing = pattern - self.observed[k]
        if not missing:
            return True
        if shares is None or not self.counts:
            return False
        n = sum(self.counts[k].values())
        return all((1.0 - shares.get(x, 0.0)) ** n >= alpha for x in missing)

    def pair_totals(self, ks: Iterable[int]) -> dict:
        tot: dict = {}
        for k in ks:
            for x, m in (self.counts[k].items() if self.counts else ()):
                tot[x] = tot.get(x, 0) + m
        return tot

    def __len__(self) -> int:
        return len(self.bin_start)


def _shares(totals: Mapping, pattern: frozenset) -> dict:
    n = sum(totals.values())
    return {x: totals.get(x, 0) / n for x in pattern} if n else {}


@dataclass(frozen=True)
class RoutingEvent:
    slash24: str
    ts: float
    kind: str
    before: object
    after: object
    confidence: int = 1
    kinds: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.before == self.after:
            raise ValueError("event with identical before and after")

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, frozenset):
                return sorted(list(p) for p in v)
            return v

        return {"slash24": self.slash24, "ts": self.ts, "kind": self.kind, "before": enc(self.before),
                "after": enc(self.after), "confidence": self.confidence, "kinds": list(self.kinds or (self.kind,))}


def ttl_initial_and_hops(observed_ttl: int) -> tuple[int, int]:
    if not 1 <= observed_ttl <= 255:
        raise ValueError(f"TTL {observed_ttl} outside 1..255")
    initial = next(t for t in TTL_INITIALS if t >= observed_ttl)
    return initial, initial - observed_ttl


def _subnet_of(t: FlowTable) -> str:
    nets = np.unique(t.slash24)
    if len(nets) > 1:
        raise ValueError(f"flows span {len(nets)} /24 subnets")
    return int_to_ip(int(nets[0]) << 8) + "/24" if len(nets) else ""


def _bins(t: FlowTable, bin_s: float) -> np.ndarray:
    return np.floor(t.ts_start / bin_s).astype(np.int64)


def build_series(
    flows: FlowTable | Iterable[FlowRecord], bin_s: float = 3600.0, metric: str = "rtt", min_samples: int = 5
) -> MetricSeries:
    """Per-bin median of ``min_rtt_ms`` or ``ttfb_ms`` for one /24."""
    t = as_table(flows)
    prefix = _subnet_of(t)
    values = {"rtt": t.min_rtt_ms, "ttfb": t.ttfb_ms}[metric]
    b = _bins(t, bin_s)
    order = np.lexsort((values, b))
    b, v = b[order], values[order]
    keys, starts, counts = np.unique(b, return_index=True, return_counts=True)
    med = (v[starts + (counts - 1) // 2] + v[starts + counts // 2]) / 2.0
    keep = counts >= min_samples
    return MetricSeries(prefix, metric, bin_s, keys[keep] * bin_s, med[keep], counts[keep])


def build_ttl_series(
    flows: FlowTable | Iterable[FlowRecord], bin_s: float = 3600.0, min_support: int = 3, min_samples: int = 5
) -> TtlPatternSeries:
    t = as_table(flows)
    prefix = _subnet_of(t)
    b = _bins(t, bin_s)
    bins, patterns, observed, pair_counts = [], [], [], []
    if len(t):
        order = np.lexsort((t.min_ttl, b))
        b, ttl = b[order], t.min_ttl[order]
        keys, starts, counts = np.unique(b, return_index=True, return_counts=True)
        for k, s, c in zip(keys.tolist(), starts.tolist(), counts.tolist()):
            if c < min_samples:
                continue
            vals, n = np.unique(ttl[s:s + c], return_counts=True)
            pairs = [ttl_initial_and_hops(int(x)) for x in vals]
            bins.append(k * bin_s)
            patterns.append(frozenset(p for p, m in zip(pairs, n) if m >= min_support))
            observed.append(frozenset(pairs))
            pair_counts.append(dict(zip(pairs, n.tolist())))
    return TtlPatternSeries(prefix, bin_s, np.array(bins, dtype=float), patterns, observed, pair_counts)


def detect_level_shifts(
    s: MetricSeries, abs_min_ms: float = 5.0, rel_min: float = 0.5, persistence_bins: int = 2
) -> list[RoutingEvent]:
    kind = METRIC_KIND[s.metric]
    level = np.asarray(s.level, dtype=float)
    n, p = len(level), persistence_bins
    if n < 2 * p:
        return []
    events = []
    regime = 0
    for t in range(p, n - p + 1):
        if t < regime + p:  # a baseline needs as many bins as the shift that set it
            continue
        base = float(np.median(level[regime:t]))
        diff = level[t:t + p] - base
        thr = max(abs_min_ms, rel_min * abs(base))
        if np.all(np.abs(diff) >= thr) and (np.all(diff > 0) or np.all(diff < 0)):
            events.append(RoutingEvent(s.slash24, float(s.bin_start[t]), kind, base,
                                       float(np.median(level[t:t + p]))))
            regime = t
    return events


def detect_ttl_pattern_changes(s: TtlPatternSeries, persistence_bins: int = 2,
                               absence_alpha: float = 0.01) -> list[RoutingEvent]:
    """A pair under ``min_support`` but still seen in a bin neither confirms
    nor contradicts it, and neither does a pair missing from a bin too small
    for its absence to be telling. A pattern ends only when a bin cannot have
    come from it, and the new pattern must explain ``persistence_bins`` bins
    (the first pattern is established the same way)."""
    pats = s.patterns
    n, p = len(pats), persistence_bins
    if n < 2:
        return []
    events = []
    current, regime = None, {}
    for t in range(n - p + 1):
        new = pats[t]
        if current is not None and s.consistent(t, current, _shares(regime, current), absence_alpha):
            for x, m in s.pair_totals([t]).items():
                regime[x] = regime.get(x, 0) + m
            continue
        if not new:
            continue
        shares = _shares(s.pair_totals([t]), new)
        if all(s.consistent(k, new, shares, absence_alpha) for k in range(t, t + p)):
            if current is not None:
                events.append(RoutingEvent(s.slash24, float(s.bin_start[t]), "ttl_pattern_change", current, new))
            current, regime = new, s.pair_totals([t])
    return events


def correlate_events(
    rtt_events: Sequence[RoutingEvent],
    ttl_events: Sequence[RoutingEvent],
    ttfb_events: Sequence[RoutingEvent],
    window_bins: int = 2,
    bin_s: float = 3600.0,
) -> list[RoutingEvent]:
    """Merge events of different kinds starting within ``window_bins`` of each
    other; confidence is the number of kinds that agree."""
    allev = list(rtt_events) + list(ttl_events) + list(ttfb_events)
    if not allev:
        return []
    nets = {e.slash24 for e in allev}
    if len(nets) > 1:
        raise ValueError(f"events from several subnets: {sorted(nets)}")
    for e in allev:
        if e.ts % bin_s != 0:
            raise ValueError(f"event at {e.ts} not aligned to {bin_s} s bins")
    allev.sort(key=lambda e: (e.ts, KIND_ORDER.index(e.kind)))
    clusters: list[list[RoutingEvent]] = []
    for e in allev:
        c = clusters[-1] if clusters else None
        if c and e.ts - c[0].ts <= window_bins * bin_s and e.kind not in {x.kind for x in c}:
            c.append(e)
        else:
            clusters.append([e])
    out = []
    for c in clusters:
        lead = min(c, key=lambda e: KIND_ORDER.index(e.kind))
        kinds = tuple(k for k in KIND_ORDER if any(e.kind == k for e in c))
        out.append(RoutingEvent(lead.slash24, c[0].ts, lead.kind, lead.before, lead.after, len(kinds), kinds))
    return out


def ttfb_floor_violations(flows: FlowTable | Iterable[FlowRecord], bin_s: float = 3600.0) -> list[dict]:
    """Bins where the smallest TTFB is below twice the smallest RTT of the
    same /24: the handshake alone takes two round trips, so such bins point
    at broken measurements."""
    t = as_table(flows)
    if len(t) == 0:
        return []
    b = _bins(t, bin_s)
    key = t.slash24 * (int(b.max()) + 1) + (b - int(b.min()))
    keys, inv = np.unique(key, return_inverse=True)
    min_rtt = np.full(len(keys), np.inf)
    min_ttfb = np.full(len(keys), np.inf)
    np.minimum.at(min_rtt, inv, t.min_rtt_ms)
    np.minimum.at(min_ttfb, inv, t.ttfb_ms)
    bad = np.flatnonzero(min_ttfb < 2.0 * min_rtt)
    out = []
    first = np.zeros(len(keys), dtype=np.int64)
    first[inv[::-1]] = np.arange(len(inv))[::-1]
    for i in bad.tolist():
        j = first[i]
        out.append({"kind": "ttfb_below_twice_rtt", "slash24": int_to_ip(int(t.slash24[j]) << 8) + "/24",
                    "bin_start": float(b[j] * bin_s), "min_ttfb_ms": float(min_ttfb[i]),
                    "min_rtt_ms": float(min_rtt[i])})
    out.sort(key=lambda w: (w["bin_start"], w["slash24"]))
    return out


def flow_ttfb_violations(flows: FlowTable | Iterable[FlowRecord]) -> list[dict]:
    """Flows whose own TTFB is below twice their own min RTT."""
    t = as_table(flows)
    bad = np.flatnonzero(t.ttfb_ms < 2.0 * t.min_rtt_ms)
    return [{"kind": "flow_ttfb_below_twice_rtt", "index": int(i),
             "slash24": int_to_ip(int(t.server_ip[i]) >> 8 << 8) + "/24", "ts_start": float(t.ts_start[i]), "ttfb_ms": float(t.ttfb_ms[i]), "min_rtt_ms": float(t.min_rtt_ms[i])}
            for i in bad.tolist()]


def subnet_events(flows: FlowTable | Iterable[FlowRecord], cfg: DetectorConfig = DetectorConfig()) -> dict:
    """Full detection for one /24: raw per-metric events plus merged events."""
    t = as_table(flows)
    rtt = build_series(t, cfg.bin_s, "rtt", cfg.min_samples)
    ttfb = build_series(t, cfg.bin_s, "ttfb", cfg.min_samples)
    ttl = build_ttl_series(t, cfg.bin_s, cfg.min_support, cfg.min_samples)
    ev_rtt = detect_level_shifts(rtt, cfg.abs_min_ms, cfg.rel_min, cfg.persistence_bins)
    ev_ttfb = detect_level_shifts(ttfb, cfg.abs_min_ms, cfg.rel_min, cfg.persistence_bins)
    ev_ttl = detect_ttl_pattern_changes(ttl, cfg.persistence_bins, cfg.absence_alpha)
    return {
        "series": {"rtt": rtt, "ttfb": ttfb, "ttl": ttl},
        "raw": {"rtt_shift": ev_rtt, "ttl_pattern_change": ev_ttl, "ttfb_shift": ev_ttfb},
        "merged": correlate_events(ev_rtt, ev_ttl, ev_ttfb, cfg.window_bins, cfg.bin_s),
    }


def events_by_subnet(flows: FlowTable | Iterable[FlowRecord], cfg: DetectorConfig = DetectorConfig()) -> dict[str, dict]:
    t = as_table(flows)
    out = {}
    for key in np.unique(t.slash24).tolist():
        out[int_to_ip(key << 8) + "/24"] = subnet_events(t.take(t.slash24 == key), cfg)
    return out


def write_events_jsonl(events: Iterable[RoutingEvent], fh) -> None:
    for e in events:
        fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def write_series(s: MetricSeries, fh) -> None:
    """``bin_start level count`` per line, for plotting."""
    for b, v, c in zip(s.bin_start.tolist(), s.level.tolist(), s.count.tolist()):
        fh.write(f"{b:.0f} {v!r} {c}\n")
