import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acdn.flows import (
    DnsCache,
    DnsObservation,
    FlowRecord,
    FlowTable,
    anonymize_client,
    annotate_flow,
    annotate_stream,
    canonical_flow_line,
    dns_observe,
    filter_anycast_flows,
    format_flow,
    parse_dns_log,
    parse_flow_log,
    slash24,
    write_flow_log,
)

C = anonymize_client("10.1.2.3")


def flow(ts=100.0, client=C, ip="93.184.220.7", fqdn=None, ttl=54):
    return FlowRecord(ts, ts + 1, client, ip, 443, "TLS", 1000, 8.5, ttl, 20.0, fqdn)


def test_parse_examples():
    assert list(parse_flow_log(io.StringIO(""))) == []
    lines = [format_flow(flow(ts=i)) for i in range(3)]
    lines.insert(1, lines[0].replace(" 54 ", " 0 "))
    errors = []
    got = list(parse_flow_log(lines, errors))
    assert len(got) == 3 and len(errors) == 1 and errors[0].line_no == 2
    short = "1 2 abc 1.2.3.4 80 HTTP 10 5 60 12"
    assert next(parse_flow_log([short])).fqdn is None
    assert next(parse_flow_log([short + " -"])).fqdn is None


def test_parse_rejects_bad_input():
    with pytest.raises(ValueError, match="line 1"):
        list(parse_flow_log(["1 2 10.0.0.1 1.2.3.4 80 HTTP 10 5 60 12"]))
    with pytest.raises(ValueError):
        list(parse_flow_log(["1 0 abc 1.2.3.4 80 HTTP 10 5 60 12"]))
    errors = []
    list(parse_flow_log([format_flow(flow(ts=1000)), format_flow(flow(ts=900))], errors))
    assert "out of order" in errors[0].reason
    assert len(list(parse_flow_log([format_flow(flow(ts=1000)), format_flow(flow(ts=950))]))) == 2


@given(st.floats(0, 2e9), st.floats(0, 1e4), st.integers(0, 2**40), st.floats(0, 1e3), st.integers(1, 255),
       st.floats(0, 1e4), st.sampled_from([None, "a.example.com"]))
def test_round_trip(ts, dur, b, rtt, ttl, ttfb, fqdn):
    f = FlowRecord(ts, ts + dur, "abc", "1.2.3.4", 80, "HTTP", b, rtt, ttl, ttfb, fqdn)
    line = format_flow(f)
    assert next(parse_flow_log([line])) == f
    assert canonical_flow_line(line) == line
    buf = io.StringIO()
    write_flow_log([f], buf)
    assert buf.getvalue() == line + "\n"


def test_dns_parse():
    errors = []
    obs = list(parse_dns_log(["5 abc WWW.Example.com. 1.2.3.4,1.2.3.5", "6 abc x.com", "7 1.1.1.1 x.com 1.2.3.4"], errors))
    assert obs == [DnsObservation(5.0, "abc", "www.example.com", ("1.2.3.4", "1.2.3.5"))]
    assert [e.line_no for e in errors] == [2, 3]
    with pytest.raises(ValueError):
        DnsObservation(1, "c", "x", ())


def test_cache_examples():
    cache = DnsCache()
    dns_observe(cache, DnsObservation(10, C, "www.acme.com", ("93.184.220.7",)))
    assert cache.lookup(C, "93.184.220.7", 20) == "www.acme.com"
    dns_observe(cache, DnsObservation(15, C, "img.acme.com", ("93.184.220.7",)))
    assert cache.lookup(C, "93.184.220.7", 20) == "img.acme.com"
    small = DnsCache(capacity=2)
    for i in range(3):
        small.observe(DnsObservation(i, C, f"h{i}", (f"1.1.1.{i}",)))
    assert len(small) == 2 and small.lookup(C, "1.1.1.0", 5) is None and small.lookup(C, "1.1.1.2", 5) == "h2"


def test_annotate_examples():
    cache = DnsCache(ttl_s=100).observe(DnsObservation(50, C, "www.acme.com", ("93.184.220.7",)))
    assert annotate_flow(cache, flow(ts=100)).fqdn == "www.acme.com"
    assert annotate_flow(cache, flow(ts=40)).fqdn is None
    assert annotate_flow(cache, flow(ts=151)).fqdn is None
    assert annotate_flow(cache, flow(ts=100, client="other")).fqdn is None
    assert annotate_flow(cache, flow(fqdn="keep.me")).fqdn == "keep.me"


def test_filter_examples():
    flows = [flow(ip="93.184.220.7"), flow(ip="10.0.0.9")]
    assert list(filter_anycast_flows(flows, ["93.184.220.0/24"])) == flows[:1]
    assert list(filter_anycast_flows([], ["93.184.220.0/24"])) == []
    with pytest.raises(ValueError):
        list(filter_anycast_flows(flows, []))
    assert slash24("93.184.220.7") == "93.184.220.0/24"


def oracle_fqdn(observations, f, ttl_s):
    """Scan the full observation history: newest observation for the key at or before the flow."""
    best = None
    for o in observations:
        if o.ts <= f.ts_start and o.client_id == f.client_id and f.server_ip in o.answers:
            if best is None or o.ts >= best.ts:
                best = o
    if best is None or f.ts_start - best.ts > ttl_s:
        return None
    return best.fqdn


clients = st.sampled_from(["c1", "c2", "c3"])
ips = st.sampled_from(["1.1.1.1", "1.1.1.2", "2.2.2.2"])
names = st.sampled_from(["a.com", "b.com", "c.org"])
times = st.integers(0, 400).map(float)


@settings(max_examples=200)
@given(st.lists(st.tuples(times, clients, names, st.lists(ips, min_size=1, max_size=3, unique=True)), max_size=25),
       st.lists(st.tuples(times, clients, ips), max_size=25), st.sampled_from([30.0, 100.0, 1e9]))
def test_cache_matches_brute_force_replay(obs_raw, flow_raw, ttl_s):
    obs = sorted((DnsObservation(t, c, n, tuple(a)) for t, c, n, a in obs_raw), key=lambda o: o.ts)
    flows = sorted((flow(ts=t, client=c, ip=ip) for t, c, ip in flow_raw), key=lambda f: f.ts_start)
    got = list(annotate_stream(flows, obs, DnsCache(ttl_s=ttl_s)))
    assert [g.fqdn for g in got] == [oracle_fqdn(obs, f, ttl_s) for f in flows]
    cache = DnsCache(ttl_s=ttl_s)
    for o in obs:
        cache.observe(o)
    for g in got:
        assert annotate_flow(cache, g) == g


def test_table_round_trip():
    recs = [flow(ts=i, fqdn=None if i % 2 else "x.com", ip=f"1.2.{i}.4") for i in range(5)]
    t = FlowTable.from_records(recs)
    assert list(t) == recs and t.record(3) == recs[3]
    assert list(t.take(t.in_slash24s(["1.2.1.0/24"]))) == [recs[1]]
    assert len(FlowTable.empty()) == 0


def test_anonymize_is_opaque_and_stable():
    a = anonymize_client("10.1.2.3")
    assert a == anonymize_client("10.1.2.3") and "10.1" not in a and a != anonymize_client("10.1.2.4")
