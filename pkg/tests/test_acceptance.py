"""Acceptance checks against synthetic ground truth.

Each test records one PASS/FAIL line (collected in the terminal summary) and
then asserts. Tolerances are pinned as module constants.
"""

import hashlib
import itertools
import os
import random
import statistics
import time
from collections import Counter

import numpy as np
import pytest

from acdn.characterize import (
    UNKNOWN_SERVICE,
    active_user_series,
    discovery_curve,
    fqdn_ip_multimap,
    lb_cdf,
    second_level_domain,
    service_table,
    subnet_summary,
)
from acdn.cli import run
from acdn.detect import PingMeasurement, classify_batch, default_cities, enumerate_instances
from acdn.events import (
    DetectorConfig,
    events_by_subnet,
    flow_ttfb_violations,
    subnet_events,
    ttfb_floor_violations,
)
from acdn.flows import FlowTable, L7_LABELS, int_to_ip
from acdn.geodesy import GeoPoint, LatencyDisk, disks_disjoint, haversine_km, point_in_disk, rtt_to_radius_km
from acdn.sim import (
    RttModel,
    default_flow_scenario,
    gen_census_world,
    gen_deployment,
    gen_flowlog,
    simulate_campaign,
    spread_vantage_points,
)

pytestmark = pytest.mark.acceptance

N_DEPLOYMENTS = 200
SOUNDNESS_BUDGET_S = 10.0
RECALL_MIN = 0.95
HIGH_CONFIDENCE_KM = 300.0
N_MIS_INSTANCES = 100
MAX_DISKS = 12
MIN_FLOWS, MIN_CLIENTS, MIN_SUBNETS = 1_000_000, 1_000, 10
CHARACTERIZE_BUDGET_S = 60.0
N_STATIONARY = 1_000
CENSUS_TARGETS, CENSUS_VPS, CENSUS_BUDGET_S = 10_000, 100, 180.0
EVENT_SEEDS = (0, 1, 2, 3, 4)
H = 3600.0


# -- 1


def test_c1_detection_soundness(verdict):
    vps = spread_vantage_points(100)
    t0 = time.perf_counter()
    anycast = 0
    for seed in range(N_DEPLOYMENTS):
        dep = gen_deployment(1, seed=seed)
        rng = random.Random(seed)
        # half noise-free, half inflated and jittered
        if seed % 2 == 0:
            model = RttModel(1.0, 0.0, seed)
        else:
            model = RttModel(rng.uniform(1.0, 3.0), rng.uniform(0, 30), seed)
        results, failures = classify_batch(simulate_campaign(vps, [dep], model))
        assert not failures
        anycast += results[0].is_anycast
    elapsed = time.perf_counter() - t0
    ok = anycast == 0 and elapsed < SOUNDNESS_BUDGET_S
    verdict(1, ok, f"{anycast}/{N_DEPLOYMENTS} unicast deployments misclassified, {elapsed:.2f} s "
                   f"(budget {SOUNDNESS_BUDGET_S:.0f} s)")
    assert ok


# -- 2


def test_c2_detection_recall(verdict):
    vps = spread_vantage_points(100)
    detected = overcount = impure = n_inst = 0
    for seed in range(N_DEPLOYMENTS):
        rng = random.Random(seed)
        dep = gen_deployment(rng.randint(2, 20), seed=seed, min_separation_km=3000.0)
        ms = simulate_campaign(vps, [dep], RttModel(rng.uniform(1.0, 1.5)))
        (res,), _ = classify_batch(ms)
        detected += res.is_anycast
        insts = res.instances if res.is_anycast else enumerate_instances(ms)
        overcount += len(insts) > len(dep.sites)
        for inst in insts:
            n_inst += 1
            impure += sum(point_in_disk(s, inst.disk) for s in dep.sites) != 1
    recall = detected / N_DEPLOYMENTS
    ok = recall >= RECALL_MIN and overcount == 0 and impure == 0
    verdict(2, ok, f"recall {recall:.3f} (min {RECALL_MIN}), {overcount} overcounts, "
                   f"{impure}/{n_inst} disks not holding exactly one true site")
    assert ok


# -- 3


def test_c3_geolocation(verdict):
    cities = default_cities(200)
    vps = spread_vantage_points(100)
    located = far = beyond_diameter = flag_errors = 0
    worst = 0.0
    for seed in range(N_DEPLOYMENTS):
        rng = random.Random(seed)
        dep = gen_deployment(rng.randint(2, 20), seed=seed, min_separation_km=3000.0)
        (res,), _ = classify_batch(simulate_campaign(vps, [dep], RttModel(rng.uniform(1.0, 1.5))), cities)
        for inst in res.instances:
            flag_errors += inst.high_confidence != (inst.disk.radius_km <= HIGH_CONFIDENCE_KM)
            if inst.location is None:
                continue
            located += 1
            d = min(haversine_km(inst.location.location, s) for s in dep.sites)
            ratio = d / inst.disk.radius_km if inst.disk.radius_km > 0 else (0.0 if d == 0 else float("inf"))
            worst = max(worst, ratio)
            far += d > inst.disk.radius_km
            beyond_diameter += d > 2 * inst.disk.radius_km
    ok = far == 0 and flag_errors == 0 and located > 0
    verdict(3, ok, f"{located - far}/{located} located instances within their radius of a true site "
                   f"(worst distance/radius {worst:.2f}, {located - beyond_diameter}/{located} within 2x radius); "
                   f"{flag_errors} confidence-flag errors")
    assert ok


# -- 4


def brute_force_mis(disks):
    for size in range(len(disks), 0, -1):
        for combo in itertools.combinations(disks, size):
            if all(disks_disjoint(a, b) for a, b in itertools.combinations(combo, 2)):
                return size
    return 0


def test_c4_greedy_vs_brute_force(verdict):
    rng = random.Random(2024)
    ratios, bad = [], 0
    for k in range(N_MIS_INSTANCES):
        n = rng.randint(1, MAX_DISKS)
        ms = []
        for i in range(n):
            # a continental box keeps overlaps frequent
            loc = GeoPoint(rng.uniform(30, 60), rng.uniform(-10, 40))
            ms.append(PingMeasurement(f"v{i:02d}", loc, "10.0.0.1", rng.uniform(1, 25)))
        disks = [LatencyDisk(m.vp_location, rtt_to_radius_km(m.rtt_ms)) for m in ms]
        got = [inst.disk for inst in enumerate_instances(ms)]
        independent = all(disks_disjoint(a, b) for a, b in itertools.combinations(got, 2))
        maximal = all(any(not disks_disjoint(d, g) for g in got) for d in disks if d not in got)
        bad += not (independent and maximal)
        ratios.append(len(got) / brute_force_mis(disks))
    ok = bad == 0
    verdict(4, ok, f"{N_MIS_INSTANCES - bad}/{N_MIS_INSTANCES} greedy outputs independent and maximal; "
                   f"greedy/optimal mean {statistics.mean(ratios):.3f}, min {min(ratios):.3f}, "
                   f"optimal in {sum(r == 1 for r in ratios)}/{N_MIS_INSTANCES}")
    assert ok


# -- 5 and 7 share one month-long log


@pytest.fixture(scope="module")
def month_log():
    scenario = default_flow_scenario(n_subnets=13, users=2_000, flows=1_050_000)
    return gen_flowlog(scenario, 5)


def _oracle_groups(cols, key_of):
    groups = {}
    for i, (ts, c, ip, b, fq) in enumerate(zip(cols["ts"], cols["client"], cols["ip"], cols["bytes"], cols["fqdn"])):
        g = groups.get(key_of(i))
        if g is None:
            g = groups[key_of(i)] = [set(), 0, 0, set(), set()]
        g[0].add(ip)
        g[1] += b
        g[2] += 1
        g[3].add(c)
        if fq >= 0:
            g[4].add(fq)
    return {k: (len(a), b, n, len(u), len(f)) for k, (a, b, n, u, f) in groups.items()}


def _oracle_cdf(counts):
    total = len(counts)
    cum, out = 0, []
    for x, n in sorted(Counter(counts).items()):
        cum += n
        out.append((x, cum / total))
    return out


def test_c5_characterizer_exactness(verdict, month_log):
    t = month_log.flows
    anycast = month_log.anycast_slash24s
    n_clients = len(np.unique(t.client))
    any_t = t.take(t.in_slash24s(anycast))
    week = (float(t.ts_start[0]) // 86400 * 86400, float(t.ts_start[0]) // 86400 * 86400 + 7 * 86400)

    t0 = time.perf_counter()
    month_rows = subnet_summary(any_t)
    week_rows = subnet_summary(any_t, week)
    services = {r.slash24: service_table(any_t.take(any_t.in_slash24s([r.slash24]))) for r in month_rows}
    series = active_user_series(t, anycast)
    disc_ts, disc = discovery_curve(any_t)
    mm = fqdn_ip_multimap(month_log.dns)
    cdf_all = lb_cdf(mm)
    cdf_scoped = {p: lb_cdf(fqdn_ip_multimap(month_log.dns, [p]), within=p) for p in anycast}
    elapsed = time.perf_counter() - t0

    # brute-force recount over plain Python columns
    cols = {"ts": any_t.ts_start.tolist(), "client": any_t.client.tolist(), "ip": any_t.server_ip.tolist(),
            "bytes": any_t.bytes_down.tolist(), "fqdn": any_t.fqdn.tolist()}
    net = [ip >> 8 for ip in cols["ip"]]
    mismatches = []

    expect = _oracle_groups(cols, lambda i: net[i])
    got = {int(r.slash24.split(".")[0]) << 16 | int(r.slash24.split(".")[1]) << 8 | int(r.slash24.split(".")[2]):
           (r.distinct_ip32, r.volume_bytes, r.flow_count, r.user_count, r.fqdn_count) for r in month_rows}
    mismatches += ["month summary"] if got != expect else []
    order = sorted(expect, key=lambda k: (-expect[k][3], k))
    mismatches += ["month order"] if [int_to_ip(k << 8) + "/24" for k in order] != [r.slash24 for r in month_rows] else []

    in_week = [week[0] <= ts < week[1] for ts in cols["ts"]]
    week_net = [n for n, w in zip(net, in_week) if w]
    wk = _oracle_groups({c: [x for x, w in zip(v, in_week) if w] for c, v in cols.items()}, lambda i: week_net[i])
    got_wk = {r.slash24: (r.distinct_ip32, r.volume_bytes, r.flow_count, r.user_count, r.fqdn_count)
              for r in week_rows}
    mismatches += ["week summary"] if got_wk != {int_to_ip(k << 8) + "/24": v for k, v in wk.items()} else []

    label = [second_level_domain(f) for f in any_t.fqdns]
    for r in month_rows:
        k = next(n for n in expect if int_to_ip(n << 8) + "/24" == r.slash24)
        idx = [i for i in range(len(net)) if net[i] == k]
        sub = {c: [v[i] for i in idx] for c, v in cols.items()}
        exp_svc = _oracle_groups(sub, lambda i: UNKNOWN_SERVICE if sub["fqdn"][i] < 0 else label[sub["fqdn"][i]])
        got_svc = {s.service: (s.servers, s.volume_bytes, s.flows, s.users, s.fqdn_count) for s in services[r.slash24]}
        if got_svc != exp_svc:
            mismatches.append(f"services {r.slash24}")

    all_cols = {"ts": t.ts_start.tolist(), "client": t.client.tolist(), "net": (t.server_ip >> 8).tolist()}
    any_keys = set(net)
    active, touched = {}, {}
    for ts, c, n in zip(all_cols["ts"], all_cols["client"], all_cols["net"]):
        b = int(ts // 3600.0)
        active.setdefault(b, set()).add(c)
        if n in any_keys:
            touched.setdefault(b, set()).add(c)
    lo, hi = min(active), max(active)
    exp_series = [(b * 3600.0, len(touched.get(b, ())) / len(active[b]) if b in active else None)
                  for b in range(lo, hi + 1)]
    mismatches += ["user series"] if series != exp_series else []

    seen, exp_disc = set(), []
    for ip in cols["ip"]:
        seen.add(ip)
        exp_disc.append(len(seen))
    mismatches += ["discovery"] if disc.tolist() != exp_disc or disc_ts.tolist() != cols["ts"] else []

    by_fqdn = {}
    for o in month_log.dns:
        by_fqdn.setdefault(o.fqdn, set()).update(o.answers)
    mismatches += ["lb cdf"] if [(p.x, p.y) for p in cdf_all] != _oracle_cdf([len(v) for v in by_fqdn.values()]) else []
    for p in anycast:
        pre = p.rsplit(".", 1)[0] + "."
        counts = [sum(ip.startswith(pre) for ip in v) for v in by_fqdn.values()]
        if [(q.x, q.y) for q in cdf_scoped[p]] != _oracle_cdf([c for c in counts if c]):
            mismatches.append(f"scoped cdf {p}")

    size_ok = len(t) >= MIN_FLOWS and n_clients >= MIN_CLIENTS and len(month_rows) >= MIN_SUBNETS
    ok = not mismatches and size_ok and elapsed < CHARACTERIZE_BUDGET_S
    verdict(5, ok, f"{len(t)} flows, {n_clients} clients, {len(month_rows)} anycast /24s; "
                   f"mismatches: {mismatches or 'none'}; characterizer {elapsed:.1f} s "
                   f"(budget {CHARACTERIZE_BUDGET_S:.0f} s)")
    assert ok


def test_c7_ttfb_floor(verdict, month_log):
    t = month_log.flows
    below = int(np.sum(t.ttfb_ms < 2.0 * t.min_rtt_ms))
    clean = ttfb_floor_violations(t) + flow_ttfb_violations(t)
    # corrupt three flows in distinct hour bins, pushing each below its own
    # floor and below its bin's floor
    rng = np.random.default_rng(7)
    hours = np.floor(t.ts_start / H).astype(np.int64)
    nets = t.server_ip >> 8
    picks = []
    for i in rng.permutation(len(t))[:3 * 50]:
        if hours[i] not in {hours[j] for j in picks}:
            picks.append(int(i))
        if len(picks) == 3:
            break
    ttfb = t.ttfb_ms.copy()
    for i in picks:
        same_bin = (hours == hours[i]) & (nets == nets[i])
        ttfb[i] = max(0.0, 2.0 * min(t.min_rtt_ms[i], t.min_rtt_ms[same_bin].min()) - 0.5)
    corrupted = FlowTable(**{c: getattr(t, c) for c in t.COLUMNS if c != "ttfb_ms"}, ttfb_ms=ttfb,
                          clients=t.clients, l7_labels=t.l7_labels, fqdns=t.fqdns)
    flow_flags = {w["index"] for w in flow_ttfb_violations(corrupted)}
    bin_flags = {(w["slash24"], w["bin_start"]) for w in ttfb_floor_violations(corrupted)}
    expect_bins = {(int_to_ip(int(nets[i]) << 8) + "/24", float(hours[i] * H)) for i in picks}
    ok = below == 0 and not clean and flow_flags == set(picks) and bin_flags == expect_bins
    verdict(7, ok, f"{len(t) - below}/{len(t)} simulated flows with TTFB >= 2*RTT; corrupted flows flagged "
                   f"{len(flow_flags & set(picks))}/{len(picks)}, bins {len(bin_flags & expect_bins)}/"
                   f"{len(expect_bins)}; {len(flow_flags - set(picks)) + len(bin_flags - expect_bins)} spurious")
    assert ok


# -- 6


def _stationary_table(rng, n_bins=168, per_bin=20):
    base = rng.uniform(5.0, 80.0)
    think = rng.uniform(5.0, 40.0)
    n = n_bins * per_bin
    ts = np.repeat(np.arange(n_bins), per_bin) * H + rng.uniform(0, H, n)
    rtt = base + rng.uniform(-2.5, 2.5, n)  # jitter bounded by abs_min_ms / 2
    ttfb = 2 * rtt + think + rng.uniform(0, 2.5, n)
    mixed = rng.random() < 0.5
    init = np.where(rng.random(n) < 0.5, 128, 64) if mixed else np.full(n, 64)
    ttl = init - 9
    z = np.zeros(n, dtype=np.int64)
    return FlowTable(ts_start=ts, ts_end=ts, client=z, server_ip=z + (0x5DB8DC00 + 7), server_port=z + 443,
                     l7=z, bytes_down=z, min_rtt_ms=rtt, min_ttl=ttl, ttfb_ms=ttfb, fqdn=z - 1,
                     clients=["c"], l7_labels=list(L7_LABELS), fqdns=[])


def test_c6_event_detection(verdict):
    cfg = DetectorConfig()
    onset_errors, misses, false_alarms, conf3 = [], 0, 0, []
    for seed in EVENT_SEEDS:
        log = gen_flowlog(default_flow_scenario(), seed)
        res = events_by_subnet(log.flows.take(log.flows.in_slash24s(log.anycast_slash24s)), cfg)
        merged = [e for r in res.values() for e in r["merged"]]
        onsets = sorted({(e["slash24"], e["ts"]) for e in log.truth})
        used = set()
        for prefix, ts in onsets:
            hit = [e for e in merged if e.slash24 == prefix and 0 <= e.ts - ts <= cfg.persistence_bins * H]
            if not hit:
                misses += 1
                continue
            used.add(id(hit[0]))
            onset_errors.append((hit[0].ts - ts) / H)
            if {k["kind"] for k in log.truth if (k["slash24"], k["ts"]) == (prefix, ts)} == \
                    {"rtt_shift", "ttfb_shift", "ttl_pattern_change"}:
                conf3.append(hit[0].confidence)
        false_alarms += sum(id(e) not in used for e in merged)

    rng = np.random.default_rng(6)
    stationary_alarms = 0
    for _ in range(N_STATIONARY):
        r = subnet_events(_stationary_table(rng), cfg)
        stationary_alarms += sum(len(v) for v in r["raw"].values())

    ok = misses == 0 and false_alarms == 0 and stationary_alarms == 0 and conf3 and min(conf3) == 3
    verdict(6, ok, f"{len(onset_errors)}/{len(onset_errors) + misses} injected events found over seeds "
                   f"{list(EVENT_SEEDS)}, max onset error {max(onset_errors, default=0):.0f} bins "
                   f"(limit {cfg.persistence_bins}); {false_alarms} false alarms in scenarios; "
                   f"{stationary_alarms} alarms on {N_STATIONARY} stationary series; "
                   f"combined-event confidence {sorted(set(conf3))}")
    assert ok


# -- 8


def test_c8_census_throughput(verdict):
    world = gen_census_world(CENSUS_TARGETS, seed=8, n_vps=CENSUS_VPS, members_per_subnet=(1, 1))
    cities = default_cities()
    jobs = os.cpu_count() or 1
    t0 = time.perf_counter()
    results, failures = classify_batch(world.measurements, cities, jobs=jobs)
    elapsed = time.perf_counter() - t0
    ok = len(results) == CENSUS_TARGETS and not failures and elapsed < CENSUS_BUDGET_S
    verdict(8, ok, f"{len(results)} targets x {CENSUS_VPS} VPs classified and geolocated in {elapsed:.1f} s "
                   f"on {jobs} core(s) (budget {CENSUS_BUDGET_S:.0f} s)")
    assert ok


# -- 9


def _pipeline(base, jobs):
    steps = [
        ["simulate", "--seed", "9", "--out", "sim", "--n-subnets", "60", "--anycast-share", "0.3",
         "--flows", "40000", "--users", "400", "--days", "7"],
        ["detect", "--measurements", "sim/measurements.txt", "--out", "det"],
        ["census", "--targets", "sim/targets.txt", "--hosts", "sim/hosts.txt", "--vps", "sim/vps.txt",
         "--measurements", "sim/measurements.txt", "--out", "census"],
        ["ingest", "--flows", "sim/flows.log", "--dns", "sim/dns.log", "--anycast", "census/census.json",
         "--out", "ingest"],
        ["analyze", "--flows", "ingest/annotated.log", "--anycast", "census/census.json", "--dns", "sim/dns.log",
         "--out", "analysis"],
        ["events", "--flows", "ingest/anycast.log", "--out", "events"],
        ["report", "--analysis", "analysis", "--census", "census/census.json", "--events", "events/events.jsonl",
         "--out", "report"],
    ]
    cwd = os.getcwd()
    os.chdir(base)
    try:
        codes = [run(s + ["--jobs", str(jobs)]) for s in steps]
    finally:
        os.chdir(cwd)
    digests = {}
    for root, _, files in os.walk(base):
        for name in files:
            p = os.path.join(root, name)
            with open(p, "rb") as fh:
                digests[os.path.relpath(p, base)] = hashlib.sha256(fh.read()).hexdigest()
    return codes, digests


def test_c9_determinism(verdict, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    codes_a, a = _pipeline(tmp_path / "a", 1)
    codes_b, b = _pipeline(tmp_path / "b", 2)
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = codes_a == codes_b == [0] * 7 and not differing
    verdict(9, ok, f"{len(a)} artifacts from 7 subcommands compared across two runs (jobs 1 vs 2): "
                   f"{len(differing)} differ")
    assert ok
