import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acdn.census import (
    EXCLUDED,
    UNKNOWN,
    CensusReport,
    SubnetVerdict,
    export_geojson,
    extract_hostnames,
    filter_conservative,
    read_hosts_file,
    read_target_list,
    read_vps,
    representatives,
    resolve_targets,
    run_census,
    static_resolver,
    write_vps,
)
from acdn.detect import ANYCAST, UNICAST, AnycastInstance, City, default_cities
from acdn.geodesy import GeoPoint, LatencyDisk
from acdn.sim import RttModel, SyntheticDeployment, gen_census_world, simulate_ping, spread_vantage_points


def sim_prober(deployments, model=RttModel(1.2)):
    by_target = {d.target: d for d in deployments}
    return lambda vp, target: simulate_ping(vp, by_target[target], model).rtt_ms


def test_extract_hostnames_examples():
    hosts, warns = extract_hostnames([(1, "http://example.com/index"), (10, "dup.org/a"),
                                      (500, "https://DUP.org/b"), (7, "not a url")])
    assert hosts == [(1, "example.com"), (10, "dup.org")]
    assert len(warns) == 1 and warns[0]["rank"] == 7


def test_read_target_list_rejects_duplicate_rank():
    assert read_target_list(["1,a.com", "# c", "", "2,b.com"]) == [(1, "a.com"), (2, "b.com")]
    with pytest.raises(ValueError):
        read_target_list(["1,a.com", "1,b.com"])
    with pytest.raises(ValueError):
        read_target_list(["0,a.com"])


def test_resolve_examples():
    ips, groups, warns = resolve_targets(["h"], static_resolver({"h": ["1.2.3.4", "1.2.3.9"]}))
    assert groups == {"1.2.3.0/24": ["1.2.3.4", "1.2.3.9"]} and ips == ["1.2.3.4", "1.2.3.9"]
    _, groups, _ = resolve_targets(["a", "b"], static_resolver({"a": ["1.2.3.4"], "b": ["9.8.7.6"]}))
    assert sorted(groups) == ["1.2.3.0/24", "9.8.7.0/24"]
    ips, groups, warns = resolve_targets(["nx"], static_resolver({}))
    assert ips == [] and groups == {} and warns[0]["reason"] == "no addresses"

    def broken(host):
        raise OSError("SERVFAIL")
    _, _, warns = resolve_targets([(1, "x")], broken)
    assert "SERVFAIL" in warns[0]["reason"]


def test_file_readers():
    vps = spread_vantage_points(3)
    buf = io.StringIO()
    write_vps(vps, buf)
    assert read_vps(io.StringIO(buf.getvalue())) == vps
    assert read_hosts_file(["# x", "A.com 1.2.3.4,1.2.3.5", "b.com"]) == {"a.com": ["1.2.3.4", "1.2.3.5"], "b.com": []}


def test_representatives():
    members = [f"1.2.3.{i}" for i in range(1, 11)]
    assert representatives(members[:3]) == members[:3]
    reps = representatives(list(reversed(members)), 4)
    assert reps == ["1.2.3.1", "1.2.3.3", "1.2.3.6", "1.2.3.8"]


def test_three_site_deployment_detected():
    sites = (GeoPoint(48.9, 2.4), GeoPoint(40.7, -74.0), GeoPoint(35.7, 139.7))
    dep = SyntheticDeployment("1.2.3.4", sites, (64, 64, 64))
    vps = spread_vantage_points(20)
    rep = run_census({"1.2.3.0/24": ["1.2.3.4"]}, sim_prober([dep]), vps, default_cities())
    s = rep.subnets["1.2.3.0/24"]
    assert s.verdict == ANYCAST and s.location_count >= 2
    assert rep.stats["measurements"] == 20


def test_all_unicast_world():
    world = gen_census_world(30, seed=5, n_vps=40, anycast_share=0.0)
    _, groups, _ = resolve_targets(extract_hostnames(world.targets)[0], static_resolver(world.hosts))
    rep = run_census(groups, sim_prober(world.deployments), world.vps)
    assert rep.anycast_slash24s() == []
    assert all(s.verdict == UNICAST for s in rep.subnets.values())


def test_single_vp_warns():
    dep = SyntheticDeployment("1.2.3.4", (GeoPoint(0, 0), GeoPoint(0, 90)), (64, 64))
    rep = run_census({"1.2.3.0/24": ["1.2.3.4"]}, sim_prober([dep]), spread_vantage_points(1))
    assert rep.subnets["1.2.3.0/24"].verdict == UNICAST
    assert any("cannot be detected" in w["reason"] for w in rep.warnings)


def test_timeouts_skip_measurements():
    dep = SyntheticDeployment("1.2.3.4", (GeoPoint(48.9, 2.4), GeoPoint(40.7, -74.0)), (64, 64))
    vps = spread_vantage_points(30)
    inner = sim_prober([dep])

    def flaky(vp, target):
        if vp.vp_id.endswith("7"):
            raise TimeoutError
        return None if vp.vp_id.endswith("3") else inner(vp, target)

    rep = run_census({"1.2.3.0/24": ["1.2.3.4"]}, flaky, vps)
    assert rep.stats["measurements"] == 24
    assert any(w["stage"] == "probe" for w in rep.warnings)
    assert run_census({"1.2.3.0/24": ["1.2.3.4"]}, lambda v, t: None, vps).subnets["1.2.3.0/24"].verdict == UNKNOWN


def test_slash24_anycast_if_any_member_is():
    a = SyntheticDeployment("1.2.3.4", (GeoPoint(48.9, 2.4), GeoPoint(35.7, 139.7)), (64, 64))
    u = SyntheticDeployment("1.2.3.9", (GeoPoint(48.9, 2.4),), (64,))
    rep = run_census({"1.2.3.0/24": ["1.2.3.9", "1.2.3.4"]}, sim_prober([a, u]), spread_vantage_points(30))
    s = rep.subnets["1.2.3.0/24"]
    assert s.verdict == ANYCAST and s.anycast_members == ["1.2.3.4"]
    assert s.members == ["1.2.3.4", "1.2.3.9"]


def _report(counts):
    subnets = {}
    for i, c in enumerate(counts):
        p = f"10.0.{i}.0/24"
        subnets[p] = SubnetVerdict(p, ANYCAST if c >= 2 else UNICAST, c, [], [p[:-4] + "1"], [], [])
    return CensusReport(subnets, {})


def test_filter_examples():
    rep = filter_conservative(_report([2, 7, 1]), 3)
    assert [s.verdict for s in rep.subnets.values()] == [EXCLUDED, ANYCAST, UNICAST]
    same = filter_conservative(_report([2, 7, 1]), 2)
    assert [s.verdict for s in same.subnets.values()] == [ANYCAST, ANYCAST, UNICAST]
    with pytest.raises(ValueError):
        filter_conservative(_report([2]), 1)


@given(st.lists(st.integers(1, 30), max_size=20), st.integers(2, 30), st.integers(0, 10))
def test_filter_monotone(counts, lo, extra):
    rep = _report(counts)
    a = set(filter_conservative(rep, lo).anycast_slash24s())
    b = set(filter_conservative(rep, lo + extra).anycast_slash24s())
    assert b <= a


def test_geojson_examples():
    assert export_geojson(CensusReport({}, {}))["features"] == []
    rome = City("Rome", "IT", GeoPoint(41.9, 12.5), 1)
    insts = [AnycastInstance(LatencyDisk(GeoPoint(41.9, 12.5), 100), "a", rome, True),
             AnycastInstance(LatencyDisk(GeoPoint(0, 0), 100), "b", rome, True),
             AnycastInstance(LatencyDisk(GeoPoint(10, 10), 900), "c", rome, False),
             AnycastInstance(LatencyDisk(GeoPoint(-40, -120), 100), "d", None, True)]
    rep = CensusReport({"1.2.3.0/24": SubnetVerdict("1.2.3.0/24", ANYCAST, 4, [], [], [], [], insts)}, {})
    doc = export_geojson(rep, {"1.2.3.0/24": "ACME"})
    assert len(doc["features"]) == 3
    assert doc["properties"]["unlocated_instances"] == 1
    assert doc["features"][0]["properties"]["owner"] == "ACME"
    assert [f["properties"]["confidence"] for f in doc["features"]] == ["high", "high", "low"]


def test_report_round_trip_and_continents():
    world = gen_census_world(20, seed=2, n_vps=60, anycast_share=0.5)
    _, groups, _ = resolve_targets(extract_hostnames(world.targets)[0], static_resolver(world.hosts))
    rep = run_census(groups, sim_prober(world.deployments), world.vps, default_cities())
    assert CensusReport.from_dict(rep.to_dict()).to_dict() == rep.to_dict()
    for s in rep.subnets.values():
        assert set(s.continents) <= {"EU", "NA", "SA", "AS", "AF", "OC"}


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_census_deterministic_and_sound(seed):
    world = gen_census_world(15, seed=seed, n_vps=50, anycast_share=0.4)
    _, groups, _ = resolve_targets(extract_hostnames(world.targets)[0], static_resolver(world.hosts))
    prober = sim_prober(world.deployments, RttModel(1.5))
    a = run_census(groups, prober, world.vps, max_in_flight=1)
    b = run_census(groups, prober, world.vps, max_in_flight=8, jobs=2)
    assert a.to_dict() == b.to_dict()
    truth = world.truth()
    for p, s in a.subnets.items():
        if s.verdict == ANYCAST:
            assert truth[p]["sites"] >= s.location_count >= 2
