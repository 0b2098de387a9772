"""
A /24 census over a ranked URL list
===================================

The census reads a ranked list of URLs, resolves hostnames, groups the
answers by /24 and probes a few members of each /24 from every vantage
point. A /24 is kept as anycast only if it shows at least three locations.
"""
from collections import Counter

from acdn.census import (
    export_geojson,
    extract_hostnames,
    filter_conservative,
    resolve_targets,
    run_census,
    static_resolver,
)
from acdn.detect import default_cities
from acdn.sim import RttModel, gen_census_world, simulate_ping

world = gen_census_world(60, seed=5, n_vps=60, anycast_share=0.2)
print(len(world.targets), "ranked URLs, first:", world.targets[0])

names, warnings = extract_hostnames(world.targets)
_, groups, more = resolve_targets(names, static_resolver(world.hosts))
print(len(groups), "/24s to probe,", len(warnings + more), "warnings")

###############################################################################
# The prober is any callable (vp, address) -> RTT in ms, or None on timeout.
# Here it asks the simulator directly.

by_target = {d.target: d for d in world.deployments}
model = RttModel(inflation=1.2)


def prober(vp, address):
    return simulate_ping(vp, by_target[address], model).rtt_ms


raw = run_census(groups, prober, world.vps, default_cities())
report = filter_conservative(raw, min_locations=3)
print("stats:", report.stats)

truth = world.truth()
for p in report.anycast_slash24s():
    s = report.subnets[p]
    print(f"  {p:<18} {s.location_count:2d} found / {truth[p]['sites']:2d} true  {','.join(s.continents)}")

###############################################################################
# Where the instances land, by continent, and a GeoJSON export for mapping.

print(Counter(c for p in report.anycast_slash24s() for c in report.subnets[p].continents))
geo = export_geojson(report)
print(len(geo["features"]), "GeoJSON features")
