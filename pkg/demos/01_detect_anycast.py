"""
Spotting an anycast address from a handful of pings
===================================================

Each ping bounds where the replying server can be: light in fiber cannot
cover more than about 100 km per ms of RTT. Two such disks that do not
overlap cannot hold the same server, so the address must be served from
two places.
"""
from acdn.detect import classify_target, default_cities
from acdn.geodesy import GeoPoint, LatencyDisk, disks_disjoint, haversine_km
from acdn.sim import RttModel, gen_deployment, simulate_campaign, spread_vantage_points

rome, nyc = GeoPoint(41.9, 12.5), GeoPoint(40.7, -74.0)
print(f"Rome to New York: {haversine_km(rome, nyc):.0f} km")

# 10 ms from each city gives two ~1000 km disks, far apart
a, b = LatencyDisk.from_rtt(rome, 10), LatencyDisk.from_rtt(nyc, 10)
print("disjoint:", disks_disjoint(a, b))

###############################################################################
# A synthetic deployment with six sites, pinged by 100 vantage points spread
# over the globe. Paths are 30% longer than the great circle, plus some jitter.

dep = gen_deployment(6, seed=11, min_separation_km=3000)
vps = spread_vantage_points(100)
ms = simulate_campaign(vps, [dep], RttModel(inflation=1.3, jitter_ms=2.0, seed=1))

result = classify_target(ms, default_cities())
print(result.verdict, "witnesses:", result.witness_pair)
print(f"{result.num_locations} locations found, {len(dep.sites)} deployed")

for inst in result.instances:
    city = inst.location.name if inst.location else "(no city)"
    flag = "high" if inst.high_confidence else "low"
    print(f"  {inst.witness_vp}: r={inst.disk.radius_km:7.1f} km  {city:<20} {flag} confidence")

###############################################################################
# The count is a lower bound: sites that share a disk collapse into one, and
# sites no vantage point is close to are never seen.

unicast = gen_deployment(1, seed=12)
r = classify_target(simulate_campaign(vps, [unicast], RttModel(1.5)))
print("single site:", r.verdict)
