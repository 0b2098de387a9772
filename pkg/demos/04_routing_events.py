"""
Catching routing changes in passive RTT and TTL
===============================================

When a CDN moves a client population to another site, three things tend to
move together: the minimum RTT, the set of TTLs seen on replies, and the
time to first byte. Each is binned hourly per /24. A change must persist
for a few bins before it is reported, and changes of different kinds that
land close together are merged into one event with higher confidence.
"""
from datetime import datetime, timezone

from acdn.events import DetectorConfig, events_by_subnet, flow_ttfb_violations
from acdn.sim import default_flow_scenario, gen_flowlog


def when(ts):
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%m-%d %H:%M")


log = gen_flowlog(default_flow_scenario(), seed=3)
print("scheduled changes:")
for t in log.truth:
    print(f"  {when(t['ts'])}  {t['slash24']:<18} {t['kind']:<20} {t['before']} -> {t['after']}")

###############################################################################
# Detection on the anycast flows only.

anycast = log.flows.take(log.flows.in_slash24s(log.anycast_slash24s))
cfg = DetectorConfig(persistence_bins=2)
found = events_by_subnet(anycast, cfg)

print("detected:")
for prefix, res in found.items():
    for ev in res["merged"]:
        print(f"  {when(ev.ts)}  {prefix:<18} {'+'.join(ev.kinds):<40} confidence {ev.confidence}")

###############################################################################
# The RTT series behind the first event, around its onset.

rtt = found[log.truth[0]["slash24"]]["series"]["rtt"]
k0 = next(i for i, t in enumerate(rtt.bin_start) if t >= log.truth[0]["ts"]) - 3
for t, v in list(zip(rtt.bin_start, rtt.level))[k0:k0 + 7]:
    print(f"  {when(t)}  {v:6.2f} ms")

###############################################################################
# A reply cannot start before one round trip has passed; flows that claim
# otherwise point at clock or capture problems.

print("flows with TTFB below twice the RTT:", len(flow_ttfb_violations(anycast)))
