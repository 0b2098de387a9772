"""
What a month of campus traffic says about anycast CDNs
======================================================

A flow log carries no hostnames. Replaying the DNS answers each client saw
labels every flow with the FQDN it most likely resolved. Flows towards the
anycast /24s found by the census are then summarized per subnet and per
service.
"""
import numpy as np

from acdn.characterize import (
    active_user_series,
    discovery_curve,
    fqdn_ip_multimap,
    lb_cdf,
    service_table,
    subnet_summary,
)
from acdn.flows import annotate_stream, filter_anycast_flows
from acdn.sim import default_flow_scenario, gen_flowlog

log = gen_flowlog(default_flow_scenario(users=500, flows=60_000, days=7), seed=2)
print(len(log.flows), "flows,", len(log.dns), "DNS answers")

flows = list(annotate_stream(log.flows, log.dns))
named = sum(f.fqdn is not None for f in flows)
print(f"{named / len(flows):.1%} of flows got an FQDN")

anycast = list(filter_anycast_flows(flows, log.anycast_slash24s))
print(len(anycast), "flows towards", len(log.anycast_slash24s), "anycast /24s")

###############################################################################
# Per-subnet table, heaviest first.

for row in subnet_summary(anycast, top_n=5):
    print(f"  {row.slash24:<18} {row.volume_bytes / 1e6:9.1f} MB {row.flow_count:6d} flows "
          f"{row.user_count:4d} users {row.fqdn_count:3d} FQDNs")

for row in service_table(anycast, top_n=5):
    print(f"  {row.service:<16} {row.users:4d} users {row.servers:3d} servers")

###############################################################################
# Share of active users touching anycast each hour, and how quickly new
# servers stop appearing.

series = active_user_series(flows, log.anycast_slash24s)
shares = np.array([s for _, s in series if s is not None])
print(f"hourly anycast user share: median {np.median(shares):.2f}, max {shares.max():.2f}")

ts, seen = discovery_curve(anycast)
print(f"{seen[-1]} servers seen; half of them within {(ts[np.searchsorted(seen, seen[-1] / 2)] - ts[0]) / 3600:.1f} h")

###############################################################################
# How many addresses a name maps to, across all answers and within the
# sibling-heavy first subnet.

mm = fqdn_ip_multimap(log.dns, log.anycast_slash24s)
print("all:", [(p.x, round(p.y, 2)) for p in lb_cdf(mm)][:6])
print("one /24:", [(p.x, round(p.y, 2)) for p in lb_cdf(mm, within=log.anycast_slash24s[0])][:6])
