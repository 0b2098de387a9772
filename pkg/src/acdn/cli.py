"""Command-line entry point: ``acdn <subcommand>``.

Subcommands compose through files on disk, so each one can be rerun on its
own: simulate -> detect / census -> ingest -> analyze / events -> report.
Settings come from built-in defaults, then ``--config FILE`` (JSON), then
explicit flags. Every run writes its artifacts atomically plus a
``run_manifest.json`` with the resolved config and sha256 digests.

Exit status: 0 ok, 1 usage or config error, 2 bad input data, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .census import (
    CensusReport,
    export_geojson,
    extract_hostnames,
    filter_conservative,
    read_hosts_file,
    read_target_list,
    read_vps,
    resolve_targets,
    run_census,
    static_resolver,
    write_vps,
)
from .characterize import (
    active_user_series,
    discovery_curve,
    fqdn_ip_multimap,
    lb_cdf,
    service_table,
    subnet_summary,
)
from .detect import classify_batch, default_cities, load_cities, read_measurements, write_measurements
from .events import DetectorConfig, flow_ttfb_violations, subnet_events, ttfb_floor_violations, write_series
from .flows import (
    DnsCache,
    FlowTable,
    annotate_stream,
    format_number,
    int_to_ip,
    parse_dns_log,
    parse_flow_log,
    slash24_key,
    write_dns_log,
    write_flow_log,
)
from .geodesy import FIBER_SPEED_KM_PER_MS, SPEED_OF_LIGHT_KM_PER_MS
from .sim import default_flow_scenario, gen_census_world, gen_flowlog

MANIFEST = "run_manifest.json"
_UMASK = os.umask(0)
os.umask(_UMASK)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- defaults and validation

DEFAULTS = {
    "common": {"jobs": None, "speed_km_per_ms": FIBER_SPEED_KM_PER_MS},
    "simulate": {"seed": None, "scenario": None, "n_subnets": 1000, "n_vps": 100, "anycast_share": 0.1,
                 "max_sites": 20, "min_separation_km": 3000.0, "inflation_max": 1.5, "jitter_ms": 0.0,
                 "flows": None, "users": None, "days": None},
    "detect": {"measurements": None, "cities": None},
    "census": {"targets": None, "hosts": None, "vps": None, "measurements": None, "cities": None,
               "owners": None, "min_locations": 3, "representatives": 4, "max_in_flight": 8},
    "ingest": {"flows": None, "dns": None, "anycast": None, "dns_ttl_s": 86_400.0,
               "cache_capacity": 1_000_000, "reorder_window_s": 60.0},
    "analyze": {"flows": None, "anycast": None, "dns": None, "bin_s": 3600.0, "others_cutoff": 0,
                "top_n": 13},
    "events": {"flows": None, "anycast": None, "bin_s": 3600.0, "min_samples": 5, "min_support": 3,
               "abs_min_ms": 5.0, "rel_min": 0.5, "persistence_bins": 2, "window_bins": 2, "absence_alpha": 0.01},
    "report": {"analysis": None, "census": None, "events": None},
}

REQUIRED = {
    "simulate": ("seed",),
    "detect": ("measurements",),
    "census": ("targets", "hosts", "vps", "measurements"),
    "ingest": ("flows",),
    "analyze": ("flows",),
    "events": ("flows",),
    "report": ("analysis",),
}

# key -> (predicate, description)
RANGES = {
    "seed": (lambda v: isinstance(v, int) and v >= 0, "a nonnegative integer"),
    "jobs": (lambda v: v is None or v >= 1, ">= 1"),
    "speed_km_per_ms": (lambda v: 0 < v <= SPEED_OF_LIGHT_KM_PER_MS, "in (0, c]"),
    "n_subnets": (lambda v: v >= 1, ">= 1"),
    "n_vps": (lambda v: v >= 2, ">= 2"),
    "anycast_share": (lambda v: 0 <= v <= 1, "in [0, 1]"),
    "max_sites": (lambda v: v >= 2, ">= 2"),
    "min_separation_km": (lambda v: v >= 0, ">= 0"),
    "inflation_max": (lambda v: v >= 1, ">= 1"),
    "jitter_ms": (lambda v: v >= 0, ">= 0"),
    "min_locations": (lambda v: v >= 2, ">= 2"),
    "representatives": (lambda v: v >= 1, ">= 1"),
    "max_in_flight": (lambda v: v >= 1, ">= 1"),
    "dns_ttl_s": (lambda v: v > 0, "> 0"),
    "cache_capacity": (lambda v: v >= 1, ">= 1"),
    "reorder_window_s": (lambda v: v >= 0, ">= 0"),
    "bin_s": (lambda v: v > 0, "> 0"),
    "others_cutoff": (lambda v: v >= 0, ">= 0"),
    "top_n": (lambda v: v is None or v >= 1, ">= 1"),
    "min_samples": (lambda v: v >= 1, ">= 1"),
    "min_support": (lambda v: v >= 1, ">= 1"),
    "abs_min_ms": (lambda v: v >= 0, ">= 0"),
    "rel_min": (lambda v: v >= 0, ">= 0"),
    "persistence_bins": (lambda v: v >= 1, ">= 1"),
    "window_bins": (lambda v: v >= 0, ">= 0"),
    "absence_alpha": (lambda v: 0 < v < 1, "in (0, 1)"),
}


def resolve_config(command: str, file_cfg: dict, flags: dict) -> dict:
    """Defaults < config file < flags. Unknown config keys are an error."""
    allowed = {**DEFAULTS["common"], **DEFAULTS[command]}
    unknown = sorted(set(file_cfg) - set(allowed))
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    cfg = {**allowed, **file_cfg, **{k: v for k, v in flags.items() if k in allowed}}
    for key in REQUIRED[command]:
        if cfg.get(key) is None:
            raise UsageError(f"{command} needs --{key.replace('_', '-')}")
    for key, (ok, desc) in RANGES.items():
        if key in cfg and cfg[key] is not None:
            try:
                good = ok(cfg[key])
            except TypeError:
                good = False
            if not good:
                raise UsageError(f"{key} must be {desc}, got {cfg[key]!r}")
    return cfg


# -- file helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Atomic writer that remembers the digest of everything it writes."""

    def __init__(self, root: Path):
        self.root = root
        self.digests: dict[str, str] = {}
        root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, fill) -> Path:
        """``fill(fh)`` writes text into a temp file that then replaces ``name``."""
        dest = self.root / name
        dest.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=f".{dest.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fill(fh)
            os.chmod(tmp, 0o666 & ~_UMASK)
            os.replace(tmp, dest)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.digests[name] = _sha256(dest)
        return dest

    def json(self, name: str, doc) -> Path:
        return self.write(name, lambda fh: fh.write(json.dumps(doc, indent=1, sort_keys=True) + "\n"))

    def jsonl(self, name: str, rows) -> Path:
        return self.write(name, lambda fh: fh.writelines(json.dumps(r, sort_keys=True) + "\n" for r in rows))

    def manifest(self, command: str, cfg: dict, inputs: dict[str, str]) -> None:
        # jobs does not change any artifact, so it stays out of the manifest
        doc = {
            "tool": "acdn",
            "version": __version__,
            "subcommand": command,
            "config": {k: v for k, v in sorted(cfg.items()) if k != "jobs"},
            "inputs": inputs,
            "outputs": dict(sorted(self.digests.items())),
        }
        self.json(MANIFEST, doc)


def _open(path: str):
    try:
        return open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


def _load_json(path: str):
    with _open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _inputs(cfg: dict, keys) -> dict[str, str]:
    out = {}
    for k in keys:
        p = cfg.get(k)
        if p:
            if not os.path.isfile(p):
                raise DataError(f"{k}: no such file {p}")
            out[k] = _sha256(Path(p))
    return out


def read_anycast(path: str) -> list[str]:
    """Anycast /24s from a census report, a simulate truth file, or a plain
    list with one prefix per line."""
    with _open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict) and "subnets" in doc:
        return CensusReport.from_dict(doc).anycast_slash24s()
    if isinstance(doc, dict) and "flows" in doc:
        return list(doc["flows"]["anycast_slash24s"])
    prefixes = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    prefixes = [p for p in prefixes if p]
    for p in prefixes:
        try:
            slash24_key(p)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    return prefixes


def _read_flows(path: str, warnings: list[dict] | None = None, reorder_window_s: float = 60.0) -> FlowTable:
    errors: list = []
    with _open(path) as fh:
        table = FlowTable.from_records(parse_flow_log(fh, errors, reorder_window_s))
    if warnings is not None:
        warnings.extend({"stage": "parse", "file": path, **e.to_dict()} for e in errors)
    elif errors:
        raise DataError(f"{path}: {len(errors)} malformed line(s), first at line {errors[0].line_no}")
    return table


def _jobs(cfg: dict) -> int:
    return cfg["jobs"] or os.cpu_count() or 1


# -- subcommands


def cmd_simulate(cfg: dict, out: Outputs) -> None:
    seed = cfg["seed"]
    scenario = default_flow_scenario()
    if cfg["scenario"]:
        scenario = _load_json(cfg["scenario"])
        if not isinstance(scenario, dict):
            raise DataError("scenario must be a JSON object")
    for key, sc_key in (("flows", "flows"), ("users", "users")):
        if cfg[key] is not None:
            scenario[sc_key] = int(cfg[key])
    if cfg["days"] is not None:
        scenario["duration_s"] = float(cfg["days"]) * 86_400.0
    try:
        log = gen_flowlog(scenario, seed)
    except (KeyError, TypeError) as exc:
        raise DataError(f"bad scenario: {exc!r}") from exc

    background = sorted({int_to_ip(int(k) << 8) + "/24" for k in np.unique(log.flows.slash24).tolist()}
                        - set(log.anycast_slash24s), key=slash24_key)
    world = gen_census_world(
        cfg["n_subnets"], seed, n_vps=cfg["n_vps"], anycast_share=cfg["anycast_share"], max_sites=cfg["max_sites"],
        min_separation_km=cfg["min_separation_km"], inflation=(1.0, cfg["inflation_max"]),
        jitter_ms=cfg["jitter_ms"], extra_anycast=log.anycast_slash24s, extra_unicast=background)

    out.write("vps.txt", lambda fh: write_vps(world.vps, fh))
    out.write("targets.txt", lambda fh: fh.writelines(f"{r},{u}\n" for r, u in world.targets))
    out.write("hosts.txt", lambda fh: fh.writelines(f"{h} {','.join(ips)}\n" for h, ips in world.hosts.items()))
    out.write("measurements.txt", lambda fh: write_measurements(world.measurements, fh))
    # the monitor sees no names: FQDNs come back only through the DNS log
    out.write("flows.log", lambda fh: write_flow_log((replace(f, fqdn=None) for f in log.flows), fh))
    out.write("dns.log", lambda fh: write_dns_log(log.dns, fh))
    out.json("scenario.json", scenario)
    out.json("truth.json", {
        "census": world.truth(),
        "flows": {"anycast_slash24s": log.anycast_slash24s, "events": log.truth, "count": len(log.flows)},
    })
    out.manifest("simulate", cfg, _inputs(cfg, ["scenario"]))


def _cities(cfg: dict):
    return load_cities(cfg["cities"]) if cfg["cities"] else default_cities()


def cmd_detect(cfg: dict, out: Outputs) -> None:
    errors: list = []
    with _open(cfg["measurements"]) as fh:
        ms = list(read_measurements(fh, errors))
    cities = _cities(cfg)
    results, failures = classify_batch(ms, cities, cfg["speed_km_per_ms"], jobs=_jobs(cfg))
    n_targets = len({m.target for m in ms})
    if len(results) + len(failures) != n_targets:
        raise InvariantError("classification lost or duplicated targets")
    out.jsonl("detections.jsonl", (r.to_dict() for r in results))
    warnings = [{"stage": "parse", "line_no": n, "reason": r} for n, r in errors]
    warnings += [{"stage": "classify", **f.to_dict()} for f in failures]
    out.jsonl("warnings.jsonl", warnings)
    out.manifest("detect", cfg, _inputs(cfg, ["measurements", "cities"]))


def _replay_prober(ms):
    table = {(m.vp_id, m.target): m.rtt_ms for m in ms}
    return lambda vp, target: table.get((vp.vp_id, target))


def cmd_census(cfg: dict, out: Outputs) -> None:
    with _open(cfg["targets"]) as fh:
        targets = read_target_list(fh)
    with _open(cfg["hosts"]) as fh:
        hosts = read_hosts_file(fh)
    with _open(cfg["vps"]) as fh:
        vps = read_vps(fh)
    errors: list = []
    with _open(cfg["measurements"]) as fh:
        ms = list(read_measurements(fh, errors))
    owners = _load_json(cfg["owners"]) if cfg["owners"] else {}
    names, warnings = extract_hostnames(targets)
    _, groups, w2 = resolve_targets(names, static_resolver(hosts))
    warnings += w2 + [{"stage": "parse", "line_no": n, "reason": r} for n, r in errors]
    raw = run_census(groups, _replay_prober(ms), vps, _cities(cfg),
                     representatives_per_subnet=cfg["representatives"], max_in_flight=cfg["max_in_flight"],
                     speed_km_per_ms=cfg["speed_km_per_ms"], jobs=_jobs(cfg))
    report = filter_conservative(raw, cfg["min_locations"])
    if set(report.anycast_slash24s()) - set(raw.anycast_slash24s()):
        raise InvariantError("conservative filter promoted a subnet")
    out.json("census.json", report.to_dict())
    out.json("census.geojson", export_geojson(report, owners))
    out.jsonl("warnings.jsonl", warnings + raw.warnings)
    out.manifest("census", cfg, _inputs(cfg, ["targets", "hosts", "vps", "measurements", "cities", "owners"]))


def cmd_ingest(cfg: dict, out: Outputs) -> None:
    warnings: list[dict] = []
    errors: list = []
    with _open(cfg["flows"]) as fh:
        flows = list(parse_flow_log(fh, errors, cfg["reorder_window_s"]))
    warnings += [{"stage": "parse", "file": cfg["flows"], **e.to_dict()} for e in errors]
    obs = []
    if cfg["dns"]:
        errors = []
        with _open(cfg["dns"]) as fh:
            obs = list(parse_dns_log(fh, errors))
        warnings += [{"stage": "parse", "file": cfg["dns"], **e.to_dict()} for e in errors]
    # the reorder window lets lines arrive slightly late; replay needs time order
    flows.sort(key=lambda f: f.ts_start)
    obs.sort(key=lambda o: o.ts)
    cache = DnsCache(cfg["cache_capacity"], cfg["dns_ttl_s"])
    annotated = list(annotate_stream(flows, obs, cache))
    if len(annotated) != len(flows):
        raise InvariantError("annotation changed the number of flows")
    out.write("annotated.log", lambda fh: write_flow_log(annotated, fh))
    if cfg["anycast"]:
        keys = {slash24_key(p) for p in read_anycast(cfg["anycast"])}
        out.write("anycast.log", lambda fh: write_flow_log(
            (f for f in annotated if slash24_key(f.slash24) in keys), fh))
    named = sum(f.fqdn is not None for f in annotated)
    out.json("ingest_stats.json", {"flows": len(annotated), "with_fqdn": named,
                                   "dns_observations": len(obs), "rejected_lines": len(warnings)})
    out.jsonl("warnings.jsonl", warnings)
    out.manifest("ingest", cfg, _inputs(cfg, ["flows", "dns", "anycast"]))


def _fmt(x) -> str:
    return "-" if x is None else repr(x)


def cmd_analyze(cfg: dict, out: Outputs) -> None:
    web = _read_flows(cfg["flows"])
    if cfg["anycast"]:
        anycast = read_anycast(cfg["anycast"])
        flows = web.take(web.in_slash24s(anycast)) if anycast else web.take(np.zeros(len(web), dtype=bool))
    else:
        anycast = sorted({int_to_ip(int(k) << 8) + "/24" for k in np.unique(web.slash24).tolist()},
                         key=slash24_key)
        flows = web
    rows = subnet_summary(flows, others_cutoff=cfg["others_cutoff"], top_n=cfg["top_n"])
    if sum(r.flow_count for r in rows) != len(flows):
        raise InvariantError("subnet table does not account for every flow")
    services = service_table(flows)
    cols = ("slash24", "ip32", "volume_bytes", "flows", "users", "fqdn")
    out.write("subnets.tsv", lambda fh: fh.writelines(
        ["\t".join(cols) + "\n"] + ["\t".join(str(r.to_dict()[c]) for c in cols) + "\n" for r in rows]))
    out.json("subnets.json", [r.to_dict() for r in rows])
    scols = ("service", "servers", "volume_bytes", "flows", "users", "fqdn")
    out.write("services.tsv", lambda fh: fh.writelines(
        ["\t".join(scols) + "\n"] + ["\t".join(str(s.to_dict()[c]) for c in scols) + "\n" for s in services]))
    out.json("services.json", [s.to_dict() for s in services])

    series = active_user_series(web, anycast, cfg["bin_s"]) if anycast else []
    out.write("user_series.txt", lambda fh: fh.writelines(f"{format_number(b)} {_fmt(v)}\n" for b, v in series))
    ts, count = discovery_curve(flows)
    steps = np.flatnonzero(np.diff(count, prepend=0)) if len(count) else np.zeros(0, dtype=int)
    out.write("discovery.txt", lambda fh: fh.writelines(
        f"{ts[i]!r} {int(count[i])}\n" for i in steps.tolist()))
    if cfg["dns"]:
        with _open(cfg["dns"]) as fh:
            mm = fqdn_ip_multimap(parse_dns_log(fh, []), anycast)
        cdf = lb_cdf(mm) if mm else []
        out.write("lb_cdf.txt", lambda fh: fh.writelines(f"{p.x} {p.y!r}\n" for p in cdf))
    out.manifest("analyze", cfg, _inputs(cfg, ["flows", "anycast", "dns"]))


def _events_worker(args):
    table, dcfg = args
    return subnet_events(table, dcfg)


def cmd_events(cfg: dict, out: Outputs) -> None:
    t = _read_flows(cfg["flows"])
    if cfg["anycast"]:
        t = t.take(t.in_slash24s(read_anycast(cfg["anycast"])))
    dcfg = DetectorConfig(cfg["bin_s"], cfg["min_samples"], cfg["min_support"], cfg["abs_min_ms"],
                          cfg["rel_min"], cfg["persistence_bins"], cfg["window_bins"], cfg["absence_alpha"])
    keys = np.unique(t.slash24).tolist()
    parts = [(t.take(t.slash24 == k), dcfg) for k in keys]
    jobs = _jobs(cfg)
    if jobs > 1 and len(parts) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(parts))) as pool:
            results = list(pool.map(_events_worker, parts))
    else:
        results = [_events_worker(p) for p in parts]
    merged = []
    for k, res in zip(keys, results):
        prefix = int_to_ip(k << 8) + "/24"
        merged += res["merged"]
        stem = prefix.replace("/24", "")
        for metric in ("rtt", "ttfb"):
            s = res["series"][metric]
            out.write(f"series/{stem}_{metric}.txt", lambda fh, s=s: write_series(s, fh))
    out.jsonl("events.jsonl", (e.to_dict() for e in merged))
    out.jsonl("data_quality.jsonl", ttfb_floor_violations(t, cfg["bin_s"]) + flow_ttfb_violations(t))
    out.manifest("events", cfg, _inputs(cfg, ["flows", "anycast"]))


def _unit(n_bytes: int) -> str:
    if n_bytes >= 1e9:
        return f"{n_bytes / 1e9:.2f} GB"
    return f"{n_bytes / 1e6:.2f} MB"


def cmd_report(cfg: dict, out: Outputs) -> None:
    adir = Path(cfg["analysis"])
    subnets = _load_json(str(adir / "subnets.json"))
    services = _load_json(str(adir / "services.json"))
    locations, continents = {}, {}
    if cfg["census"]:
        rep = CensusReport.from_dict(_load_json(cfg["census"]))
        locations = {p: s.location_count for p, s in rep.subnets.items()}
        continents = {p: ",".join(s.continents) for p, s in rep.subnets.items()}
    changes: dict[str, set[str]] = {}
    if cfg["events"]:
        with _open(cfg["events"]) as fh:
            for line in fh:
                if line.strip():
                    ev = json.loads(line)
                    changes.setdefault(ev["slash24"], set()).update(ev["kinds"])
    marks = (("rtt_shift", "RTT"), ("ttl_pattern_change", "TTL"), ("ttfb_shift", "TTFB"))

    def fill(fh):
        fh.write("# Anycast subnets\n\n")
        fh.write("| /24 | /32 | volume | flows | users | FQDN | locations | continents | changes |\n")
        fh.write("|---|---:|---:|---:|---:|---:|---:|---|---|\n")
        for r in subnets:
            p = r["slash24"]
            ch = " ".join(lab for k, lab in marks if k in changes.get(p, ())) or "-"
            fh.write(f"| {p} | {r['ip32']} | {_unit(r['volume_bytes'])} | {r['flows']} | {r['users']} | "
                     f"{r['fqdn']} | {locations.get(p, '-')} | {continents.get(p, '-') or '-'} | {ch} |\n")
        fh.write("\n# Services\n\n")
        fh.write("| service | servers | volume | flows | users | FQDN |\n|---|---:|---:|---:|---:|---:|\n")
        for s in services:
            fh.write(f"| {s['service']} | {s['servers']} | {_unit(s['volume_bytes'])} | {s['flows']} | "
                     f"{s['users']} | {s['fqdn']} |\n")

    out.write("report.md", fill)
    out.manifest("report", cfg, _inputs(cfg, ["census", "events"]))


COMMANDS = {
    "simulate": cmd_simulate, "detect": cmd_detect, "census": cmd_census, "ingest": cmd_ingest,
    "analyze": cmd_analyze, "events": cmd_events, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="acdn", description="Anycast CDN detection and traffic analysis toolkit.")
    p.add_argument("--version", action="version", version=f"acdn {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="JSON file with settings (flags win)")
        sp.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
        return sp

    sp = cmd("simulate", "generate a synthetic census campaign and flow log")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scenario", help="flow-log scenario JSON")
    sp.add_argument("--n-subnets", type=int, help="generated census /24s")
    sp.add_argument("--n-vps", type=int, help="vantage points")
    sp.add_argument("--anycast-share", type=float)
    sp.add_argument("--max-sites", type=int)
    sp.add_argument("--min-separation-km", type=float)
    sp.add_argument("--inflation-max", type=float)
    sp.add_argument("--jitter-ms", type=float)
    sp.add_argument("--flows", type=int)
    sp.add_argument("--users", type=int)
    sp.add_argument("--days", type=float)

    sp = cmd("detect", "classify targets of a measurement file")
    sp.add_argument("--measurements")
    sp.add_argument("--cities")
    sp.add_argument("--speed-km-per-ms", type=float)

    sp = cmd("census", "run the /24 census over a target list")
    for flag in ("targets", "hosts", "vps", "measurements", "cities", "owners"):
        sp.add_argument(f"--{flag}")
    sp.add_argument("--min-locations", type=int)
    sp.add_argument("--representatives", type=int)
    sp.add_argument("--max-in-flight", type=int)
    sp.add_argument("--speed-km-per-ms", type=float)

    sp = cmd("ingest", "annotate flows with FQDNs from DNS and keep anycast ones")
    for flag in ("flows", "dns", "anycast"):
        sp.add_argument(f"--{flag}")
    sp.add_argument("--dns-ttl-s", type=float)
    sp.add_argument("--cache-capacity", type=int)
    sp.add_argument("--reorder-window-s", type=float)

    sp = cmd("analyze", "subnet and service tables, user series, discovery and LB curves")
    for flag in ("flows", "anycast", "dns"):
        sp.add_argument(f"--{flag}")
    sp.add_argument("--bin-s", type=float)
    sp.add_argument("--others-cutoff", type=int)
    sp.add_argument("--top-n", type=int)

    sp = cmd("events", "detect routing changes per /24")
    for flag in ("flows", "anycast"):
        sp.add_argument(f"--{flag}")
    for flag, typ in (("bin-s", float), ("min-samples", int), ("min-support", int), ("abs-min-ms", float),
                      ("rel-min", float), ("persistence-bins", int), ("window-bins", int),
                      ("absence-alpha", float)):
        sp.add_argument(f"--{flag}", type=typ)

    sp = cmd("report", "human-readable summary tables")
    for flag in ("analysis", "census", "events"):
        sp.add_argument(f"--{flag}")
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else 1
    command = args.pop("command")
    out_dir = Path(args.pop("out"))
    try:
        file_cfg = {}
        if args.get("config"):
            try:
                file_cfg = _load_json(args.pop("config"))
            except DataError as exc:
                raise UsageError(f"config: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise UsageError("config file must hold a JSON object")
        args.pop("config", None)
        cfg = resolve_config(command, file_cfg, args)
        COMMANDS[command](cfg, Outputs(out_dir))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"acdn: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"acdn: data error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, AssertionError) as exc:
        print(f"acdn: internal invariant violated: {exc}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
