"""Command-line front end.

Every command is a thin client over the HTTP API (in-process by default,
remote with ``--server``), emits CSV tables plus a human summary, and writes
a manifest describing how to reproduce the outputs.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import itertools
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import __version__
from .client import ApiError, ServiceClient
from .errors import ScenarioError
from .scenario import load_scenario, resolve_scenario_path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4

CODECS = {
    # codec bit rate (b/s); MAC packet adds the 40-byte RTP/UDP/IP header
    "g711": 64000.0,
    "g729": 8000.0,
}
VIDEO_PACKET = 861           # 821-byte mean codec packet + 40-byte header
VIDEO_INTERVAL_MS = 8 * 821 / 174000 * 1000.0


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        self.code = code
        super().__init__(message)


# -- scenario overrides --------------------------------------------------------

def _parse_scalar(text: str):
    return yaml.safe_load(text)


def _apply_override(doc: dict, path: str, value) -> None:
    segments = path.split(".")
    node = doc
    for i, segment in enumerate(segments):
        last = i == len(segments) - 1
        if isinstance(node, list):
            if segment.isdigit():
                idx = int(segment)
            else:
                idx = next((k for k, entry in enumerate(node)
                            if isinstance(entry, dict)
                            and str(entry.get("id")) == segment), None)
                if idx is None:
                    raise CliError(f"override path {path!r}: no entry {segment!r}")
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[segment] = value
            else:
                node = node.setdefault(segment, {})
        else:
            raise CliError(f"override path {path!r}: cannot descend into scalar")


def _parse_assignments(spec: str) -> list[tuple[str, list]]:
    out = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise CliError(f"bad assignment {part!r} (need path=v1,v2,...)")
        path, values = part.split("=", 1)
        out.append((path.strip(), [_parse_scalar(v) for v in values.split(",")]))
    return out


def sweep_points(args) -> list[dict]:
    """Expand --set/--zip/--grid into a list of override dicts."""
    fixed = {}
    for assignment in args.set or []:
        if "=" not in assignment:
            raise CliError(f"bad --set {assignment!r}")
        path, value = assignment.split("=", 1)
        fixed[path.strip()] = _parse_scalar(value)
    points = [dict(fixed)]
    if args.zip:
        series = _parse_assignments(args.zip)
        lengths = {len(vals) for _, vals in series}
        if len(lengths) != 1:
            raise CliError("--zip series must share one length")
        points = []
        for i in range(lengths.pop()):
            point = dict(fixed)
            point.update({path: vals[i] for path, vals in series})
            points.append(point)
    if args.grid:
        series = _parse_assignments(args.grid)
        expanded = []
        for combo in itertools.product(*(vals for _, vals in series)):
            for base in points:
                point = dict(base)
                point.update({path: v for (path, _), v in zip(series, combo)})
                expanded.append(point)
        points = expanded
    return points


def load_doc(args) -> tuple[dict, Path]:
    path = resolve_scenario_path(args.scenario)
    doc = yaml.safe_load(path.read_text()) or {}
    if getattr(args, "access", None):
        doc["access"] = {"rts": "rts_cts"}.get(args.access, args.access)
    if getattr(args, "tolerance", None):
        doc.setdefault("solver", {})["tolerance"] = args.tolerance
    if getattr(args, "rho_th", None):
        doc.setdefault("admission", {})["rho_threshold"] = args.rho_th
    return doc, path


def apply_point(doc: dict, point: dict) -> dict:
    out = copy.deepcopy(doc)
    for path, value in point.items():
        _apply_override(out, path, value)
    return out


def validated(doc: dict, base_dir: Path) -> dict:
    # surface schema errors locally with field paths before any HTTP call
    load_scenario(doc, base_dir=base_dir)
    return doc


# -- output helpers -------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_manifest(out_dir: Path, command: str, args_ns, scenario_path: Path,
                   outputs: list[Path], seeds=None) -> Path:
    manifest = {
        "tool": "edcacap",
        "version": __version__,
        "command": command,
        "argv": list(getattr(args_ns, "_argv", sys.argv[1:])),
        "scenario": str(scenario_path),
        "scenario_sha256": hashlib.sha256(scenario_path.read_bytes()).hexdigest(),
        "seeds": list(seeds) if seeds else [],
        "outputs": [str(p) for p in outputs],
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise CliError(f"bad --seeds {text!r}") from exc


def point_columns(points: list[dict]) -> list[str]:
    cols: list[str] = []
    for point in points:
        for key in point:
            if key not in cols:
                cols.append(key)
    return cols


# -- commands -------------------------------------------------------------------

def cmd_solve(args, client: ServiceClient) -> int:
    doc, path = load_doc(args)
    points = sweep_points(args)
    cols = point_columns(points)
    rows = []
    for point in points:
        body = client.solve(validated(apply_point(doc, point), path.parent))
        for info, row in zip(body["classes"], body["rows"]):
            rows.append([point.get(c, "") for c in cols] + [
                info["index"], info["ac"], info["stations"],
                row["attempt_prob"], row["collision_prob"], row["drop_prob"],
                row["backoff_slots"], row["throughput"], row["cycle_time_us"],
                row["service_time_us"]])
    out_dir = Path(args.out)
    table = out_dir / "saturation.csv"
    write_csv(table, cols + ["class", "ac", "stations", "attempt_prob",
                             "collision_prob", "drop_prob", "backoff_slots",
                             "throughput", "cycle_time_us", "service_time_us"],
              rows)
    write_manifest(out_dir, "solve", args, path, [table])
    print(f"solve: {len(points)} point(s), {len(rows)} class rows -> {table}")
    for row in rows[:8]:
        print("  ", dict(zip(cols + ["class", "ac"], row[:len(cols) + 2])),
              f"S={row[-3]:.4f} srv={row[-1]:.1f}us")
    return EXIT_OK


def _capacity_jobs(args) -> list[tuple[str, dict]]:
    """(label, template) pairs for the requested flow template(s)."""
    direction = args.direction
    if args.codec:
        if args.codec == "mpeg4":
            return [("mpeg4", {"direction": direction, "ac": args.flow_ac or 2,
                               "mean_packet": VIDEO_PACKET,
                               "packet_interval": VIDEO_INTERVAL_MS})]
        rate = CODECS[args.codec]
        periods = ([float(p) for p in args.periods.split(",")]
                   if args.periods else [args.period_ms or 10.0])
        jobs = []
        for period in periods:
            packet = int(rate * period / 1000.0 / 8.0) + 40
            jobs.append((f"{args.codec}@{period:g}ms",
                         {"direction": direction, "ac": args.flow_ac or 3,
                          "mean_packet": packet, "packet_interval": period}))
        return jobs
    if not args.packet_bytes or not args.interval_ms:
        raise CliError("capacity needs --codec or --packet-bytes/--interval-ms")
    return [("custom", {"direction": direction, "ac": args.flow_ac or 3,
                        "mean_packet": args.packet_bytes,
                        "packet_interval": args.interval_ms})]


def cmd_capacity(args, client: ServiceClient) -> int:
    doc, path = load_doc(args)
    jobs = _capacity_jobs(args)
    rows = []
    probe_rows = []
    for label, template in jobs:
        body = client.capacity_search(validated(copy.deepcopy(doc), path.parent),
                                      template, rho_threshold=args.rho_th)
        rows.append([label, template["direction"], template["ac"],
                     template["mean_packet"], template["packet_interval"],
                     body["max_flows"]])
        for probe in body["probes"]:
            probe_rows.append([label, probe["flows"], probe["max_utilization"],
                               probe["binding_class"], probe["admissible"]])
        print(f"capacity[{label}]: max admitted flows = {body['max_flows']}")
    out_dir = Path(args.out)
    table = out_dir / "capacity.csv"
    write_csv(table, ["template", "direction", "ac", "packet_bytes",
                      "interval_ms", "max_flows"], rows)
    probes = out_dir / "capacity_probes.csv"
    write_csv(probes, ["template", "flows", "max_rho", "binding_tc",
                       "admissible"], probe_rows)
    write_manifest(out_dir, "capacity", args, path, [table, probes])
    return EXIT_OK


def cmd_simulate(args, client: ServiceClient) -> int:
    doc, path = load_doc(args)
    points = sweep_points(args)
    cols = point_columns(points)
    seeds = parse_seeds(args.seeds)
    rows = []
    for point in points:
        scenario = validated(apply_point(doc, point), path.parent)
        for seed in seeds:
            body = client.simulate(scenario, seed=seed, duration_s=args.duration,
                                   collect_activity=args.activity)
            for row in body["rows"]:
                rows.append([point.get(c, "") for c in cols] + [
                    seed, row["index"], row["arrived"], row["delivered"],
                    row["retry_drops"], row["buffer_drops"], row["sink_drops"],
                    row["throughput"], row["mean_service_us"],
                    row["mean_access_delay_us"], row["delay_p95_us"],
                    row["loss_ratio"]])
    out_dir = Path(args.out)
    table = out_dir / "simulation.csv"
    write_csv(table, cols + ["seed", "class", "arrived", "delivered",
                             "retry_drops", "buffer_drops", "sink_drops",
                             "throughput", "mean_service_us",
                             "mean_access_delay_us", "delay_p95_us",
                             "loss_ratio"], rows)
    write_manifest(out_dir, "simulate", args, path, [table], seeds=seeds)
    print(f"simulate: {len(points)} point(s) x {len(seeds)} seed(s) -> {table}")
    return EXIT_OK


def cmd_compare(args, client: ServiceClient) -> int:
    doc, path = load_doc(args)
    points = sweep_points(args)
    cols = point_columns(points)
    seeds = parse_seeds(args.seeds)
    rows = []
    worst_thp = worst_srv = 0.0
    for point in points:
        scenario = validated(apply_point(doc, point), path.parent)
        body = client.compare(scenario, seeds, duration_s=args.duration)
        worst_thp = max(worst_thp, body["max_throughput_rel_error"])
        worst_srv = max(worst_srv, body["max_service_rel_error"])
        for row in body["rows"]:
            rows.append([point.get(c, "") for c in cols] + [
                row["index"], row["throughput_analysis"], row["throughput_sim"],
                row["throughput_rel_error"], row["service_analysis_us"],
                row["service_sim_us"], row["service_rel_error"]])
    out_dir = Path(args.out)
    table = out_dir / "compare.csv"
    write_csv(table, cols + ["class", "throughput_analysis", "throughput_sim",
                             "throughput_rel_error", "service_analysis_us",
                             "service_sim_us", "service_rel_error"], rows)
    write_manifest(out_dir, "compare", args, path, [table], seeds=seeds)
    print(f"compare: max throughput error {worst_thp:.3%}, "
          f"max service error {worst_srv:.3%} -> {table}")
    return EXIT_OK


def cmd_admit(args, client: ServiceClient) -> int:
    doc, path = load_doc(args)
    events_path = Path(args.events)
    if not events_path.exists():
        raise CliError(f"event stream not found: {events_path}", EXIT_IO)
    validated(doc, path.parent)
    session = client.create_session(doc, rho_threshold=args.rho_th)
    try:
        body = client.replay(session, events_path.read_text())
        state = client.session_state(session)
    finally:
        client.delete_session(session)
    out_dir = Path(args.out)
    table = out_dir / "decisions.csv"
    table.parent.mkdir(parents=True, exist_ok=True)
    table.write_text(body["csv"])
    outputs = [table]
    if args.snapshot:
        snap = Path(args.snapshot)
        snap.parent.mkdir(parents=True, exist_ok=True)
        snap.write_text(yaml.safe_dump({
            "rho_threshold": state["rho_threshold"],
            "flows": state["admitted"],
        }, sort_keys=False))
        outputs.append(snap)
    write_manifest(out_dir, "admit", args, path, outputs)
    admitted = sum(1 for d in body["decisions"] if d["verdict"] == "admit")
    rejected = sum(1 for d in body["decisions"] if d["verdict"] == "reject")
    print(f"admit: {admitted} admitted, {rejected} rejected, "
          f"{len(body['decisions'])} decisions -> {table}")
    return EXIT_OK


def cmd_serve(args, _client=None) -> int:
    import uvicorn

    from .service.app import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def cmd_rerun(args, _client=None) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise CliError(f"manifest not found: {manifest_path}", EXIT_IO)
    manifest = json.loads(manifest_path.read_text())
    return main(manifest["argv"])


# -- argument parsing ------------------------------------------------------------

def _add_common(parser, with_sweep=True):
    parser.add_argument("--scenario", required=True,
                        help="scenario file path or bundled scenario name")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--tolerance", type=float, default=None,
                        help="saturation fixed-point tolerance override")
    parser.add_argument("--rho-th", dest="rho_th", type=float, default=None,
                        help="admission utilization threshold override")
    parser.add_argument("--access", choices=["basic", "rts", "rts_cts"],
                        default=None, help="channel access mode override")
    if with_sweep:
        parser.add_argument("--set", action="append", metavar="PATH=VALUE",
                            help="single scenario override (repeatable)")
        parser.add_argument("--zip", metavar="P=V1,V2;Q=W1,W2",
                            help="parallel sweep series")
        parser.add_argument("--grid", metavar="P=V1,V2;Q=W1,W2",
                            help="cartesian sweep series")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edcacap",
        description="EDCA saturation, capacity, and admission analysis "
                    "with a discrete-event validation simulator")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: in-process)")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="saturation fixed point per class")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("capacity", help="largest admissible flow count")
    _add_common(p, with_sweep=False)
    p.add_argument("--direction", choices=["uplink", "downlink", "two_way"],
                   default="two_way")
    p.add_argument("--codec", choices=sorted(CODECS) + ["mpeg4"], default=None)
    p.add_argument("--period-ms", dest="period_ms", type=float, default=None)
    p.add_argument("--periods", default=None,
                   help="comma list of codec sample periods (ms)")
    p.add_argument("--packet-bytes", dest="packet_bytes", type=int, default=None)
    p.add_argument("--interval-ms", dest="interval_ms", type=float, default=None)
    p.add_argument("--flow-ac", dest="flow_ac", type=int, default=None)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("simulate", help="discrete-event simulation metrics")
    _add_common(p)
    p.add_argument("--seeds", default="1")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--activity", action="store_true",
                   help="collect conditional activity histograms")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="analysis vs simulation deltas")
    _add_common(p)
    p.add_argument("--seeds", default="1")
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("admit", help="replay a reservation event stream")
    _add_common(p, with_sweep=False)
    p.add_argument("--events", required=True, help="ADDTS/DELTS record file")
    p.add_argument("--snapshot", default=None,
                   help="write the admitted-flow table here")
    p.set_defaults(func=cmd_admit)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rerun", help="re-execute a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        if args.func in (cmd_serve, cmd_rerun):
            return args.func(args)
        with ServiceClient(args.server) as client:
            return args.func(args, client)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ApiError as exc:
        print(f"service error: {exc}", file=sys.stderr)
        if exc.status_code == 409:
            return EXIT_NO_CONVERGENCE
        if exc.status_code in (404, 422):
            return EXIT_CONFIG
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
