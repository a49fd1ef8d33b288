"""Command-line front end.

Exit codes: 0 success / all verdicts pass, 1 a verdict failed, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from . import metrics
from .ami.client import AmiClient, TcpTransport
from .ami.ledger import AmiLedger
from .ami.protocol import AmiService
from .ami.server import AmiServer
from .scenarios import SCENARIOS, ConfigError, builtin_config, load_config

log = logging.getLogger("citadel_sim")


def _setup_logging() -> None:
    level = os.environ.get("CITADEL_SIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else builtin_config(args.soc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    names = list(SCENARIOS) if args.scenario == "all" else [args.scenario]
    for n in names:
        if n not in SCENARIOS:
            print(f"error: unknown scenario {n!r}; choose from {', '.join(SCENARIOS)} or all", file=sys.stderr)
            return 2
    if args.ami:
        try:
            probe = TcpTransport.from_url(args.ami)
            AmiClient(probe).request({"type": "Status", "chip": ""})
            probe.close()
        except (ValueError, ConnectionError) as exc:
            print(f"error: AMI unreachable: {exc}", file=sys.stderr)
            return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = False
    for name in names:
        kwargs = {}
        if name == "threat-reverse-engineering" and args.attempts is not None:
            kwargs["attempts"] = args.attempts
        try:
            verdict = SCENARIOS[name](cfg, args.seed, args.ami, **kwargs)
        except ConnectionError as exc:
            print(f"error: AMI unreachable: {exc}", file=sys.stderr)
            return 2
        if args.format == "json":
            (out / f"{name}.verdict.json").write_text(json.dumps(verdict.to_dict(), indent=2, sort_keys=True) + "\n")
        else:
            with open(out / f"{name}.verdict.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["check", "expected", "observed", "passed", "evidence"])
                for check, exp in verdict.expected.items():
                    obs = verdict.observed.get(check)
                    ev = " ".join(map(str, verdict.evidence.get(check, [])))
                    w.writerow([check, json.dumps(exp), json.dumps(obs), exp == obs, ev])
        verdict.transcript.write_jsonl(out / f"{name}.transcript.jsonl")
        status = "PASS" if verdict.passed else "FAIL"
        print(f"{status} {name} ({len(verdict.transcript)} events)")
        for check in verdict.failures():
            print(
                f"  {check}: expected {verdict.expected[check]!r}, observed {verdict.observed[check]!r}, "
                f"evidence events {verdict.evidence.get(check, [])}"
            )
        failed = failed or not verdict.passed
    return 1 if failed else 0


def cmd_sweep(args) -> int:
    bits = [int(b) for b in args.bits.split(",")] if args.bits else None
    try:
        rows = metrics.sweep(args.kind, args.ip, bits)
    except metrics.UnknownIpClass as exc:
        print(f"error: unknown IP class {exc}", file=sys.stderr)
        return 2
    except metrics.OutOfRange as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bits", "delay_ps"])
        for b, d in rows:
            w.writerow([b, f"{d:g}"])
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_overhead(args) -> int:
    try:
        baselines = metrics.soc_baselines(args.soc)
    except metrics.UnknownSoc:
        known = ", ".join(metrics.calibration_data()["soc_baselines"])
        print(f"error: unknown SoC {args.soc!r}; known: {known}", file=sys.stderr)
        return 2
    techs = metrics.technology_profiles()
    if args.tech:
        unknown = [t for t in args.tech if t not in baselines]
        if unknown:
            print(f"error: unknown technology {unknown}", file=sys.stderr)
            return 2
        baselines = {t: baselines[t] for t in args.tech}
    per = metrics.per_tech_percentages(baselines, techs)
    avg = metrics.overhead_percentages(baselines, techs)
    reported = metrics.calibration_data()["soc_baselines"][args.soc]["reported_avg_area_pct"]
    if args.format == "json":
        print(json.dumps({"soc": args.soc, "area_pct": per, "average_area_pct": avg, "reported_average_area_pct": reported},
                         indent=2, sort_keys=True))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["technology", "area_pct"])
        for t, p in per.items():
            w.writerow([t, f"{p:.2f}"])
        w.writerow(["average", f"{avg:.2f}"])
        w.writerow(["reported_average", f"{reported:.2f}"])
    return 0


def cmd_ami_serve(args) -> int:
    ledger = AmiLedger()
    if args.snapshot and Path(args.snapshot).exists():
        ledger = AmiLedger.load(args.snapshot)
    service = AmiService(ledger, seed=args.seed)
    try:
        server = AmiServer(service, args.host, args.port)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 2
    stop = threading.Event()

    def save(*_):
        if args.snapshot:
            ledger.save(args.snapshot)
            log.info("ledger snapshot written to %s", args.snapshot)

    def shutdown(*_):
        stop.set()

    signal.signal(signal.SIGTERM, shutdown)
    signal.signal(signal.SIGINT, shutdown)
    if hasattr(signal, "SIGUSR1"):
        signal.signal(signal.SIGUSR1, save)
    server.start_background()
    print(f"AMI listening on {server.url}", flush=True)
    try:
        while not stop.wait(0.2):
            pass
    finally:
        server.shutdown()
        server.server_close()
        save()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="citadel-sim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario (or 'all') and write verdict + transcript")
    r.add_argument("scenario")
    r.add_argument("--config", help="scenario config JSON")
    r.add_argument("--soc", default="single-bus", help="builtin config when --config is absent")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="out")
    r.add_argument("--ami", help="tcp://host:port of a running AMI (default: in-process)")
    r.add_argument("--attempts", type=int, help="override brute-force attempts")
    r.add_argument("--format", choices=["json", "csv"], default="json")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="emit delay curves as CSV")
    s.add_argument("kind", choices=["auth", "unlock"])
    s.add_argument("--ip", help="IP class for unlock sweeps (aes256, uart, sha256, gpio)")
    s.add_argument("--bits", help="comma-separated bit sizes (default: calibration points)")
    s.add_argument("--out", help="write CSV here instead of stdout")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("overhead", help="area overhead of the enclave on a reference SoC")
    o.add_argument("soc")
    o.add_argument("--tech", nargs="*", help="restrict to these technologies")
    o.add_argument("--format", choices=["json", "csv"], default="csv")
    o.set_defaults(func=cmd_overhead)

    a = sub.add_parser("ami-serve", help="serve the AMI wire protocol over TCP")
    a.add_argument("--host", default="127.0.0.1")
    a.add_argument("--port", type=int, default=7700)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--snapshot", help="ledger snapshot file (loaded at start, written on SIGUSR1 and exit)")
    a.set_defaults(func=cmd_ami_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.command == "sweep" and args.kind == "unlock" and not args.ip:
        print("error: sweep unlock needs --ip", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
