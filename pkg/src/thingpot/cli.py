"""Command line entry point: ``thingpot <subcommand>``."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

from . import logstore, phue
from .analyzer import AsnMap, ReportOptions, TorExitList, load_registry, report
from .analyzer.report import to_json, to_tsv
from .analyzer.signatures import RegistryError
from .replay.driver import PlanError, ReplayPlan, corpus_bytes, expand, replay

log = logging.getLogger("thingpot")


def _serve_rest(args) -> int:
    from .rest import HoneypotServer

    try:
        template = phue.load_data_dir(args.data_dir)
    except phue.TemplateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    server = HoneypotServer(
        phue.BridgeState(template), args.log_file, node=args.node_id, seed=args.seed,
        trust_replay_header=args.trust_replay_header, read_timeout=args.read_timeout,
    )
    log.info("rest honeypot on %s:%d, logging to %s", args.bind, args.port, args.log_file)
    try:
        asyncio.run(server.serve_forever(args.bind, args.port))
    except KeyboardInterrupt:
        pass
    return 0


def _serve_xmpp(args) -> int:
    from .xmpp import EventLog, XmppBridge

    password = os.environ.get(args.password_env)
    if password is None:
        print(f"error: environment variable {args.password_env} is not set", file=sys.stderr)
        return 2
    bridge = XmppBridge(args.server, args.port, args.jid, password, args.api_url, EventLog(args.log_file),
                        light_id=args.light_id, tls=args.tls)
    try:
        asyncio.run(bridge.run())
    except KeyboardInterrupt:
        pass
    return 0


def _xmpp_stub(args) -> int:
    from .xmpp.stub import StubXmppServer

    users = {}
    for spec in args.user:
        jid, _, password = spec.partition(":")
        users[jid] = password

    async def main():
        stub = StubXmppServer(users, domain=args.domain)
        await stub.start(args.bind, args.port)
        log.info("xmpp stub on %s:%d for %s", args.bind, stub.port, ", ".join(users))
        while True:
            msg = await stub.inbox.get()
            print(f"{msg.sender} -> {msg.to}: {msg.body}", flush=True)

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def _analyze(args) -> int:
    try:
        registry = load_registry(args.signatures)
    except RegistryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        reader = logstore.LogReader(args.logs)
        opts = ReportOptions(
            top=args.top,
            tor=TorExitList.load(args.tor_list) if args.tor_list else None,
            asn=AsnMap.load(args.asn_map) if args.asn_map else None,
            registry=registry,
        )
        records = list(reader)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    doc = report(records, opts, skipped=reader.skipped)
    text = to_json(doc) if args.format == "json" else to_tsv(doc)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if reader.skipped:
        print(f"skipped {reader.skipped} malformed line(s)", file=sys.stderr)
    return 0


def _replay(args) -> int:
    try:
        plan = ReplayPlan.load(args.plan)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        plan.seed = args.seed
    if args.target is not None:
        plan.target = args.target
    if args.pace is not None:
        plan.pace = args.pace
    if args.concurrency is not None:
        plan.concurrency = args.concurrency
    requests = expand(plan)
    if args.corpus_out:
        Path(args.corpus_out).write_bytes(corpus_bytes(requests, plan.target, args.trust_replay_header))
    if args.dry_run:
        print(json.dumps({"planned": len(requests)}))
        return 0
    summary = asyncio.run(replay(plan, requests, replay_header=args.trust_replay_header))
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return 1 if summary.aborted else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thingpot", description="Philips Hue IoT honeypot toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve-rest", help="run the emulated Hue bridge")
    p.add_argument("--bind", default="0.0.0.0")
    p.add_argument("--port", type=int, default=80)
    p.add_argument("--data-dir", default=None, help="directory holding template.json, config.json, tempfile.json")
    p.add_argument("--log-file", default="rest.jsonl")
    p.add_argument("--node-id", default="node1")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--read-timeout", type=float, default=10.0)
    p.add_argument("--trust-replay-header", action="store_true",
                   help="take src_ip from X-Replay-Src (test runs only)")
    p.set_defaults(func=_serve_rest)

    p = sub.add_parser("serve-xmpp", help="run the XMPP-controlled bulb")
    p.add_argument("--server", required=True)
    p.add_argument("--port", type=int, default=5222)
    p.add_argument("--jid", required=True)
    p.add_argument("--password-env", required=True, metavar="VAR")
    p.add_argument("--api-url", required=True, help="bridge API base incl. username, e.g. http://host/api/<user>")
    p.add_argument("--log-file", default="xmpp.jsonl")
    p.add_argument("--light-id", default="1")
    p.add_argument("--tls", choices=("auto", "required", "never"), default="auto")
    p.set_defaults(func=_serve_xmpp)

    p = sub.add_parser("xmpp-stub", help="loopback XMPP server for local runs")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5222)
    p.add_argument("--domain", default="localhost")
    p.add_argument("--user", action="append", default=[], metavar="JID:PASSWORD")
    p.set_defaults(func=_xmpp_stub)

    p = sub.add_parser("analyze", help="classify and summarize honeypot logs")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--tor-list")
    p.add_argument("--asn-map")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--format", choices=("json", "tsv"), default="json")
    p.add_argument("--signatures", help="extra signatures (JSON list)")
    p.add_argument("--output", "-o")
    p.set_defaults(func=_analyze)

    p = sub.add_parser("replay", help="generate and fire attack traffic at a honeypot")
    p.add_argument("--plan", required=True)
    p.add_argument("--target")
    p.add_argument("--seed", type=int)
    p.add_argument("--pace", type=float, help="requests per second, 0 = unthrottled")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--trust-replay-header", action="store_true", help="send X-Replay-Src with pool addresses")
    p.add_argument("--corpus-out", help="write the expanded corpus (JSON lines) here")
    p.add_argument("--dry-run", action="store_true", help="expand only, send nothing")
    p.set_defaults(func=_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
