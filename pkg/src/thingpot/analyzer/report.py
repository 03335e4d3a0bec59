"""Counting, top-N tables and the assembled analysis report."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable

from ..logstore import RequestRecord, XmppEvent, correlate
from .classify import DEFAULT_RULES, ClassificationRules, Label, classify
from .enrich import AsnMap, TorExitList, enrich_ip
from .payloads import fingerprint_payload, payload_repr
from .signatures import AttackSignature, builtin_signatures

TOP_FIELDS = ("url", "src_ip", "user_agent", "referer", "non_http_payload")


def percent(count: int, total: int) -> float:
    """Share of ``total`` in percent, one decimal, half-up."""
    if total <= 0:
        return 0.0
    value = (Decimal(count) * 100 / Decimal(total)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return float(value)


def percent_table(counts: dict[str, int]) -> dict[str, dict]:
    total = sum(counts.values())
    return {key: {"count": n, "percent": percent(n, total)} for key, n in counts.items()}


def ranked(counter: Counter, n: int | None) -> list[tuple[str, int]]:
    rows = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return rows if n is None else rows[:n]


def _field_key(record: RequestRecord, name: str) -> str | None:
    if name == "non_http_payload":
        return None if record.valid_http else payload_repr(record.body)
    if name in ("url", "referer") and not record.valid_http:
        return None
    return getattr(record, name)


def top_n(records: Iterable[RequestRecord], field_name: str, n: int) -> list[tuple[str, int]]:
    if field_name not in TOP_FIELDS:
        raise ValueError(f"unknown field {field_name!r}; choose from {', '.join(TOP_FIELDS)}")
    counts = Counter()
    for rec in records:
        key = _field_key(rec, field_name)
        if key is not None:
            counts[key] += 1
    return ranked(counts, n)


@dataclass
class UserAgentRow:
    user_agent: str
    count: int
    methods: dict[str, int]
    ips: int


def aggregate_user_agents(records: Iterable[RequestRecord]) -> list[UserAgentRow]:
    tally = Tally()
    for rec in records:
        tally.add_user_agent(rec)
    return tally.user_agent_rows()


@dataclass
class Tally:
    """Mergeable counts; ``merge`` is associative so record shards can be tallied apart."""

    labels: Counter = field(default_factory=Counter)
    api: Counter = field(default_factory=Counter)
    signatures: Counter = field(default_factory=Counter)
    ua_counts: Counter = field(default_factory=Counter)
    ua_methods: dict = field(default_factory=lambda: defaultdict(Counter))
    ua_ips: dict = field(default_factory=lambda: defaultdict(set))
    fields: dict = field(default_factory=lambda: {name: Counter() for name in TOP_FIELDS})
    payload_kinds: dict = field(default_factory=dict)
    ips: set = field(default_factory=set)
    records: int = 0

    def add_user_agent(self, rec: RequestRecord) -> None:
        if not rec.valid_http:
            return
        self.ua_counts[rec.user_agent] += 1
        self.ua_methods[rec.user_agent][rec.method] += 1
        self.ua_ips[rec.user_agent].add(rec.src_ip)

    def add(self, rec: RequestRecord, registry, rules: ClassificationRules) -> None:
        self.records += 1
        self.labels[classify(rec, rules).value] += 1
        if rec.valid_http:
            self.api["api" if (rec.url or "").startswith("/api") else "non_api"] += 1
        for sig in registry:
            if sig.matches(rec):
                self.signatures[sig.tag] += 1
        self.add_user_agent(rec)
        for name in TOP_FIELDS:
            key = _field_key(rec, name)
            if key is not None:
                self.fields[name][key] += 1
        if not rec.valid_http:
            key = payload_repr(rec.body)
            self.payload_kinds.setdefault(key, fingerprint_payload(rec.body))
        self.ips.add(rec.src_ip)

    def merge(self, other: Tally) -> Tally:
        out = Tally()
        for t in (self, other):
            out.labels.update(t.labels)
            out.api.update(t.api)
            out.signatures.update(t.signatures)
            out.ua_counts.update(t.ua_counts)
            for ua, methods in t.ua_methods.items():
                out.ua_methods[ua].update(methods)
            for ua, ips in t.ua_ips.items():
                out.ua_ips[ua] |= ips
            for name in TOP_FIELDS:
                out.fields[name].update(t.fields[name])
            for key, kind in t.payload_kinds.items():
                out.payload_kinds.setdefault(key, kind)
            out.ips |= t.ips
            out.records += t.records
        return out

    def user_agent_rows(self, n: int | None = None) -> list[UserAgentRow]:
        return [
            UserAgentRow(ua, count, dict(sorted(self.ua_methods[ua].items())), len(self.ua_ips[ua]))
            for ua, count in ranked(self.ua_counts, n)
        ]


@dataclass
class ReportOptions:
    top: int = 10
    tor: TorExitList | None = None
    asn: AsnMap | None = None
    registry: list[AttackSignature] | None = None
    rules: ClassificationRules = DEFAULT_RULES


def _correlation_summary(rest: list[RequestRecord], xmpp: list[XmppEvent]) -> dict:
    result = correlate(rest, xmpp)
    return {
        "sessions": len(result.sessions),
        "rest_orphans": len(result.rest_orphans),
        "xmpp_orphans": len(result.xmpp_orphans),
    }


def report(records: Iterable, opts: ReportOptions | None = None, skipped: int = 0) -> dict:
    """Build the full analysis report as a JSON-ready dict with a stable layout."""
    opts = opts or ReportOptions()
    registry = opts.registry if opts.registry is not None else builtin_signatures()
    tally = Tally()
    rest: list[RequestRecord] = []
    xmpp: list[XmppEvent] = []
    for rec in records:
        if isinstance(rec, XmppEvent):
            xmpp.append(rec)
            continue
        tally.add(rec, registry, opts.rules)
        if rec.shared_id is not None:
            rest.append(rec)
    return assemble(tally, opts, registry, skipped, _correlation_summary(rest, xmpp) if xmpp else None)


def assemble(tally: Tally, opts: ReportOptions, registry, skipped: int = 0, correlation: dict | None = None) -> dict:
    top = opts.top
    label_counts = {label.value: tally.labels.get(label.value, 0) for label in Label}
    categories = {sig.tag: sig.category.value for sig in registry}

    def enriched(ip: str) -> dict:
        return enrich_ip(ip, opts.tor, opts.asn)

    rir = Counter()
    asn = Counter()
    if opts.asn is not None:
        for ip in tally.ips:
            info = enriched(ip)
            rir[info["rir"] or "-"] += 1
            if info["asn"] is not None:
                asn[info["asn"]] += 1

    out = {
        "records": tally.records,
        "skipped_lines": skipped,
        "labels": percent_table(label_counts),
        "api_split": percent_table({"api": tally.api.get("api", 0), "non_api": tally.api.get("non_api", 0)}),
        "signatures": [
            {"tag": tag, "category": categories.get(tag, "Other"), "count": n}
            for tag, n in ranked(tally.signatures, None)
        ],
        "user_agents": [row.__dict__ for row in tally.user_agent_rows(top)],
        "top_urls": [{"url": k, "count": n} for k, n in ranked(tally.fields["url"], top)],
        "top_ips": [{"ip": k, "count": n, **enriched(k)} for k, n in ranked(tally.fields["src_ip"], top)],
        "top_user_agents": [{"user_agent": k, "count": n} for k, n in ranked(tally.fields["user_agent"], top)],
        "top_referers": [{"referer": k, "count": n} for k, n in ranked(tally.fields["referer"], top)],
        "non_http_payloads": [
            {"payload": k, "count": n, "fingerprint": tally.payload_kinds.get(k, "unknown")}
            for k, n in ranked(tally.fields["non_http_payload"], top)
        ],
        "rir_histogram": [{"rir": k, "count": n} for k, n in ranked(rir, None)],
        "asn_histogram": [{"asn": k, "count": n} for k, n in ranked(asn, top)],
        "enrichment": {
            "tor_list": opts.tor is not None,
            "asn_map": opts.asn is not None,
            "skipped_map_lines": (opts.tor.skipped if opts.tor else 0) + (opts.asn.skipped if opts.asn else 0),
        },
    }
    if correlation is not None:
        out["correlation"] = correlation
    return out


def to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _table(title: str, header: list[str], rows: list[list]) -> str:
    cells = [header] + [["" if c is None else str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = [f"# {title}"]
    for row in cells:
        lines.append("\t".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def to_tsv(doc: dict) -> str:
    """Aligned, tab-separated tables for people."""
    blocks = [
        _table("summary", ["metric", "value"], [["records", doc["records"]], ["skipped_lines", doc["skipped_lines"]]]),
        _table("labels", ["label", "count", "percent"],
               [[k, v["count"], f"{v['percent']:.1f}%"] for k, v in doc["labels"].items()]),
        _table("api_split", ["/api?", "count", "percent"],
               [[k, v["count"], f"{v['percent']:.1f}%"] for k, v in doc["api_split"].items()]),
        _table("signatures", ["tag", "category", "count"],
               [[r["tag"], r["category"], r["count"]] for r in doc["signatures"]]),
        _table("user_agents", ["count", "user_agent", "methods", "ips"],
               [[r["count"], r["user_agent"], " ".join(f"{m}: {c}" for m, c in r["methods"].items()), r["ips"]]
                for r in doc["user_agents"]]),
        _table("top_urls", ["count", "url"], [[r["count"], r["url"]] for r in doc["top_urls"]]),
        _table("top_ips", ["count", "ip", "tor", "asn", "rir"],
               [[r["count"], r["ip"], "Yes" if r["tor"] else "No", r["asn"], r["rir"]] for r in doc["top_ips"]]),
        _table("top_referers", ["count", "referer"], [[r["count"], r["referer"]] for r in doc["top_referers"]]),
        _table("non_http_payloads", ["count", "payload", "fingerprint"],
               [[r["count"], r["payload"], r["fingerprint"]] for r in doc["non_http_payloads"]]),
        _table("rir_histogram", ["count", "rir"], [[r["count"], r["rir"]] for r in doc["rir_histogram"]]),
        _table("asn_histogram", ["count", "asn"], [[r["count"], r["asn"]] for r in doc["asn_histogram"]]),
    ]
    if "correlation" in doc:
        blocks.append(_table("correlation", ["metric", "value"], [[k, v] for k, v in doc["correlation"].items()]))
    return "\n\n".join(blocks) + "\n"

