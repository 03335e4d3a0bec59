"""JSON-lines record schemas, hostile-content-safe append/read, and the shared_id join.

Every line is a single JSON object with a fixed key order and no
insignificant whitespace, so ``serialize(parse(line)) == line``.
"""

from __future__ import annotations

import base64
import fcntl
import json
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Iterator

SCHEMA_VERSION = 1
NO_USER_AGENT = "-"


def now_ms() -> int:
    return time.time_ns() // 1_000_000


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def encode_header_value(raw: bytes) -> str | dict:
    """UTF-8 header values are stored as strings, anything else as ``{"b64": ...}``."""
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return {"b64": b64(raw)}


def decode_header_value(value: str | dict) -> str:
    if isinstance(value, dict):
        return unb64(value["b64"]).decode("latin-1")
    return value


class SchemaError(ValueError):
    pass


@dataclass
class RequestRecord:
    ts: int
    node: str
    src_ip: str
    src_port: int
    method: str | None
    url: str | None
    http_version: str | None
    headers: dict[str, list] = field(default_factory=dict)
    user_agent: str = NO_USER_AGENT
    referer: str | None = None
    body_b64: str = ""
    resp_status: int | None = None
    resp_body_b64: str = ""
    shared_id: str | None = None
    valid_http: bool = True
    truncated: bool = False

    @property
    def body(self) -> bytes:
        return unb64(self.body_b64)

    @property
    def resp_body(self) -> bytes:
        return unb64(self.resp_body_b64)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"v": SCHEMA_VERSION}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> RequestRecord:
        return _build(cls, doc, _REQUEST_TYPES)


@dataclass
class XmppEvent:
    ts: int
    direction: str
    kind: str
    local_jid: str
    remote_jid: str
    payload: str
    shared_id: str | None = None
    error: bool = False

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"v": SCHEMA_VERSION}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> XmppEvent:
        event = _build(cls, doc, _XMPP_TYPES)
        if event.direction not in ("in", "out"):
            raise SchemaError(f"direction: {event.direction!r}")
        if event.kind not in ("chat", "stream", "api"):
            raise SchemaError(f"kind: {event.kind!r}")
        return event


_OPT_STR = (str, type(None))
_OPT_INT = (int, type(None))
_REQUEST_TYPES = {
    "ts": int, "node": str, "src_ip": str, "src_port": int, "method": _OPT_STR, "url": _OPT_STR,
    "http_version": _OPT_STR, "headers": dict, "user_agent": str, "referer": _OPT_STR,
    "body_b64": str, "resp_status": _OPT_INT, "resp_body_b64": str, "shared_id": _OPT_STR,
    "valid_http": bool, "truncated": bool,
}
_XMPP_TYPES = {
    "ts": int, "direction": str, "kind": str, "local_jid": str, "remote_jid": str,
    "payload": str, "shared_id": _OPT_STR, "error": bool,
}


def _build(cls, doc: dict, types: dict):
    if doc.get("v") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {doc.get('v')!r}")
    kwargs = {}
    for name, expected in types.items():
        if name not in doc:
            raise SchemaError(f"missing field {name!r}")
        value = doc[name]
        # bool is an int subclass; keep them apart
        if isinstance(value, bool) and expected in (int, _OPT_INT):
            raise SchemaError(f"{name}: expected int")
        if not isinstance(value, expected):
            raise SchemaError(f"{name}: unexpected type {type(value).__name__}")
        kwargs[name] = value
    return cls(**kwargs)


def serialize(record: RequestRecord | XmppEvent) -> str:
    return json.dumps(record.to_dict(), separators=(",", ":"), ensure_ascii=True)


def parse_line(line: str) -> RequestRecord | XmppEvent:
    try:
        doc = json.loads(line)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise SchemaError("line is not a JSON object")
    if "direction" in doc:
        return XmppEvent.from_dict(doc)
    return RequestRecord.from_dict(doc)


_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
_locks_guard = threading.Lock()


def _lock_for(path: Path) -> threading.Lock:
    key = os.path.abspath(path)
    with _locks_guard:
        return _locks[key]


def append(path, record: RequestRecord | XmppEvent) -> None:
    """Append one record as one line; safe across threads and processes."""
    path = Path(path)
    line = (serialize(record) + "\n").encode("ascii")
    with _lock_for(path):
        fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX)
            view = memoryview(line)
            while view:
                written = os.write(fd, view)
                view = view[written:]
        finally:
            os.close(fd)


class LogReader:
    """Streams records from one or more files; bad lines are counted, not fatal."""

    def __init__(self, paths: Iterable):
        self.paths = [Path(p) for p in paths]
        self.skipped = 0

    def __iter__(self) -> Iterator[RequestRecord | XmppEvent]:
        for path in self.paths:
            try:
                fh = path.open("rb")
            except OSError as exc:
                raise OSError(f"cannot read log file {path}: {exc.strerror}") from exc
            with fh:
                for raw in fh:
                    if not raw.strip():
                        continue
                    try:
                        yield parse_line(raw.decode("utf-8"))
                    except (SchemaError, UnicodeDecodeError, TypeError, KeyError):
                        self.skipped += 1


def read_logs(paths: Iterable) -> tuple[list, int]:
    reader = LogReader(paths)
    records = list(reader)
    return records, reader.skipped


@dataclass
class CorrelatedSession:
    shared_id: str
    xmpp_events: list[XmppEvent]
    rest_records: list[RequestRecord]

    @property
    def first_ts(self) -> int:
        return min(x.ts for x in [*self.xmpp_events, *self.rest_records])


@dataclass
class Correlation:
    sessions: list[CorrelatedSession]
    rest_orphans: dict[str, list[RequestRecord]]
    xmpp_orphans: dict[str, list[XmppEvent]]


def correlate(rest_records: Iterable[RequestRecord], xmpp_events: Iterable[XmppEvent]) -> Correlation:
    rest: dict[str, list[RequestRecord]] = defaultdict(list)
    xmpp: dict[str, list[XmppEvent]] = defaultdict(list)
    for rec in rest_records:
        if rec.shared_id is not None:
            rest[rec.shared_id].append(rec)
    for ev in xmpp_events:
        if ev.shared_id is not None:
            xmpp[ev.shared_id].append(ev)
    sessions = [
        CorrelatedSession(sid, sorted(xmpp[sid], key=lambda e: e.ts), sorted(rest[sid], key=lambda r: r.ts))
        for sid in rest.keys() & xmpp.keys()
    ]
    sessions.sort(key=lambda s: (s.first_ts, s.shared_id))
    return Correlation(
        sessions=sessions,
        rest_orphans={k: v for k, v in sorted(rest.items()) if k not in xmpp},
        xmpp_orphans={k: v for k, v in sorted(xmpp.items()) if k not in rest},
    )
