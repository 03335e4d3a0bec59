"""Replay plans: deterministic expansion and a bounded-parallel sender."""

from __future__ import annotations

import asyncio
import json
import random
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

from .generators import GENERATORS, ReplayRequest, generate

DEFAULT_CONCURRENCY = 8


class PlanError(ValueError):
    pass


@dataclass
class MixEntry:
    generator: str
    count: int
    params: dict = field(default_factory=dict)


@dataclass
class ReplayPlan:
    seed: int
    mix: list[MixEntry]
    target: str = "http://127.0.0.1:8080"
    pace: float = 0.0
    concurrency: int = DEFAULT_CONCURRENCY
    shuffle: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> ReplayPlan:
        if not isinstance(doc, dict) or not isinstance(doc.get("mix"), list):
            raise PlanError("plan needs a 'mix' list")
        mix = []
        for i, entry in enumerate(doc["mix"]):
            if not isinstance(entry, dict) or entry.get("generator") not in GENERATORS:
                raise PlanError(f"mix[{i}]: unknown generator {entry.get('generator') if isinstance(entry, dict) else entry!r}")
            count = entry.get("count", 0)
            if not isinstance(count, int) or isinstance(count, bool) or count < 0:
                raise PlanError(f"mix[{i}]: count must be an integer >= 0")
            mix.append(MixEntry(entry["generator"], count, dict(entry.get("params", {}))))
        plan = cls(
            seed=int(doc.get("seed", 0)),
            mix=mix,
            target=doc.get("target", cls.target),
            pace=float(doc.get("pace", 0.0)),
            concurrency=int(doc.get("concurrency", DEFAULT_CONCURRENCY)),
            shuffle=bool(doc.get("shuffle", True)),
        )
        if plan.pace < 0 or plan.concurrency < 1:
            raise PlanError("pace must be >= 0 and concurrency >= 1")
        return plan

    @classmethod
    def load(cls, path) -> ReplayPlan:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise PlanError(f"cannot read plan {path}: {exc}") from exc
        return cls.from_dict(doc)

    @property
    def total(self) -> int:
        return sum(e.count for e in self.mix)


def expand(plan: ReplayPlan) -> list[ReplayRequest]:
    requests: list[ReplayRequest] = []
    for i, entry in enumerate(plan.mix):
        # each entry draws from its own stream so reordering the mix keeps entries stable
        requests += generate(entry.generator, entry.count, f"{plan.seed}:{i}", **entry.params)
    if plan.shuffle:
        random.Random(f"{plan.seed}:order").shuffle(requests)
    return requests


def target_host(target: str) -> tuple[str, int]:
    parts = urlsplit(target if "//" in target else f"http://{target}")
    if parts.scheme not in ("http", ""):
        raise PlanError(f"only plain http targets are supported, got {target!r}")
    if not parts.hostname:
        raise PlanError(f"target has no host: {target!r}")
    return parts.hostname, parts.port or 80


def corpus_bytes(requests: list[ReplayRequest], target: str, replay_header: bool = True) -> bytes:
    """Every request's wire bytes as JSON lines (latin-1 text), for byte-level comparisons."""
    host, port = target_host(target)
    host_header = host if port == 80 else f"{host}:{port}"
    lines = []
    for req in requests:
        doc = req.to_json()
        doc["wire"] = req.to_wire(host_header, replay_header).decode("latin-1")
        lines.append(json.dumps(doc, separators=(",", ":"), ensure_ascii=True))
    return ("\n".join(lines) + "\n").encode("ascii") if lines else b""


@dataclass
class ReplaySummary:
    sent: int = 0
    responded: int = 0
    failed: int = 0
    statuses: Counter = field(default_factory=Counter)
    aborted: bool = False
    elapsed: float = 0.0

    def merge(self, other: ReplaySummary) -> ReplaySummary:
        return ReplaySummary(
            self.sent + other.sent, self.responded + other.responded, self.failed + other.failed,
            self.statuses + other.statuses, self.aborted or other.aborted, max(self.elapsed, other.elapsed),
        )

    def to_dict(self) -> dict:
        return {
            "sent": self.sent, "responded": self.responded, "failed": self.failed,
            "status_histogram": {str(k): v for k, v in sorted(self.statuses.items(), key=lambda kv: str(kv[0]))},
            "aborted": self.aborted, "elapsed_s": round(self.elapsed, 3),
        }


async def _send_one(host: str, port: int, wire: bytes, timeout: float) -> int | None:
    """Send one request, return the HTTP status (None when the reply is not HTTP)."""
    reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), timeout)
    try:
        writer.write(wire)
        await writer.drain()
        if writer.can_write_eof():
            writer.write_eof()
        data = await asyncio.wait_for(reader.read(), timeout)
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionError, OSError):
            pass
    if data.startswith(b"HTTP/"):
        try:
            return int(data.split(b" ", 2)[1])
        except (IndexError, ValueError):
            return None
    return None


async def replay(
    plan: ReplayPlan,
    requests: list[ReplayRequest] | None = None,
    *,
    replay_header: bool = True,
    timeout: float = 15.0,
) -> ReplaySummary:
    """Fire the expanded plan at ``plan.target``.

    An unreachable target aborts the run; the summary then covers what was sent so far.
    """
    host, port = target_host(plan.target)
    host_header = host if port == 80 else f"{host}:{port}"
    requests = expand(plan) if requests is None else requests
    summary = ReplaySummary()
    sem = asyncio.Semaphore(plan.concurrency)
    abort = asyncio.Event()
    start = time.monotonic()

    async def worker(i: int, req: ReplayRequest) -> None:
        if plan.pace > 0:
            delay = start + i / plan.pace - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
        async with sem:
            if abort.is_set():
                return
            wire = req.to_wire(host_header, replay_header)
            try:
                status = await _send_one(host, port, wire, timeout)
            except (ConnectionRefusedError, OSError) as exc:
                if isinstance(exc, ConnectionRefusedError) or getattr(exc, "errno", None) in (111, 113, 101):
                    abort.set()
                    summary.aborted = True
                    return
                summary.sent += 1
                summary.failed += 1
                return
            except asyncio.TimeoutError:
                summary.sent += 1
                summary.failed += 1
                return
            summary.sent += 1
            if status is not None:
                summary.responded += 1
                summary.statuses[status] += 1
            else:
                summary.statuses["none"] += 1

    await asyncio.gather(*(worker(i, r) for i, r in enumerate(requests)))
    summary.elapsed = time.monotonic() - start
    return summary
