"""XMPP-controlled bulb: chat commands become REST calls tagged with a shared_id."""

from __future__ import annotations

import asyncio
import json
import logging
import urllib.error
import urllib.request
from pathlib import Path

from .. import logstore
from ..logstore import now_ms
from .client import AuthError, XmppSession, connect
from .commands import HELP_TEXT, Command, Verb, make_shared_id, parse_command
from .stream import StreamClosed

log = logging.getLogger(__name__)

SHARED_ID_HEADER = "X-Shared-Id"
MESSAGE_DEADLINE = 10.0


class EventLog:
    def __init__(self, path):
        self.path = Path(path)

    def __call__(self, event: logstore.XmppEvent) -> None:
        try:
            logstore.append(self.path, event)
        except OSError:
            log.exception("failed to write xmpp event")


def _http(method: str, url: str, body: bytes | None, shared_id: str, timeout: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=body, method=method)
    req.add_header(SHARED_ID_HEADER, shared_id)
    req.add_header("User-Agent", "thingpot-xmpp-bridge")
    if body is not None:
        req.add_header("Content-Type", "application/json")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return resp.status, resp.read()


def _summarize_update(results: list, light_id: str) -> str:
    parts = []
    for item in results:
        if "success" in item:
            for address, value in item["success"].items():
                name = address.rsplit("/", 1)[-1]
                if name == "on":
                    parts.append(f"light {light_id} is {'on' if value else 'off'}")
                else:
                    parts.append(f"light {light_id} {name} set to {value}")
        elif "error" in item:
            parts.append(f"error: {item['error'].get('description', 'unknown')}")
    return "; ".join(parts) or "no change"


def _summarize_state(doc: dict, light_id: str) -> str:
    try:
        light = doc["lights"][light_id]
        state = light["state"]
    except (KeyError, TypeError):
        return "device unavailable"
    return f"{light.get('name', 'light ' + light_id)}: {'on' if state.get('on') else 'off'}, bri {state.get('bri')}"


async def execute_command(
    cmd: Command,
    session: XmppSession,
    api_endpoint: str,
    *,
    shared_id: str,
    remote_jid: str,
    light_id: str = "1",
    timeout: float = MESSAGE_DEADLINE,
) -> str:
    """Run one command against the REST API and return the chat reply text.

    ``api_endpoint`` is the bridge base including the username,
    e.g. ``http://127.0.0.1:8080/api/<username>``.
    """
    if cmd.verb is Verb.UNKNOWN:
        return HELP_TEXT
    base = api_endpoint.rstrip("/")
    if cmd.verb is Verb.STATUS:
        method, url, body = "GET", base, None
    else:
        update = {"on": True} if cmd.verb is Verb.ON else {"on": False} if cmd.verb is Verb.OFF else {"bri": cmd.arg}
        method, url, body = "PUT", f"{base}/lights/{light_id}/state", json.dumps(update).encode()
    request_text = f"{method} {url}" + (f" {body.decode()}" if body else "")
    try:
        status, payload = await asyncio.to_thread(_http, method, url, body, shared_id, timeout)
        doc = json.loads(payload)
    except (urllib.error.URLError, OSError, ValueError) as exc:
        session.event("out", "api", url, f"{request_text} -> {exc}", shared_id=shared_id, error=True)
        return "device unavailable"
    session.event("out", "api", url, f"{request_text} -> {status} {payload.decode('utf-8', 'replace')}",
                  shared_id=shared_id)
    if cmd.verb is Verb.STATUS:
        return _summarize_state(doc, light_id) if isinstance(doc, dict) else "device unavailable"
    return _summarize_update(doc, light_id) if isinstance(doc, list) else "device unavailable"


class XmppBridge:
    """Keeps one session alive and handles its chat messages strictly in order."""

    def __init__(
        self,
        server_host: str,
        port: int,
        jid: str,
        password: str,
        api_endpoint: str,
        event_log,
        *,
        light_id: str = "1",
        tls: str = "auto",
        backoff_base: float = 1.0,
        backoff_max: float = 60.0,
        max_attempts: int | None = None,
    ):
        self.server_host = server_host
        self.port = port
        self.jid = jid
        self.password = password
        self.api_endpoint = api_endpoint
        self.event_log = event_log
        self.light_id = light_id
        self.tls = tls
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self.max_attempts = max_attempts
        self.session: XmppSession | None = None
        self.ready = asyncio.Event()
        self._last_ts = 0

    def _ts(self) -> int:
        # strictly increasing so back-to-back messages never share an id
        self._last_ts = max(now_ms(), self._last_ts + 1)
        return self._last_ts

    async def handle_message(self, session: XmppSession, sender: str, body: str) -> str:
        ts = self._ts()
        shared_id = make_shared_id(sender, ts)
        session.event("in", "chat", sender, body, shared_id=shared_id, ts=ts)
        cmd = parse_command(body)
        try:
            reply = await asyncio.wait_for(
                execute_command(cmd, session, self.api_endpoint, shared_id=shared_id,
                                remote_jid=sender, light_id=self.light_id),
                MESSAGE_DEADLINE,
            )
        except asyncio.TimeoutError:
            session.event("out", "api", self.api_endpoint, "deadline exceeded", shared_id=shared_id, error=True)
            reply = "device unavailable"
        await session.send_chat(sender, reply)
        session.event("out", "chat", sender, reply, shared_id=shared_id)
        return reply

    def _log_stream(self, payload: str, error: bool = False) -> None:
        domain = self.jid.split("@", 1)[-1].split("/", 1)[0]
        self.event_log(logstore.XmppEvent(
            ts=now_ms(), direction="out", kind="stream", local_jid=self.jid.split("/", 1)[0],
            remote_jid=domain, payload=payload, error=error,
        ))

    async def run(self) -> None:
        attempt = 0
        delay = self.backoff_base
        while self.max_attempts is None or attempt < self.max_attempts:
            attempt += 1
            try:
                session = await connect(self.server_host, self.port, self.jid, self.password,
                                        event_sink=self.event_log, tls=self.tls)
            except AuthError as exc:
                self._log_stream(f"auth failure: {exc}", error=True)
            except (ConnectionError, OSError, asyncio.TimeoutError) as exc:
                self._log_stream(f"connect failed: {exc}", error=True)
            else:
                self.session = session
                self.ready.set()
                delay = self.backoff_base
                try:
                    while True:
                        msg = await session.next_chat()
                        await self.handle_message(session, msg.sender, msg.body)
                except (StreamClosed, ConnectionError, OSError) as exc:
                    self._log_stream(f"stream lost: {exc}", error=True)
                finally:
                    self.ready.clear()
                    self.session = None
                    await session.close()
            if self.max_attempts is not None and attempt >= self.max_attempts:
                break
            self._log_stream(f"reconnect in {delay:g}s")
            await asyncio.sleep(delay)
            delay = min(delay * 2, self.backoff_max)
