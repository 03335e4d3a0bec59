"""The REST honeypot: Phue URL routing, views, request logging and the TCP server."""

from __future__ import annotations

import asyncio
import enum
import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import unquote, urlsplit

from . import logstore, phue
from .httpwire import Capture, ParsedRequest, read_raw_request
from .logstore import RequestRecord, b64, encode_header_value, now_ms

log = logging.getLogger(__name__)

SHARED_ID_HEADER = "x-shared-id"
REPLAY_SRC_HEADER = "x-replay-src"


class Route(enum.Enum):
    API_ROOT = "ApiRoot"
    REGISTER = "Register"
    FULL_STATE = "FullState"
    LIGHTS = "Lights"
    LIGHT_STATE = "LightState"
    TEMPFILE = "Tempfile"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class RouteTarget:
    kind: Route
    captures: dict = field(default_factory=dict)


URL_PATTERNS: list[tuple[re.Pattern, Route]] = [
    (re.compile(r"/api/?"), Route.API_ROOT),
    (re.compile(r"/api/(?P<username>[^/]+)/?"), Route.FULL_STATE),
    (re.compile(r"/api/(?P<username>[^/]+)/lights/?"), Route.LIGHTS),
    (re.compile(r"/api/(?P<username>[^/]+)/lights/(?P<light_id>[^/]+)/state/?"), Route.LIGHT_STATE),
    (re.compile(r"/api/(?P<username>[^/]+)/tempfile/?"), Route.TEMPFILE),
]


def request_path(target: str) -> str:
    """Percent-decoded path of a request target (origin- or absolute-form)."""
    if target.startswith("/"):
        path = target.split("?", 1)[0].split("#", 1)[0]
    else:
        path = urlsplit(target).path or "/"
    return unquote(path)


def route(method: str, path: str) -> RouteTarget:
    for pattern, kind in URL_PATTERNS:
        m = pattern.fullmatch(path)
        if m is None:
            continue
        if kind is Route.API_ROOT and method.upper() == "POST":
            return RouteTarget(Route.REGISTER)
        return RouteTarget(kind, m.groupdict())
    return RouteTarget(Route.UNKNOWN)


@dataclass
class Response:
    status: int
    body: bytes
    content_type: str = "application/json"

    def to_wire(self, head_only: bool = False) -> bytes:
        reason = {200: "OK", 400: "Bad Request"}.get(self.status, "OK")
        head = (
            f"HTTP/1.1 {self.status} {reason}\r\n"
            f"Content-Type: {self.content_type}\r\n"
            f"Content-Length: {len(self.body)}\r\n"
            "Cache-Control: no-store, no-cache, must-revalidate, post-check=0, pre-check=0\r\n"
            "Pragma: no-cache\r\n"
            "Connection: close\r\n"
            "Access-Control-Allow-Origin: *\r\n"
            "\r\n"
        ).encode("ascii")
        return head if head_only else head + self.body


def json_response(doc) -> Response:
    return Response(200, json.dumps(doc, separators=(",", ":")).encode("utf-8"))


def _parse_json_body(body: bytes):
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        raise ValueError("invalid json") from None


REGISTER_KEYS = ("devicetype", "generateclientkey")


def _register(body: bytes, rng: random.Random) -> list:
    if body.strip():
        try:
            doc = _parse_json_body(body)
        except ValueError:
            return phue.invalid_json("/").envelope()
        if not isinstance(doc, dict):
            return phue.invalid_json("/").envelope()
        unknown = [k for k in doc if k not in REGISTER_KEYS]
        if unknown:
            return [phue.parameter_unavailable(k, f"/{k}").to_dict() for k in unknown]
    return [{"success": {"username": phue.generate_username(rng)}}]


def handle_request(request: ParsedRequest, bridge: phue.BridgeState, rng: random.Random) -> Response:
    method = request.method.upper()
    path = request_path(request.target)
    target = route(method, path)
    kind = target.kind
    user = target.captures.get("username")
    reading = method in ("GET", "HEAD")

    if kind is Route.REGISTER:
        return json_response(_register(request.body, rng))
    if kind is Route.API_ROOT:
        return json_response(phue.unauthorized("/").envelope())
    if kind is Route.UNKNOWN:
        return json_response(phue.resource_unavailable(path).envelope())
    if not phue.is_valid_username(user):
        return json_response(phue.unauthorized("/").envelope())

    template = bridge.template
    if kind is Route.FULL_STATE:
        if not reading:
            return json_response(phue.method_unavailable(method, "/").envelope())
        return json_response(phue.render_full_state(template, user))
    if kind is Route.LIGHTS:
        if not reading:
            return json_response(phue.method_unavailable(method, "/lights").envelope())
        return json_response(phue.render_full_state(template, user)["lights"])
    if kind is Route.TEMPFILE:
        if not reading:
            return json_response(phue.method_unavailable(method, "/tempfile").envelope())
        return Response(200, template.tempfile_raw)

    light_id = target.captures["light_id"]
    address = f"/lights/{light_id}/state"
    if method not in ("PUT", "POST"):
        return json_response(phue.method_unavailable(method, address).envelope())
    if light_id not in template.lights:
        return json_response(phue.resource_unavailable(f"/lights/{light_id}").envelope())
    try:
        doc = _parse_json_body(request.body)
    except ValueError:
        return json_response(phue.invalid_json(address).envelope())
    if not isinstance(doc, dict):
        return json_response(phue.invalid_json(address).envelope())
    return json_response(bridge.update_light(light_id, doc))


def build_record(
    capture: Capture,
    response: Response | None,
    *,
    node: str,
    peer: tuple[str, int],
    trust_replay_header: bool = False,
) -> RequestRecord:
    src_ip, src_port = peer
    req = capture.request
    resp_status = response.status if response is not None else None
    resp_body = b64(response.body) if response is not None else ""
    if req is None:
        return RequestRecord(
            ts=now_ms(), node=node, src_ip=src_ip, src_port=src_port,
            method=None, url=None, http_version=None, headers={},
            body_b64=b64(capture.raw), resp_status=resp_status, resp_body_b64=resp_body,
            valid_http=False, truncated=capture.truncated,
        )
    headers = {name: [encode_header_value(v) for v in values] for name, values in req.headers.items()}
    if trust_replay_header and req.header(REPLAY_SRC_HEADER):
        src_ip = req.header(REPLAY_SRC_HEADER).strip()
    return RequestRecord(
        ts=now_ms(), node=node, src_ip=src_ip, src_port=src_port,
        method=req.method, url=req.target, http_version=req.version, headers=headers,
        user_agent=req.header("user-agent") or logstore.NO_USER_AGENT,
        referer=req.header("referer"),
        body_b64=b64(req.body), resp_status=resp_status, resp_body_b64=resp_body,
        shared_id=req.header(SHARED_ID_HEADER),
        valid_http=True, truncated=capture.truncated,
    )


@dataclass
class Metrics:
    connections: int = 0
    records: int = 0
    log_failures: int = 0
    handler_errors: int = 0


class LogMiddleware:
    """Writes one record per connection; a failing disk never breaks the reply."""

    def __init__(self, log_file, node: str, trust_replay_header: bool = False, metrics: Metrics | None = None):
        self.log_file = Path(log_file)
        self.node = node
        self.trust_replay_header = trust_replay_header
        self.metrics = metrics or Metrics()

    def __call__(self, capture: Capture, response: Response | None, peer) -> RequestRecord:
        record = build_record(capture, response, node=self.node, peer=peer,
                              trust_replay_header=self.trust_replay_header)
        try:
            logstore.append(self.log_file, record)
            self.metrics.records += 1
        except OSError:
            self.metrics.log_failures += 1
            log.exception("failed to write request record")
        return record


class HoneypotServer:
    def __init__(
        self,
        bridge: phue.BridgeState,
        log_file,
        *,
        node: str = "node",
        seed: int | None = None,
        trust_replay_header: bool = False,
        read_timeout: float = 10.0,
        raw_idle: float = 1.0,
    ):
        self.bridge = bridge
        self.rng = random.Random(seed)
        self.metrics = Metrics()
        self.log_middleware = LogMiddleware(log_file, node, trust_replay_header, self.metrics)
        self.read_timeout = read_timeout
        self.raw_idle = raw_idle
        self._server: asyncio.base_events.Server | None = None

    async def handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self.metrics.connections += 1
        peer = writer.get_extra_info("peername") or ("0.0.0.0", 0)
        capture = Capture(b"", None)
        response = None
        try:
            capture = await read_raw_request(reader, timeout=self.read_timeout, raw_idle=self.raw_idle)
            if capture.request is not None:
                try:
                    response = handle_request(capture.request, self.bridge, self.rng)
                except Exception:
                    self.metrics.handler_errors += 1
                    log.exception("handler failed")
                    response = json_response(phue.resource_unavailable("/").envelope())
                writer.write(response.to_wire(head_only=capture.request.method.upper() == "HEAD"))
                await writer.drain()
        except (ConnectionError, OSError):
            pass
        finally:
            self.log_middleware(capture, response, peer[:2])
            try:
                writer.close()
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    async def start(self, host: str = "0.0.0.0", port: int = 80) -> asyncio.base_events.Server:
        self._server = await asyncio.start_server(self.handle_connection, host, port, backlog=1024, limit=1 << 21)
        return self._server

    @property
    def port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def serve_forever(self, host: str = "0.0.0.0", port: int = 80) -> None:
        server = await self.start(host, port)
        async with server:
            await server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
