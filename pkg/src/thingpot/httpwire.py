"""HTTP/1.x request framing over raw bytes.

The honeypot cannot rely on a web framework here: it must keep whatever
arrived on the socket, including payloads that are not HTTP at all.
"""

from __future__ import annotations

import asyncio
import random
import re
import time
from dataclasses import dataclass, field

TCHAR = rb"!#$%&'*+\-.^_`|~0-9A-Za-z"
_TARGET = rb"[\x21-\x7e\x80-\xff]+"
REQUEST_LINE = re.compile(rb"([" + TCHAR + rb"]+) (" + _TARGET + rb") HTTP/([0-9])\.([0-9])(?:\r\n|\n|$)")
HEADER_LINE = re.compile(rb"([" + TCHAR + rb"]+):[ \t]*(.*?)[ \t]*")

SUPPORTED_VERSIONS = {"1.0", "1.1"}
MAX_BODY = 1 << 20
MAX_HEADER = 64 << 10
READ_TIMEOUT = 10.0
RAW_IDLE_TIMEOUT = 1.0


def is_http(raw: bytes) -> bool:
    """True when ``raw`` opens with an HTTP request line (``METHOD SP target SP HTTP/x.y``).

    The line may end in CRLF, a bare LF, or the end of the captured bytes.
    """
    return REQUEST_LINE.match(raw) is not None


def random_string(n: int, alphabet: str, rng: random.Random) -> str:
    if not alphabet:
        raise ValueError("alphabet must be non-empty")
    return "".join(rng.choice(alphabet) for _ in range(n))


def parse_header(raw: bytes) -> dict[str, list[bytes]]:
    """Parse a header block into lower-cased names mapped to their values in arrival order."""
    headers: dict[str, list[bytes]] = {}
    for line in raw.split(b"\n"):
        line = line.rstrip(b"\r")
        if not line:
            continue
        m = HEADER_LINE.fullmatch(line)
        if m is None:
            raise ValueError(f"malformed header line {line[:40]!r}")
        headers.setdefault(m.group(1).decode("ascii").lower(), []).append(m.group(2))
    return headers


@dataclass
class ParsedRequest:
    method: str
    target: str
    version: str
    headers: dict[str, list[bytes]] = field(default_factory=dict)
    body: bytes = b""

    def header(self, name: str) -> str | None:
        values = self.headers.get(name.lower())
        if not values:
            return None
        try:
            return values[0].decode("utf-8")
        except UnicodeDecodeError:
            return values[0].decode("latin-1")


@dataclass
class Capture:
    raw: bytes
    request: ParsedRequest | None
    truncated: bool = False
    timed_out: bool = False


def _header_end(buf: bytes) -> int:
    """Index just past the blank line ending the header block, or -1."""
    crlf = buf.find(b"\r\n\r\n")
    lf = buf.find(b"\n\n")
    ends = [i + 4 for i in [crlf] if i >= 0] + [i + 2 for i in [lf] if i >= 0]
    return min(ends) if ends else -1


def _viable_prefix(buf: bytes) -> bool:
    """Could ``buf`` still grow into an HTTP/1.0 or 1.1 request head?"""
    if not buf:
        return True
    nl = buf.find(b"\n")
    if nl < 0:
        if len(buf) > 8192:
            return False
        head = buf.split(b" ", 1)[0]
        return bool(re.fullmatch(rb"[" + TCHAR + rb"]*", head))
    m = REQUEST_LINE.match(buf[: nl + 1])
    return m is not None and f"{m.group(3).decode()}.{m.group(4).decode()}" in SUPPORTED_VERSIONS


def parse_head(head: bytes) -> ParsedRequest | None:
    line_end = head.find(b"\n")
    m = REQUEST_LINE.match(head[: line_end + 1])
    if m is None:
        return None
    version = f"{m.group(3).decode()}.{m.group(4).decode()}"
    if version not in SUPPORTED_VERSIONS:
        return None
    try:
        headers = parse_header(head[line_end + 1:])
    except ValueError:
        return None
    return ParsedRequest(m.group(1).decode("ascii"), m.group(2).decode("latin-1"), version, headers)


class _Reader:
    def __init__(self, reader: asyncio.StreamReader, deadline: float):
        self.reader = reader
        self.deadline = deadline
        self.eof = False
        self.timed_out = False

    async def chunk(self, idle: float | None = None) -> bytes:
        remaining = self.deadline - time.monotonic()
        wait = remaining if idle is None else min(idle, remaining)
        if wait <= 0:
            self.timed_out = True
            return b""
        try:
            data = await asyncio.wait_for(self.reader.read(65536), wait)
        except asyncio.TimeoutError:
            if idle is None or wait < idle:
                self.timed_out = True
            return b""
        except (ConnectionError, OSError):
            self.eof = True
            return b""
        if not data:
            self.eof = True
        return data


async def read_raw_request(
    reader: asyncio.StreamReader,
    *,
    max_body: int = MAX_BODY,
    max_header: int = MAX_HEADER,
    timeout: float = READ_TIMEOUT,
    raw_idle: float = RAW_IDLE_TIMEOUT,
) -> Capture:
    """Read one request off the connection.

    Whatever happens the raw bytes are returned; ``request`` is only set
    when they frame a complete HTTP/1.0 or 1.1 request.
    """
    src = _Reader(reader, time.monotonic() + timeout)
    buf = bytearray()

    async def finish_raw() -> Capture:
        truncated = False
        while not src.eof and not src.timed_out:
            if len(buf) > max_body:
                break
            data = await src.chunk(idle=raw_idle)
            if not data:
                break
            buf.extend(data)
        if len(buf) > max_body:
            del buf[max_body:]
            truncated = True
        return Capture(bytes(buf), None, truncated=truncated, timed_out=src.timed_out)

    end = -1
    while True:
        end = _header_end(bytes(buf))
        if end >= 0:
            break
        if not _viable_prefix(bytes(buf)) or len(buf) > max_header:
            return await finish_raw()
        data = await src.chunk()
        if not data:
            return await finish_raw()
        buf.extend(data)

    request = parse_head(bytes(buf[:end]))
    if request is None or len(buf[:end]) > max_header:
        return await finish_raw()

    body = bytearray(buf[end:])
    truncated = False
    chunked = b"chunked" in b",".join(request.headers.get("transfer-encoding", [])).lower()
    length_values = request.headers.get("content-length")
    if chunked:
        while not _chunked_complete(bytes(body)) and len(body) <= max_body:
            data = await src.chunk()
            if not data:
                break
            body.extend(data)
        body = bytearray(_dechunk(bytes(body)))
    elif length_values:
        try:
            want = int(length_values[0])
        except ValueError:
            return await finish_raw()
        if want < 0:
            return await finish_raw()
        while len(body) < want and len(body) <= max_body:
            data = await src.chunk()
            if not data:
                break
            body.extend(data)
        del body[want:]
    if len(body) > max_body:
        del body[max_body:]
        truncated = True
    request.body = bytes(body)
    return Capture(bytes(buf[:end]) + request.body, request, truncated=truncated, timed_out=src.timed_out)


def _chunked_complete(data: bytes) -> bool:
    return data.startswith(b"0\r\n\r\n") or b"\r\n0\r\n\r\n" in data


def _dechunk(data: bytes) -> bytes:
    out = bytearray()
    pos = 0
    while True:
        nl = data.find(b"\r\n", pos)
        if nl < 0:
            break
        try:
            size = int(data[pos:nl].split(b";")[0], 16)
        except ValueError:
            break
        if size == 0:
            break
        out += data[nl + 2: nl + 2 + size]
        pos = nl + 2 + size + 2
    return bytes(out)
