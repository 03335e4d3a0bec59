"""Rendering and rough fingerprinting of non-HTTP payloads."""

from __future__ import annotations

import re

from ..httpwire import is_http

PREVIEW_BYTES = 64


def payload_repr(raw: bytes, limit: int = PREVIEW_BYTES) -> str:
    """Quoted preview of the leading bytes, non-printables as ``\\xHH``."""
    out = []
    for b in raw[:limit]:
        if 0x20 <= b < 0x7F and b not in (0x22, 0x5C):
            out.append(chr(b))
        else:
            out.append(f"\\x{b:02X}")
    return '"' + "".join(out) + ('..."' if len(raw) > limit else '"')


_RTSP = re.compile(rb"[A-Z_]+ \S+ RTSP/[0-9]\.[0-9]")
_IRC = re.compile(rb"(?:USER|NICK|PASS) \S")


def fingerprint_payload(raw: bytes) -> str:
    if not raw:
        return "empty"
    if raw.startswith(b"Gh0st"):
        return "gh0st-rat"
    if raw[:2] in (b"\x04\x01", b"\x04\x02"):
        return "socks4"
    if raw[0] == 0x05 and len(raw) >= 2 and len(raw) == 2 + raw[1]:
        return "socks5"
    if _RTSP.match(raw):
        return "rtsp"
    if _IRC.match(raw):
        return "irc"
    if is_http(raw):
        return "http"
    return "unknown"
