"""Incremental XML stream reader shared by the client and the test server."""

from __future__ import annotations

import asyncio
import ssl
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

NS_STREAM = "http://etherx.jabber.org/streams"
NS_CLIENT = "jabber:client"
NS_TLS = "urn:ietf:params:xml:ns:xmpp-tls"
NS_SASL = "urn:ietf:params:xml:ns:xmpp-sasl"
NS_BIND = "urn:ietf:params:xml:ns:xmpp-bind"
NS_SESSION = "urn:ietf:params:xml:ns:xmpp-session"


def q(ns: str, tag: str) -> str:
    return f"{{{ns}}}{tag}"


class StreamClosed(ConnectionError):
    pass


async def upgrade_tls(reader: asyncio.StreamReader, writer: asyncio.StreamWriter, context: ssl.SSLContext,
                      *, server_side: bool = False, server_hostname: str | None = None) -> None:
    """Wrap an open stream pair in TLS in place (STARTTLS)."""
    if hasattr(writer, "start_tls") and not server_side:
        await writer.start_tls(context, server_hostname=server_hostname)
        return
    # Python < 3.11 has no StreamWriter.start_tls: swap the transport under the existing pair
    loop = asyncio.get_running_loop()
    transport = writer.transport
    protocol = transport.get_protocol()
    tls_transport = await loop.start_tls(transport, protocol, context, server_side=server_side,
                                         server_hostname=None if server_side else server_hostname)
    writer._transport = tls_transport
    reader._transport = tls_transport
    protocol._transport = tls_transport


def stream_header(to: str | None = None, from_: str | None = None, id_: str | None = None) -> bytes:
    attrs = "".join(
        f" {name}={quoteattr(value)}"
        for name, value in (("to", to), ("from", from_), ("id", id_))
        if value
    )
    return (
        "<?xml version='1.0'?>"
        f"<stream:stream xmlns='{NS_CLIENT}' xmlns:stream='{NS_STREAM}' version='1.0'{attrs}>"
    ).encode("utf-8")


def message_xml(to: str, body: str, from_: str | None = None, type_: str = "chat") -> bytes:
    frm = f" from={quoteattr(from_)}" if from_ else ""
    return f"<message to={quoteattr(to)}{frm} type={quoteattr(type_)}><body>{escape(body)}</body></message>".encode(
        "utf-8"
    )


def bare(jid: str) -> str:
    return jid.split("/", 1)[0]


class StanzaReader:
    """Turns socket bytes into ('open', root) / ('stanza', elem) / ('close', None) events."""

    def __init__(self, reader: asyncio.StreamReader):
        self.reader = reader
        self._events: list[tuple[str, ET.Element | None]] = []
        self.reset()

    def reset(self) -> None:
        self._parser = ET.XMLPullParser(events=("start", "end"))
        self._depth = 0
        self._root: ET.Element | None = None

    def pushback(self, elem: ET.Element) -> None:
        self._events.insert(0, ("stanza", elem))

    def _drain(self) -> None:
        for event, elem in self._parser.read_events():
            if event == "start":
                if self._depth == 0:
                    self._root = elem
                    self._events.append(("open", elem))
                self._depth += 1
            else:
                self._depth -= 1
                if self._depth == 1:
                    self._events.append(("stanza", elem))
                    self._root.remove(elem)
                elif self._depth == 0:
                    self._events.append(("close", None))

    async def next(self) -> tuple[str, ET.Element | None]:
        while not self._events:
            data = await self.reader.read(65536)
            if not data:
                raise StreamClosed("connection closed by peer")
            try:
                self._parser.feed(data)
            except ET.ParseError as exc:
                raise StreamClosed(f"malformed XML: {exc}") from exc
            self._drain()
        return self._events.pop(0)

    async def stanza(self) -> ET.Element:
        """Next top-level stanza, skipping stream-open events."""
        while True:
            kind, elem = await self.next()
            if kind == "stanza":
                return elem
            if kind == "close":
                raise StreamClosed("stream closed by peer")
