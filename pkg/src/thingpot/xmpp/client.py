"""A small XMPP client: SASL PLAIN, optional STARTTLS, resource binding, chat."""

from __future__ import annotations

import asyncio
import base64
import itertools
import logging
import ssl
from dataclasses import dataclass
from typing import Callable
from xml.etree import ElementTree as ET
from xml.sax.saxutils import quoteattr

from ..logstore import XmppEvent, now_ms
from .stream import (
    NS_BIND, NS_CLIENT, NS_SASL, NS_SESSION, NS_TLS, StanzaReader, StreamClosed, bare, message_xml, q, stream_header,
    upgrade_tls,
)

log = logging.getLogger(__name__)

EventSink = Callable[[XmppEvent], None]


class AuthError(ConnectionError):
    pass


@dataclass
class ChatMessage:
    sender: str
    body: str


class XmppSession:
    def __init__(self, reader, writer, jid: str, event_sink: EventSink | None = None):
        self.reader = reader
        self.writer = writer
        self.jid = jid
        self.bound_jid = jid
        self.stanzas = StanzaReader(reader)
        self._sink = event_sink or (lambda ev: None)
        self._ids = itertools.count(1)

    @property
    def domain(self) -> str:
        return bare(self.jid).split("@", 1)[-1]

    def event(self, direction: str, kind: str, remote: str, payload: str,
              shared_id: str | None = None, error: bool = False, ts: int | None = None) -> None:
        self._sink(XmppEvent(
            ts=now_ms() if ts is None else ts, direction=direction, kind=kind,
            local_jid=bare(self.jid), remote_jid=remote, payload=payload,
            shared_id=shared_id, error=error,
        ))

    async def send(self, data: bytes) -> None:
        self.writer.write(data)
        await self.writer.drain()

    async def _open_stream(self) -> ET.Element:
        self.stanzas.reset()
        await self.send(stream_header(to=self.domain))
        while True:
            kind, elem = await self.stanzas.next()
            if kind == "stanza" and elem.tag == q("http://etherx.jabber.org/streams", "features"):
                return elem
            if kind == "close":
                raise StreamClosed("stream closed during negotiation")

    async def _starttls(self, host: str, context: ssl.SSLContext) -> None:
        await self.send(f"<starttls xmlns='{NS_TLS}'/>".encode())
        reply = await self.stanzas.stanza()
        if reply.tag != q(NS_TLS, "proceed"):
            raise ConnectionError("server refused STARTTLS")
        await upgrade_tls(self.reader, self.writer, context, server_hostname=host)

    async def _auth_plain(self, password: str) -> None:
        user = bare(self.jid).split("@", 1)[0]
        token = base64.b64encode(f"\0{user}\0{password}".encode("utf-8")).decode("ascii")
        await self.send(f"<auth xmlns='{NS_SASL}' mechanism='PLAIN'>{token}</auth>".encode())
        reply = await self.stanzas.stanza()
        if reply.tag != q(NS_SASL, "success"):
            condition = next((child.tag.split("}")[-1] for child in reply), "failure")
            raise AuthError(f"authentication failed: {condition}")

    async def _iq(self, payload: str) -> ET.Element:
        iq_id = f"tp{next(self._ids)}"
        await self.send(f"<iq type='set' id='{iq_id}'>{payload}</iq>".encode())
        while True:
            elem = await self.stanzas.stanza()
            if elem.tag == q(NS_CLIENT, "iq") and elem.get("id") == iq_id:
                if elem.get("type") != "result":
                    raise ConnectionError(f"iq {iq_id} failed")
                return elem

    async def negotiate(self, host: str, password: str, tls: str, tls_context: ssl.SSLContext | None) -> None:
        features = await self._open_stream()
        self.event("out", "stream", self.domain, "stream opened")
        if features.find(q(NS_TLS, "starttls")) is not None and tls != "never":
            await self._starttls(host, tls_context or ssl.create_default_context())
            self.event("out", "stream", self.domain, "starttls")
            features = await self._open_stream()
        elif tls == "required":
            raise ConnectionError("server does not offer STARTTLS")
        mechanisms = [m.text for m in features.iter(q(NS_SASL, "mechanism"))]
        if "PLAIN" not in mechanisms:
            raise AuthError(f"PLAIN not offered (got {mechanisms})")
        await self._auth_plain(password)
        self.event("in", "stream", self.domain, "auth success")
        features = await self._open_stream()
        resource = self.jid.split("/", 1)[1] if "/" in self.jid else "thingpot"
        reply = await self._iq(f"<bind xmlns='{NS_BIND}'><resource>{resource}</resource></bind>")
        jid_elem = reply.find(f"{q(NS_BIND, 'bind')}/{q(NS_BIND, 'jid')}")
        if jid_elem is not None and jid_elem.text:
            self.bound_jid = jid_elem.text
        session = features.find(q(NS_SESSION, "session"))
        if session is not None and session.find(q(NS_SESSION, "optional")) is None:
            await self._iq(f"<session xmlns='{NS_SESSION}'/>")
        await self.send(b"<presence/>")
        self.event("out", "stream", self.domain, "presence")

    async def send_chat(self, to: str, body: str) -> None:
        await self.send(message_xml(to, body))

    async def next_chat(self) -> ChatMessage:
        """Wait for the next chat message, answering presence subscriptions and pings on the way."""
        while True:
            elem = await self.stanzas.stanza()
            if elem.tag == q(NS_CLIENT, "message"):
                body = elem.find(q(NS_CLIENT, "body"))
                if body is not None and body.text is not None and elem.get("type", "normal") in ("chat", "normal"):
                    return ChatMessage(elem.get("from", ""), body.text)
            elif elem.tag == q(NS_CLIENT, "presence") and elem.get("type") == "subscribe":
                sender = elem.get("from", "")
                await self.send(f"<presence to={quoteattr(bare(sender))} type='subscribed'/>".encode())
                self.event("out", "stream", sender, "subscribed")
            elif elem.tag == q(NS_CLIENT, "iq") and elem.get("type") in ("get", "set"):
                await self._answer_iq(elem)

    async def _answer_iq(self, elem: ET.Element) -> None:
        to = quoteattr(elem.get("from", self.domain))
        iq_id = quoteattr(elem.get("id", ""))
        if elem.find("{urn:xmpp:ping}ping") is not None:
            await self.send(f"<iq type='result' to={to} id={iq_id}/>".encode())
        else:
            await self.send(
                f"<iq type='error' to={to} id={iq_id}><error type='cancel'>"
                "<service-unavailable xmlns='urn:ietf:params:xml:ns:xmpp-stanzas'/></error></iq>".encode()
            )

    async def close(self) -> None:
        try:
            await self.send(b"</stream:stream>")
        except (ConnectionError, OSError):
            pass
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


async def connect(
    server_host: str,
    port: int,
    jid: str,
    password: str,
    *,
    event_sink: EventSink | None = None,
    tls: str = "auto",
    tls_context: ssl.SSLContext | None = None,
    timeout: float = 30.0,
) -> XmppSession:
    """Open an authenticated session with presence sent.

    ``tls`` is one of ``auto`` (STARTTLS when offered), ``required`` or ``never``.
    """
    reader, writer = await asyncio.wait_for(asyncio.open_connection(server_host, port), timeout)
    session = XmppSession(reader, writer, jid, event_sink)
    try:
        await asyncio.wait_for(session.negotiate(server_host, password, tls, tls_context), timeout)
    except BaseException:
        writer.close()
        raise
    return session
