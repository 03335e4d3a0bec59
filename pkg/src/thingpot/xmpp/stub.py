"""Loopback XMPP server stub, just enough protocol for the bridge and a controller client.

Not a real server: no roster storage, no federation. STARTTLS is offered only
when a server-side SSL context is supplied.
"""

from __future__ import annotations

import asyncio
import base64
import itertools
import ssl
from dataclasses import dataclass, field
from xml.sax.saxutils import quoteattr

from .stream import (
    NS_BIND, NS_CLIENT, NS_SASL, NS_TLS, StanzaReader, StreamClosed, bare, message_xml, q, stream_header,
    upgrade_tls,
)


@dataclass
class StubMessage:
    sender: str
    to: str
    body: str


@dataclass
class _Conn:
    writer: asyncio.StreamWriter
    jid: str = ""


@dataclass
class StubXmppServer:
    users: dict[str, str]
    domain: str = "localhost"
    close_after_auth: int = 0
    tls_context: ssl.SSLContext | None = None
    inbox: asyncio.Queue = field(default_factory=asyncio.Queue)
    auth_attempts: int = 0

    def __post_init__(self):
        self._clients: dict[str, _Conn] = {}
        self._server: asyncio.base_events.Server | None = None
        self._ids = itertools.count(1)
        self.connected = asyncio.Event()

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> int:
        self._server = await asyncio.start_server(self._handle, host, port)
        return self.port

    @property
    def port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def close(self) -> None:
        for conn in list(self._clients.values()):
            conn.writer.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def send_chat(self, to: str, sender: str, body: str) -> None:
        """Deliver a chat message to a connected client as if ``sender`` wrote it."""
        conn = self._clients.get(bare(to))
        if conn is None:
            raise LookupError(f"{to} is not connected")
        conn.writer.write(message_xml(conn.jid, body, from_=sender))
        await conn.writer.drain()

    async def _features(self, writer, authed: bool, offer_tls: bool = False) -> None:
        if authed:
            body = f"<bind xmlns='{NS_BIND}'/>"
        else:
            body = f"<mechanisms xmlns='{NS_SASL}'><mechanism>PLAIN</mechanism></mechanisms>"
            if offer_tls:
                body = f"<starttls xmlns='{NS_TLS}'/>" + body
        writer.write(stream_header(from_=self.domain, id_=f"s{next(self._ids)}")
                     + f"<stream:features>{body}</stream:features>".encode())
        await writer.drain()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        stanzas = StanzaReader(reader)
        conn = _Conn(writer)
        try:
            await stanzas.next()
            await self._features(writer, authed=False, offer_tls=self.tls_context is not None)
            if self.tls_context is not None and not await self._starttls(stanzas, reader, writer):
                return
            user = await self._authenticate(stanzas, writer)
            if user is None:
                return
            stanzas.reset()
            await stanzas.next()
            await self._features(writer, authed=True)
            if self.close_after_auth > 0:
                self.close_after_auth -= 1
                writer.write(b"</stream:stream>")
                await writer.drain()
                return
            await self._serve(stanzas, conn, user)
        except (StreamClosed, ConnectionError, OSError):
            pass
        finally:
            if conn.jid and self._clients.get(bare(conn.jid)) is conn:
                del self._clients[bare(conn.jid)]
            writer.close()

    async def _starttls(self, stanzas: StanzaReader, reader, writer) -> bool:
        elem = await stanzas.stanza()
        if elem.tag != q(NS_TLS, "starttls"):
            # client declined TLS; treat the stanza as its auth attempt
            stanzas.pushback(elem)
            return True
        writer.write(f"<proceed xmlns='{NS_TLS}'/>".encode())
        await writer.drain()
        await upgrade_tls(reader, writer, self.tls_context, server_side=True)
        stanzas.reset()
        await stanzas.next()
        await self._features(writer, authed=False)
        return True

    async def _authenticate(self, stanzas: StanzaReader, writer) -> str | None:
        elem = await stanzas.stanza()
        self.auth_attempts += 1
        try:
            _, user, password = base64.b64decode(elem.text or "").decode("utf-8").split("\0")
        except ValueError:
            user, password = "", None
        jid = f"{user}@{self.domain}"
        if elem.tag == q(NS_SASL, "auth") and self.users.get(jid) == password:
            writer.write(f"<success xmlns='{NS_SASL}'/>".encode())
            await writer.drain()
            return user
        writer.write(f"<failure xmlns='{NS_SASL}'><not-authorized/></failure></stream:stream>".encode())
        await writer.drain()
        return None

    async def _serve(self, stanzas: StanzaReader, conn: _Conn, user: str) -> None:
        writer = conn.writer
        while True:
            elem = await stanzas.stanza()
            if elem.tag == q(NS_CLIENT, "iq"):
                iq_id = quoteattr(elem.get("id", ""))
                bind = elem.find(q(NS_BIND, "bind"))
                if bind is not None:
                    resource = bind.findtext(q(NS_BIND, "resource")) or "stub"
                    conn.jid = f"{user}@{self.domain}/{resource}"
                    self._clients[bare(conn.jid)] = conn
                    writer.write(
                        f"<iq type='result' id={iq_id}><bind xmlns='{NS_BIND}'><jid>{conn.jid}</jid></bind></iq>".encode()
                    )
                else:
                    writer.write(f"<iq type='result' id={iq_id}/>".encode())
                await writer.drain()
            elif elem.tag == q(NS_CLIENT, "presence"):
                if elem.get("to") is None:
                    self.connected.set()
            elif elem.tag == q(NS_CLIENT, "message"):
                to = elem.get("to", "")
                body = elem.findtext(q(NS_CLIENT, "body")) or ""
                target = self._clients.get(bare(to))
                if target is not None and target is not conn:
                    target.writer.write(message_xml(to, body, from_=conn.jid))
                    await target.writer.drain()
                else:
                    await self.inbox.put(StubMessage(conn.jid, to, body))
