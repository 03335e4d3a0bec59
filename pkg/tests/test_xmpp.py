import asyncio
import contextlib
import re
import socket

import pytest
from hypothesis import given
from hypothesis import strategies as st

from harness import BULB, loopback
from conftest import TOKEN, LiveHoneypot
from thingpot import logstore
from thingpot.xmpp import AuthError, Command, EventLog, Verb, XmppBridge, connect, execute_command, \
    make_shared_id, parse_command
from thingpot.xmpp.commands import HELP_TEXT
from thingpot.xmpp.stub import StubXmppServer

# frozen from coreutils sha256sum over the literal byte strings
DIGEST_A1 = "a1f0c9eb2f80a2f6"  # printf 'a@x|1' | sha256sum
DIGEST_A2 = "b1ca7f7666209619"  # printf 'a@x|2' | sha256sum
DIGEST_BULB = "d61bcde689883f72"  # printf 'bulb@localhost|1500000000000' | sha256sum


@pytest.mark.parametrize("text,cmd", [
    ("ON", Command(Verb.ON)),
    ("off", Command(Verb.OFF)),
    ("Status", Command(Verb.STATUS)),
    ("bri 128", Command(Verb.BRI, 128)),
    ("BRI 0", Command(Verb.BRI, 0)),
    ("bri 254", Command(Verb.BRI, 254)),
    ("bri 999", Command(Verb.UNKNOWN)),
    ("bri 255", Command(Verb.UNKNOWN)),
    ("bri -1", Command(Verb.UNKNOWN)),
    ("bri", Command(Verb.UNKNOWN)),
    ("hello", Command(Verb.UNKNOWN)),
    ("", Command(Verb.UNKNOWN)),
])
def test_parse_command(text, cmd):
    assert parse_command(text) == cmd


@given(st.text(max_size=30))
def test_parse_command_total(text):
    cmd = parse_command(text)
    if cmd.verb is Verb.BRI:
        assert 0 <= cmd.arg <= 254
    else:
        assert cmd.arg is None


def test_shared_id_oracle():
    assert make_shared_id("a@x", 1) == DIGEST_A1
    assert make_shared_id("a@x", 2) == DIGEST_A2
    assert make_shared_id("bulb@localhost", 1_500_000_000_000) == DIGEST_BULB


def test_shared_id_deterministic_and_format():
    assert make_shared_id("a@x", 7) == make_shared_id("a@x", 7)


@given(jid=st.text(min_size=1, max_size=30), ts=st.integers(0, 2**63))
def test_shared_id_format(jid, ts):
    assert re.fullmatch(r"[0-9a-f]{16}", make_shared_id(jid, ts))


def test_shared_id_requires_jid():
    with pytest.raises(ValueError):
        make_shared_id("", 1)


# connection handling against the stub server

def run_with_stub(users, coro_fn, **stub_kw):
    async def main():
        stub = StubXmppServer(users, **stub_kw)
        await stub.start()
        try:
            return await coro_fn(stub)
        finally:
            await stub.close()

    return asyncio.run(main())


def test_connect_happy_path():
    events = []

    async def go(stub):
        session = await connect("127.0.0.1", stub.port, BULB, "pw", event_sink=events.append, tls="never")
        await asyncio.wait_for(stub.connected.wait(), 5)
        await session.close()

    run_with_stub({BULB: "pw"}, go)
    presence = [e for e in events if e.kind == "stream" and e.direction == "out" and e.payload == "presence"]
    assert len(presence) == 1
    assert all(e.kind == "stream" for e in events)


def test_connect_wrong_password():
    async def go(stub):
        with pytest.raises(AuthError):
            await connect("127.0.0.1", stub.port, BULB, "nope", tls="never")

    run_with_stub({BULB: "pw"}, go)


def test_bridge_logs_auth_failure_and_backs_off(tmp_path):
    log = tmp_path / "x.jsonl"

    async def go(stub):
        bridge = XmppBridge("127.0.0.1", stub.port, BULB, "bad", "http://127.0.0.1:9/api/x", EventLog(log),
                            tls="never", backoff_base=0.01, max_attempts=3)
        await asyncio.wait_for(bridge.run(), 10)
        return stub.auth_attempts

    attempts = run_with_stub({BULB: "pw"}, go)
    events, _ = logstore.read_logs([log])
    payloads = [e.payload for e in events]
    assert attempts == 3
    assert sum(p.startswith("auth failure") for p in payloads) == 3
    delays = [float(p.split()[-1].rstrip("s")) for p in payloads if p.startswith("reconnect in")]
    assert delays == [0.01, 0.02]


def test_bridge_reconnects_after_stream_close(tmp_path):
    log = tmp_path / "x.jsonl"

    async def go(stub):
        bridge = XmppBridge("127.0.0.1", stub.port, BULB, "pw", "http://127.0.0.1:9/api/x", EventLog(log),
                            tls="never", backoff_base=0.01)
        task = asyncio.create_task(bridge.run())
        try:
            await asyncio.wait_for(bridge.ready.wait(), 10)
        finally:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    run_with_stub({BULB: "pw"}, go, close_after_auth=1)
    payloads = [e.payload for e in logstore.read_logs([log])[0]]
    assert any(p.startswith("reconnect in") for p in payloads)
    assert payloads.count("presence") == 1


def test_connect_refused_is_logged(tmp_path):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    log = tmp_path / "x.jsonl"
    bridge = XmppBridge("127.0.0.1", port, BULB, "pw", "http://127.0.0.1:9/api/x", EventLog(log),
                        backoff_base=0.01, max_attempts=2)
    asyncio.run(asyncio.wait_for(bridge.run(), 10))
    payloads = [e.payload for e in logstore.read_logs([log])[0]]
    assert sum(p.startswith("connect failed") for p in payloads) == 2


# execute_command with a recording session

class RecordingSession:
    jid = BULB

    def __init__(self):
        self.events = []

    def event(self, direction, kind, remote, payload, shared_id=None, error=False, ts=None):
        self.events.append((direction, kind, payload, shared_id, error))


def execute(cmd, endpoint):
    session = RecordingSession()
    reply = asyncio.run(execute_command(cmd, session, endpoint, shared_id="00ff00ff00ff00ff", remote_jid="u@x"))
    return reply, session.events


def test_execute_on_hits_rest(live):
    reply, events = execute(Command(Verb.ON), f"http://127.0.0.1:{live.port}/api/{TOKEN}")
    assert "on" in reply
    live.wait_records(1)
    (rec,), _ = logstore.read_logs([live.log_file])
    assert (rec.method, rec.url) == ("PUT", f"/api/{TOKEN}/lights/1/state")
    assert rec.body == b'{"on": true}'
    assert rec.shared_id == "00ff00ff00ff00ff"
    assert [(d, k) for d, k, *_ in events] == [("out", "api")]


def test_execute_unknown_makes_no_call(live):
    reply, events = execute(Command(Verb.UNKNOWN), f"http://127.0.0.1:{live.port}/api/{TOKEN}")
    assert reply == HELP_TEXT
    assert events == []
    assert live.server.metrics.connections == 0


def test_execute_status_reads_after_write(live):
    endpoint = f"http://127.0.0.1:{live.port}/api/{TOKEN}"
    execute(Command(Verb.BRI, 77), endpoint)
    reply, _ = execute(Command(Verb.STATUS), endpoint)
    assert "bri 77" in reply


def test_execute_api_unreachable():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    reply, events = execute(Command(Verb.OFF), f"http://127.0.0.1:{port}/api/{TOKEN}")
    assert reply == "device unavailable"
    (direction, kind, _, sid, error), = events
    assert (direction, kind, sid, error) == ("out", "api", "00ff00ff00ff00ff", True)


# end to end

def test_loopback_chain(tmp_path):
    replies, rest, xmpp = loopback(tmp_path, ["on", "bri 42", "status", "hello", "off"])
    assert replies[0] == "light 1 is on"
    assert "bri 42" in replies[2]
    assert replies[3] == HELP_TEXT
    assert replies[4] == "light 1 is off"
    assert len(rest) == 4
    chat_in = [e for e in xmpp if e.kind == "chat" and e.direction == "in"]
    assert len(chat_in) == 5
    for e in chat_in:
        same = [x for x in xmpp if x.shared_id == e.shared_id]
        assert sum(x.kind == "chat" and x.direction == "out" for x in same) == 1
        api_calls = sum(x.kind == "api" for x in same)
        assert api_calls == (0 if e.payload == "hello" else 1)
        assert sum(r.shared_id == e.shared_id for r in rest) == api_calls
    result = logstore.correlate(rest, xmpp)
    assert len(result.sessions) == 4 and result.rest_orphans == {}
    # the help reply is the only xmpp-side id without a REST partner
    assert len(result.xmpp_orphans) == 1


@pytest.fixture(scope="module")
def tls_pair(tmp_path_factory):
    """Self-signed localhost certificate: (server context, client context trusting it)."""
    import ssl
    import subprocess

    d = tmp_path_factory.mktemp("tls")
    subprocess.run(["openssl", "req", "-x509", "-newkey", "rsa:2048", "-nodes", "-days", "1",
                    "-subj", "/CN=localhost", "-addext", "subjectAltName=DNS:localhost,IP:127.0.0.1",
                    "-keyout", str(d / "key.pem"), "-out", str(d / "cert.pem")],
                   check=True, capture_output=True)
    server = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
    server.load_cert_chain(d / "cert.pem", d / "key.pem")
    client = ssl.create_default_context(cafile=str(d / "cert.pem"))
    return server, client


def test_starttls_negotiated(tls_pair):
    server_ctx, client_ctx = tls_pair
    events = []

    async def go(stub):
        session = await connect("127.0.0.1", stub.port, BULB, "pw", event_sink=events.append,
                                tls="required", tls_context=client_ctx)
        await asyncio.wait_for(stub.connected.wait(), 5)
        assert session.writer.get_extra_info("ssl_object") is not None
        await stub.send_chat(BULB, "alice@localhost/phone", "status")
        msg = await asyncio.wait_for(session.next_chat(), 5)
        await session.close()
        return msg

    msg = run_with_stub({BULB: "pw"}, go, tls_context=server_ctx)
    assert msg.body == "status"
    assert [e.payload for e in events][:2] == ["stream opened", "starttls"]


def test_starttls_untrusted_cert_rejected(tls_pair):
    import ssl

    server_ctx, _ = tls_pair

    async def go(stub):
        with pytest.raises(ssl.SSLError):
            await connect("127.0.0.1", stub.port, BULB, "pw", tls="auto", tls_context=ssl.create_default_context())

    run_with_stub({BULB: "pw"}, go, tls_context=server_ctx)


def test_tls_never_skips_offer(tls_pair):
    server_ctx, _ = tls_pair

    async def go(stub):
        session = await connect("127.0.0.1", stub.port, BULB, "pw", tls="never")
        assert session.writer.get_extra_info("ssl_object") is None
        await session.close()

    run_with_stub({BULB: "pw"}, go, tls_context=server_ctx)


def test_tls_required_but_not_offered():
    async def go(stub):
        with pytest.raises(ConnectionError, match="STARTTLS"):
            await connect("127.0.0.1", stub.port, BULB, "pw", tls="required")

    run_with_stub({BULB: "pw"}, go)
