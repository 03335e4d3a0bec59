import asyncio
import socket
import threading

import pytest

from thingpot import phue
from thingpot.rest import HoneypotServer

TOKEN = "a1b2c3d4e5f6a7b8c9d0e1f2a3b4c5d6"


class LiveHoneypot:
    """A honeypot serving on loopback from its own event-loop thread."""

    def __init__(self, log_file, port=0, **kwargs):
        self.log_file = log_file
        self.port = port
        self.loop = asyncio.new_event_loop()
        self.server = HoneypotServer(phue.BridgeState(phue.load_data_dir()), log_file, **kwargs)
        self._thread = threading.Thread(target=self.loop.run_forever, daemon=True)

    def __enter__(self):
        self._thread.start()
        asyncio.run_coroutine_threadsafe(self.server.start("127.0.0.1", self.port), self.loop).result(5)
        self.port = self.server.port
        return self

    def __exit__(self, *exc):
        asyncio.run_coroutine_threadsafe(self.server.close(), self.loop).result(5)
        self.loop.call_soon_threadsafe(self.loop.stop)
        self._thread.join(5)
        self.loop.close()

    def send(self, data: bytes, half_close: bool = True, timeout: float = 5.0) -> bytes:
        with socket.create_connection(("127.0.0.1", self.port), timeout=timeout) as sock:
            sock.sendall(data)
            if half_close:
                sock.shutdown(socket.SHUT_WR)
            chunks = []
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                chunks.append(chunk)
        return b"".join(chunks)

    def wait_records(self, n: int, timeout: float = 5.0) -> None:
        import time

        deadline = time.monotonic() + timeout
        while self.server.metrics.records + self.server.metrics.log_failures < n:
            if time.monotonic() > deadline:
                raise TimeoutError(f"only {self.server.metrics.records} records")
            time.sleep(0.01)


@pytest.fixture
def template():
    return phue.load_data_dir()


@pytest.fixture
def live(tmp_path):
    with LiveHoneypot(tmp_path / "rest.jsonl", seed=7, raw_idle=0.2) as hp:
        yield hp


def http_body(response: bytes) -> bytes:
    return response.split(b"\r\n\r\n", 1)[1]


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
