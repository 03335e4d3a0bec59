"""Seeded generators for the attack traffic families seen against the Hue honeypot.

Every generator is a pure function of ``(n, seed)``: same inputs, same bytes.
"""

from __future__ import annotations

import ipaddress
import json
import random
from dataclasses import dataclass, field

from ..analyzer.signatures import ADMIN_KEYWORDS, URL_SCAN_TEMPLATES
from ..phue import ALERT_VALUES, EFFECT_VALUES, STATE_FIELDS, TOKEN_ALPHABET

JORGEE_UA = "Mozilla/5.0 Jorgee"
SHOOTER_UA = "shooter"

# distinct source addresses per user agent, as counted in the field data
IP_POOL_SIZES = {
    "jorgee": 360,
    "shooter": 92,
    "botlight": 20,
    "000modscan": 12,
    "mass": 4,
    "0000modscan": 12,
    "httpget": 7,
    "ioscan": 2,
    "scanner": 24,
    "raw": 11,
}

# top TOR exits seen in the api logs; the shooter pool starts with them
KNOWN_TOR_EXITS = (
    "104.223.123.98", "192.42.116.16", "89.234.157.254", "79.172.193.32", "204.85.191.30",
    "94.242.246.24", "94.242.246.23", "91.223.82.156", "5.254.79.66", "78.109.23.1",
    "176.126.252.11", "216.218.222.13", "163.172.212.115", "185.170.42.4", "109.163.234.9",
    "193.90.12.88", "185.170.41.8", "79.137.67.116", "163.172.67.180",
)

# payload kind -> user agent that sent it
MULTIPART_KINDS = {"botlight": "botlight", "empty": "000modscan", "mass": "mass"}
MASS_TOKENS = ("%A/telnet", "%A/xmpp", "%A/upnp")
MASS_REPEATS = 9944

URL_SCAN_UA = {
    "url-scan-01": "0000modscan", "url-scan-02": "0000modscan", "url-scan-03": "0000modscan",
    "url-scan-04": "0000modscan", "url-scan-05": "0000modscan", "url-scan-06": "0000modscan",
    "url-scan-07": "ioscan",
    "url-scan-08": "httpget", "url-scan-09": "httpget", "url-scan-10": "httpget",
}
MODSCAN_POST_URLS = ("/api/philips/hue/{32_chars}", "/api/philips2/hue-link/{32_chars}",
                     "/api/belkin/wemo/{32_chars}", "/api/philips1/hue/{32_chars}")

# leading bytes of the most common non-HTTP probes
RAW_PROBES = (
    b"@\x00\x00\x00B\xa4",
    b"OPTIONS / RTSP/1.0\r\n\r\n",
    b"Gh0st\xad\x00\x00\x00\xe0\x00\x00\x00x\x9cKS``\x98\xc3\xc0\xc0\xc0\x06",
    b"\x04\x01\x00P\xc0c\xf660\x00",
    b"USER test +iw test :Test Wuz Here\r\n",
    b"",
    b"\x05\x02\x00\x02",
)


@dataclass(frozen=True)
class ReplayRequest:
    """One connection's worth of attack traffic.

    ``raw`` set means the bytes go out verbatim (non-HTTP probes).
    """

    generator: str
    method: str = "GET"
    path: str = "/"
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""
    src_ip: str | None = None
    raw: bytes | None = None
    expected_tag: str | None = None

    def to_wire(self, host: str, replay_header: bool = True) -> bytes:
        if self.raw is not None:
            return self.raw
        lines = [f"{self.method} {self.path} HTTP/1.1", f"Host: {host}"]
        lines += [f"{k}: {v}" for k, v in self.headers]
        if replay_header and self.src_ip:
            lines.append(f"X-Replay-Src: {self.src_ip}")
        if self.body or self.method in ("POST", "PUT"):
            lines.append(f"Content-Length: {len(self.body)}")
        lines.append("Connection: close")
        return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1") + self.body

    def to_json(self) -> dict:
        return {
            "generator": self.generator, "method": self.method, "path": self.path,
            "headers": [list(h) for h in self.headers], "body": self.body.decode("latin-1"),
            "src_ip": self.src_ip, "raw": None if self.raw is None else self.raw.decode("latin-1"),
            "expected_tag": self.expected_tag,
        }


def _rng(seed, *salt) -> random.Random:
    return random.Random(":".join(str(s) for s in (seed, *salt)))


def ip_pool(name: str, seed, size: int | None = None) -> list[str]:
    size = IP_POOL_SIZES[name] if size is None else size
    rng = _rng(seed, "pool", name)
    pool: list[str] = list(KNOWN_TOR_EXITS[:size]) if name == "shooter" else []
    seen = set(pool)
    while len(pool) < size:
        addr = ipaddress.IPv4Address(rng.getrandbits(32))
        if not addr.is_global or addr.is_multicast or str(addr) in seen:
            continue
        seen.add(str(addr))
        pool.append(str(addr))
    return pool


def chars32(rng: random.Random) -> str:
    return "".join(rng.choice(TOKEN_ALPHABET) for _ in range(32))


def fill_template(template: str, rng: random.Random, number: int | None = None) -> str:
    out = template
    while "{32_chars}" in out:
        out = out.replace("{32_chars}", chars32(rng), 1)
    if "{0-750}" in out:
        out = out.replace("{0-750}", str(rng.randint(0, 750) if number is None else number))
    return out


def _jorgee_segment(rng: random.Random) -> str:
    words = rng.sample(ADMIN_KEYWORDS, rng.randint(1, 3))
    sep = rng.choice(("", "", "-", "_"))
    seg = sep.join(words)
    if rng.random() < 0.3:
        seg = seg.upper() if rng.random() < 0.5 else seg.capitalize()
    if rng.random() < 0.3:
        seg += str(rng.choice((2012, 2013, 2014, 2015, 2016, 2017, 3, 4)))
    return seg


def gen_jorgee(n: int, seed) -> list[ReplayRequest]:
    rng = _rng(seed, "jorgee")
    pool = ip_pool("jorgee", seed)
    out = []
    for _ in range(n):
        segments = [_jorgee_segment(rng) for _ in range(rng.randint(1, 2))]
        path = "/" + "/".join(segments) + "/"
        if rng.random() < 0.5:
            path = f"/http:/{rng.choice(pool)}:80" + path
        out.append(ReplayRequest("jorgee", "HEAD", path, (("User-Agent", JORGEE_UA),),
                                 src_ip=rng.choice(pool), expected_tag="jorgee-admin-scan"))
    return out


def _shooter_body(rng: random.Random) -> dict:
    keys = [k for k in STATE_FIELDS if rng.random() < 0.6] or ["on"]
    body = {}
    for key in keys:
        kind = STATE_FIELDS[key]
        if kind[0] == "bool":
            body[key] = rng.random() < 0.5
        elif kind[0] == "int":
            body[key] = rng.randint(kind[1], kind[2])
        else:
            body[key] = rng.choice(ALERT_VALUES if key == "alert" else EFFECT_VALUES)
    return body


def gen_shooter(n: int, seed) -> list[ReplayRequest]:
    rng = _rng(seed, "shooter")
    pool = ip_pool("shooter", seed)
    out = []
    for _ in range(n):
        body = json.dumps(_shooter_body(rng)).encode()
        out.append(ReplayRequest(
            "shooter", "POST", "/api/",
            (("User-Agent", SHOOTER_UA), ("Content-Type", "application/json")),
            body, rng.choice(pool), expected_tag="shooter-control",
        ))
    return out


def multipart_body(boundary16: str, payload: str) -> bytes:
    sep = "-" * 26 + boundary16
    return (
        f"{sep}\r\nContent-Disposition: form-data; name=\"on\"\r\n\r\ntrue\r\n"
        f"{sep}\r\nContent-Disposition: form-data; name=\"productid\"\r\n\r\n{payload}\r\n"
        f"{sep}--\r\n"
    ).encode("latin-1")


def gen_multipart_fuzz(n: int, seed, payload_kind: str = "botlight") -> list[ReplayRequest]:
    if payload_kind not in MULTIPART_KINDS:
        raise ValueError(f"unknown payload kind {payload_kind!r}; choose from {', '.join(MULTIPART_KINDS)}")
    ua = MULTIPART_KINDS[payload_kind]
    rng = _rng(seed, "multipart", payload_kind)
    pool = ip_pool(ua, seed)
    out = []
    for _ in range(n):
        boundary = "".join(rng.choice(TOKEN_ALPHABET) for _ in range(16))
        if payload_kind == "botlight":
            payload = "%0000" * rng.randint(1, 64)
        elif payload_kind == "mass":
            payload = rng.choice(MASS_TOKENS) * MASS_REPEATS
        else:
            payload = ""
        path = fill_template(rng.choice(MODSCAN_POST_URLS), rng) if payload_kind == "empty" else "/api/list/"
        headers = (
            ("User-Agent", ua),
            ("Content-Type", f"multipart/form-data; boundary={'-' * 24}{boundary}"),
        )
        out.append(ReplayRequest(f"multipart-{payload_kind}", "POST", path, headers,
                                 multipart_body(boundary, payload), rng.choice(pool), expected_tag="multipart-fuzz"))
    return out


def gen_url_scan(pattern_id, n: int, seed, sequential: bool = False) -> list[ReplayRequest]:
    tag = pattern_id if isinstance(pattern_id, str) else f"url-scan-{int(pattern_id):02d}"
    if tag not in URL_SCAN_TEMPLATES:
        raise ValueError(f"unknown url-scan pattern {pattern_id!r}; choose 1..10")
    template = URL_SCAN_TEMPLATES[tag]
    ua = URL_SCAN_UA[tag]
    rng = _rng(seed, tag)
    pool = ip_pool(ua, seed)
    out = []
    for i in range(n):
        number = i % 751 if sequential else None
        out.append(ReplayRequest(tag, "GET", fill_template(template, rng, number), (("User-Agent", ua),),
                                 src_ip=rng.choice(pool), expected_tag=tag))
    return out


SCANNER_PROFILES = (
    ("Mozilla/5.0 SF/2.10b", ("GET", "PUT", "FOO"), ("/sfi9876", "/{m}-sfi9876", "/.htaccess.aspx", "/admin.sfish")),
    ("Mozilla/5.00 (Nikto/2.1.5) (Evasions:None) (Test:map_codes)", ("GET",), ("/", "/cgi-bin/test.cgi", "/.git/HEAD")),
    ("masscan/1.0 (https://github.com/robertdavidgraham/masscan)", ("GET",), ("/",)),
    ("Python-urllib/2.7", ("GET",), ("/mysqladmin/", "/phpmyadmin2/", "/sqlweb/")),
    ("Mozilla/5.0 (Windows NT 5.1; rv:32.0) Gecko/20100101 Firefox/31.0", ("GET",),
     ("http://testp3.pospr.waw.pl/testproxy.php",)),
    ("Mozilla/5.0 (Macintosh; Intel Mac OS X 10.11; rv:47.0) Gecko/20100101 Firefox/47.0", ("GET",), ("/",)),
)


def gen_scanner(n: int, seed) -> list[ReplayRequest]:
    """Generic Internet-wide scanning plus the occasional browser visit."""
    rng = _rng(seed, "scanner")
    pool = ip_pool("scanner", seed)
    out = []
    for _ in range(n):
        ua, methods, paths = rng.choice(SCANNER_PROFILES)
        method = rng.choice(methods)
        path = rng.choice(paths).replace("{m}", method)
        out.append(ReplayRequest("scanner", method, path, (("User-Agent", ua),), src_ip=rng.choice(pool)))
    return out


def gen_raw_probe(n: int, seed) -> list[ReplayRequest]:
    rng = _rng(seed, "raw")
    return [ReplayRequest("raw-probe", raw=rng.choice(RAW_PROBES)) for _ in range(n)]


@dataclass(frozen=True)
class GeneratorSpec:
    fn: object
    kwargs: dict = field(default_factory=dict)


GENERATORS: dict[str, GeneratorSpec] = {
    "jorgee": GeneratorSpec(gen_jorgee),
    "shooter": GeneratorSpec(gen_shooter),
    "multipart-botlight": GeneratorSpec(gen_multipart_fuzz, {"payload_kind": "botlight"}),
    "multipart-empty": GeneratorSpec(gen_multipart_fuzz, {"payload_kind": "empty"}),
    "multipart-mass": GeneratorSpec(gen_multipart_fuzz, {"payload_kind": "mass"}),
    **{tag: GeneratorSpec(gen_url_scan, {"pattern_id": tag}) for tag in URL_SCAN_TEMPLATES},
    "scanner": GeneratorSpec(gen_scanner),
    "raw-probe": GeneratorSpec(gen_raw_probe),
}


def generate(generator_id: str, n: int, seed, **params) -> list[ReplayRequest]:
    if generator_id not in GENERATORS:
        raise ValueError(f"unknown generator {generator_id!r}; choose from {', '.join(GENERATORS)}")
    if n < 0:
        raise ValueError("count must be >= 0")
    spec = GENERATORS[generator_id]
    return spec.fn(n=n, seed=seed, **{**spec.kwargs, **params})
