"""Declarative attack signatures and the built-in registry of observed attack families."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..logstore import RequestRecord
from ..phue import STATE_FIELDS


class Category(enum.Enum):
    TARGETED_CONTROL = "TargetedControl"
    MULTIPART_FUZZ = "MultipartFuzz"
    URL_SCAN = "UrlScan"
    GENERIC_SCANNER = "GenericScanner"
    OTHER = "Other"


@dataclass(frozen=True)
class AttackSignature:
    """All present conditions must hold. Patterns are searched, so anchor them as needed.

    ``url_pattern`` sees the request path with the query string removed,
    ``body_pattern`` the body decoded as latin-1.
    """

    tag: str
    category: Category
    methods: frozenset[str] = frozenset()
    url_pattern: re.Pattern | None = None
    body_pattern: re.Pattern | None = None
    ua_pattern: re.Pattern | None = None

    def matches(self, record: RequestRecord) -> bool:
        if not record.valid_http:
            return False
        if self.methods and (record.method or "").upper() not in self.methods:
            return False
        if self.url_pattern is not None and not self.url_pattern.search(url_path(record.url)):
            return False
        if self.ua_pattern is not None and not self.ua_pattern.search(record.user_agent):
            return False
        if self.body_pattern is not None and not self.body_pattern.search(record.body.decode("latin-1")):
            return False
        return True


def url_path(url: str | None) -> str:
    return (url or "").split("?", 1)[0]


class RegistryError(ValueError):
    pass


def signature(tag: str, category: Category, methods: Iterable[str] = (), url: str | None = None,
              body: str | None = None, ua: str | None = None) -> AttackSignature:
    try:
        return AttackSignature(
            tag=tag,
            category=category,
            methods=frozenset(m.upper() for m in methods),
            url_pattern=re.compile(url) if url is not None else None,
            body_pattern=re.compile(body) if body is not None else None,
            ua_pattern=re.compile(ua) if ua is not None else None,
        )
    except re.error as exc:
        raise RegistryError(f"signature {tag!r}: bad pattern: {exc}") from exc


CHARS32 = r"[a-z0-9]{32}"
# 0..750 without leading zeros
RANGE_0_750 = r"(?:[0-9]|[1-9][0-9]|[1-6][0-9]{2}|7[0-4][0-9]|750)"

URL_SCAN_TEMPLATES = {
    "url-scan-01": "/api/philips/hue/{32_chars}",
    "url-scan-02": "/api/phi/light/{32_chars}",
    "url-scan-03": "/api/philips1/hue/{32_chars}",
    "url-scan-04": "/api/philips2/hue-link/{32_chars}",
    "url-scan-05": "/api/belkin/wemo/{32_chars}",
    "url-scan-06": "/api/tplink/light/{32_chars}",
    "url-scan-07": "/api/hue/{0-750}",
    "url-scan-08": "/api/phi/light/{32_chars}/tokens",
    "url-scan-09": "/api/{32_chars}/tokens",
    "url-scan-10": "/api/{32_chars}",
}


def template_regex(template: str) -> str:
    parts = re.split(r"(\{32_chars\}|\{0-750\})", template)
    out = []
    for part in parts:
        if part == "{32_chars}":
            out.append(CHARS32)
        elif part == "{0-750}":
            out.append(RANGE_0_750)
        else:
            out.append(re.escape(part))
    return "^" + "".join(out) + "$"


_PHUE_KEY = "|".join(STATE_FIELDS)
_SCALAR = r'(?:true|false|-?[0-9]+(?:\.[0-9]+)?|"[^"\\]*")'
# flat JSON object whose keys all belong to the light-state schema
SHOOTER_BODY = rf'^\s*\{{\s*"(?:{_PHUE_KEY})"\s*:\s*{_SCALAR}(?:\s*,\s*"(?:{_PHUE_KEY})"\s*:\s*{_SCALAR})*\s*\}}\s*$'

MULTIPART_BODY = (
    r'(?s)\A-{26}[a-z0-9]{16}\r\n'
    r'Content-Disposition: form-data; name="[^"\r\n]*"\r\n'
    r'.*?Content-Disposition: form-data; name="productid"\r\n'
)

ADMIN_KEYWORDS = ("database", "admin", "pma", "php", "sql", "web", "db", "my")
_KW = "|".join(ADMIN_KEYWORDS)
JORGEE_SEGMENT = rf"[-_.0-9]*(?:{_KW})(?:{_KW}|[-_.0-9])*"
JORGEE_URL = rf"(?i)^(?:/https?:/[^/]+)?(?:/{JORGEE_SEGMENT})+/?$"


def builtin_signatures() -> list[AttackSignature]:
    sigs = [
        signature("shooter-control", Category.TARGETED_CONTROL, ["POST"], url=r"^/api/?$", body=SHOOTER_BODY),
        signature("multipart-fuzz", Category.MULTIPART_FUZZ, ["POST"], body=MULTIPART_BODY),
    ]
    sigs += [
        signature(tag, Category.URL_SCAN, ["GET"], url=template_regex(tmpl))
        for tag, tmpl in URL_SCAN_TEMPLATES.items()
    ]
    sigs += [
        signature("jorgee-admin-scan", Category.GENERIC_SCANNER, ["HEAD"], url=JORGEE_URL),
        signature("skipfish-ua", Category.GENERIC_SCANNER, ua=r"^Mozilla/5\.0 SF/"),
        signature("nikto-ua", Category.GENERIC_SCANNER, ua=r"\bNikto\b"),
        signature("masscan-ua", Category.GENERIC_SCANNER, ua=r"(?i)\bmasscan\b"),
        signature("python-urllib-ua", Category.GENERIC_SCANNER, ua=r"^Python-urllib/"),
        signature("proxy-probe", Category.GENERIC_SCANNER, url=r"testproxy\.php"),
        signature("httpget-ua", Category.OTHER, ua=r"^httpget$"),
        signature("ioscan-ua", Category.OTHER, ua=r"^ioscan$"),
        signature("0000modscan-ua", Category.OTHER, ua=r"^0000modscan$"),
    ]
    return sigs


def _entry_to_signature(index: int, entry) -> AttackSignature:
    where = f"entry {index}"
    if not isinstance(entry, dict) or not isinstance(entry.get("tag"), str) or not entry["tag"]:
        raise RegistryError(f"{where}: needs a non-empty string 'tag'")
    where = f"entry {index} ({entry['tag']!r})"
    unknown = set(entry) - {"tag", "category", "methods", "url_pattern", "body_pattern", "ua_pattern"}
    if unknown:
        raise RegistryError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        category = Category(entry.get("category", "Other"))
    except ValueError:
        raise RegistryError(f"{where}: unknown category {entry.get('category')!r}") from None
    methods = entry.get("methods", [])
    if not isinstance(methods, list) or not all(isinstance(m, str) for m in methods):
        raise RegistryError(f"{where}: 'methods' must be a list of strings")
    for key in ("url_pattern", "body_pattern", "ua_pattern"):
        if key in entry and not isinstance(entry[key], str):
            raise RegistryError(f"{where}: {key!r} must be a string")
    try:
        return signature(entry["tag"], category, methods, entry.get("url_pattern"),
                         entry.get("body_pattern"), entry.get("ua_pattern"))
    except RegistryError as exc:
        raise RegistryError(f"{where}: {exc}") from None


def load_registry(path=None, include_builtin: bool = True) -> list[AttackSignature]:
    sigs = builtin_signatures() if include_builtin else []
    if path is not None:
        try:
            entries = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise RegistryError(f"cannot load signatures from {path}: {exc}") from exc
        if not isinstance(entries, list):
            raise RegistryError(f"{path}: expected a JSON list of signatures")
        sigs += [_entry_to_signature(i, e) for i, e in enumerate(entries)]
    seen: set[str] = set()
    for sig in sigs:
        if sig.tag in seen:
            raise RegistryError(f"duplicate signature tag {sig.tag!r}")
        seen.add(sig.tag)
    return sigs


def match_signatures(record: RequestRecord, registry: Iterable[AttackSignature]) -> list[str]:
    return sorted(sig.tag for sig in registry if sig.matches(record))
