"""Targeted / untargeted / undefined labelling by a first-match rule cascade."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from ..logstore import RequestRecord
from .signatures import ADMIN_KEYWORDS


class Label(enum.Enum):
    TARGETED = "Targeted"
    UNTARGETED = "Untargeted"
    UNDEFINED = "Undefined"


IOT_KEYWORDS = ("hue", "philips", "wemo", "belkin", "tplink", "light")
SCANNER_UAS = (
    r"\bJorgee\b",
    r"^Mozilla/5\.0 SF/",
    r"\bNikto\b",
    r"(?i)\bmasscan\b",
    r"^Python-urllib/",
)


@dataclass(frozen=True)
class ClassificationRules:
    iot_keywords: tuple[str, ...] = IOT_KEYWORDS
    admin_keywords: tuple[str, ...] = ADMIN_KEYWORDS
    scanner_uas: tuple[re.Pattern, ...] = field(default_factory=lambda: tuple(re.compile(p) for p in SCANNER_UAS))
    proxy_probe: re.Pattern = re.compile(r"testproxy\.php")


DEFAULT_RULES = ClassificationRules()


def classify(record: RequestRecord, rules: ClassificationRules = DEFAULT_RULES) -> Label:
    url = (record.url or "").lower()
    body = record.body.decode("latin-1").lower()
    # 1. aimed at the IoT API or naming an IoT product
    if url.startswith("/api") or any(k in url or k in body for k in rules.iot_keywords):
        return Label.TARGETED
    # 2. generic Internet-wide scanning
    if (
        any(k in url for k in rules.admin_keywords)
        or rules.proxy_probe.search(url)
        or any(p.search(record.user_agent) for p in rules.scanner_uas)
    ):
        return Label.UNTARGETED
    return Label.UNDEFINED
