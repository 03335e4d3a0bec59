"""Chat command grammar and the shared_id used to join XMPP and REST logs."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

from ..phue import STATE_FIELDS

BRI_MIN, BRI_MAX = STATE_FIELDS["bri"][1:]
SHARED_ID_LENGTH = 16

HELP_TEXT = "commands: on | off | bri <0-254> | status"


class Verb(enum.Enum):
    ON = "On"
    OFF = "Off"
    BRI = "Bri"
    STATUS = "Status"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Command:
    verb: Verb
    arg: int | None = None


def parse_command(text: str) -> Command:
    tokens = text.split()
    if not tokens:
        return Command(Verb.UNKNOWN)
    head, rest = tokens[0].lower(), tokens[1:]
    if head in ("on", "off", "status") and not rest:
        return Command({"on": Verb.ON, "off": Verb.OFF, "status": Verb.STATUS}[head])
    if head == "bri" and len(rest) == 1 and rest[0].isascii() and rest[0].isdigit():
        value = int(rest[0])
        if BRI_MIN <= value <= BRI_MAX:
            return Command(Verb.BRI, value)
    return Command(Verb.UNKNOWN)


def make_shared_id(jid: str, ts_ms: int) -> str:
    if not jid:
        raise ValueError("jid must be non-empty")
    digest = hashlib.sha256(f"{jid}|{ts_ms}".encode("utf-8")).hexdigest()
    return digest[:SHARED_ID_LENGTH]
