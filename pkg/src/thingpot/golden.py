"""Reconstructed reference log entries shipped with the package."""

from __future__ import annotations

from .logstore import RequestRecord, read_logs
from .phue import DATA_DIR

GOLDEN_DIR = DATA_DIR / "golden"
FIXTURES = ("shooter_sample", "botlight_sample")


def load_fixture(name: str) -> RequestRecord:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    records, _ = read_logs([GOLDEN_DIR / f"{name}.jsonl"])
    return records[0]
