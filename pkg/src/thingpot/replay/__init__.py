from .driver import PlanError, ReplayPlan, ReplaySummary, corpus_bytes, expand, replay
from .generators import (
    GENERATORS, ReplayRequest, gen_jorgee, gen_multipart_fuzz, gen_raw_probe, gen_scanner, gen_shooter,
    gen_url_scan, generate,
)

__all__ = [
    "GENERATORS", "PlanError", "ReplayPlan", "ReplayRequest", "ReplaySummary", "corpus_bytes", "expand", "gen_jorgee",
    "gen_multipart_fuzz", "gen_raw_probe", "gen_scanner", "gen_shooter", "gen_url_scan", "generate", "replay",
]
