from ..httpwire import is_http
from .classify import ClassificationRules, Label, classify
from .enrich import AsnMap, TorExitList, enrich_ip
from .report import ReportOptions, aggregate_user_agents, percent, report, top_n
from .signatures import AttackSignature, Category, load_registry, match_signatures

__all__ = [
    "AsnMap", "AttackSignature", "Category", "ClassificationRules", "Label", "ReportOptions", "TorExitList",
    "aggregate_user_agents", "classify", "enrich_ip", "is_http", "load_registry", "match_signatures",
    "percent", "report", "top_n",
]
