"""Offline source-IP enrichment: TOR exit membership and longest-prefix ASN/RIR lookup."""

from __future__ import annotations

import csv
import ipaddress
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class TorExitList:
    addresses: set = field(default_factory=set)
    skipped: int = 0

    @classmethod
    def load(cls, path) -> TorExitList:
        out = cls()
        with Path(path).open(encoding="utf-8", errors="replace") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    out.addresses.add(ipaddress.ip_address(line))
                except ValueError:
                    out.skipped += 1
        return out

    def __contains__(self, ip) -> bool:
        try:
            return ipaddress.ip_address(ip) in self.addresses
        except ValueError:
            return False


@dataclass
class AsnMap:
    """CIDR -> (asn, rir) table, queried by longest matching prefix."""

    by_prefix: dict = field(default_factory=dict)  # (version, prefixlen) -> {network: (asn, rir)}
    skipped: int = 0

    def add(self, cidr: str, asn: str | None, rir: str | None) -> None:
        net = ipaddress.ip_network(cidr.strip(), strict=False)
        self.by_prefix.setdefault((net.version, net.prefixlen), {})[net] = (asn or None, rir or None)

    @classmethod
    def load(cls, path) -> AsnMap:
        out = cls()
        with Path(path).open(newline="", encoding="utf-8", errors="replace") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#") or row[0].strip().lower() == "cidr":
                    continue
                if len(row) < 2:
                    out.skipped += 1
                    continue
                try:
                    out.add(row[0], row[1].strip(), row[2].strip() if len(row) > 2 else None)
                except ValueError:
                    out.skipped += 1
        return out

    def lookup(self, ip) -> tuple[str | None, str | None]:
        try:
            addr = ipaddress.ip_address(ip)
        except ValueError:
            return None, None
        for (version, plen) in sorted(self.by_prefix, key=lambda k: -k[1]):
            if version != addr.version:
                continue
            net = ipaddress.ip_network(f"{addr}/{plen}", strict=False)
            hit = self.by_prefix[(version, plen)].get(net)
            if hit is not None:
                return hit
        return None, None


def enrich_ip(ip: str, tor_exit_list: TorExitList | None = None, asn_map: AsnMap | None = None) -> dict:
    asn, rir = asn_map.lookup(ip) if asn_map is not None else (None, None)
    return {"tor": tor_exit_list is not None and ip in tor_exit_list, "asn": asn, "rir": rir}
