"""Routeserver-vs-direct peering inference and per-IXP leakage statistics."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .ingest import MeasuredPath
from .rpki import Verdict

ROUTESERVER = "routeserver"
DIRECT = "direct"


@dataclass
class IxpPeering:
    ixp_id: int
    members: tuple[int, int]
    valid_path_count: int = 0
    invalid_path_count: int = 0

    @property
    def inferred_kind(self) -> str:
        # a routeserver enforcing ROV never forwards invalid routes
        return ROUTESERVER if self.invalid_path_count == 0 else DIRECT

    @property
    def total(self) -> int:
        return self.valid_path_count + self.invalid_path_count


@dataclass
class IxpReport:
    ixp_id: int
    total_paths: int
    invalid_paths: int
    routeserver_peerings: int
    direct_peerings: int
    routeserver_paths: int
    direct_paths: int

    @property
    def invalid_fraction(self) -> float:
        return self.invalid_paths / self.total_paths if self.total_paths else 0.0

    @property
    def avg_paths_direct(self) -> float | None:
        return self.direct_paths / self.direct_peerings if self.direct_peerings else None

    @property
    def avg_paths_routeserver(self) -> float | None:
        return self.routeserver_paths / self.routeserver_peerings if self.routeserver_peerings else None

    @property
    def direct_routeserver_ratio(self) -> float | None:
        d, r = self.avg_paths_direct, self.avg_paths_routeserver
        if d is None or r is None or r == 0:
            return None
        return d / r


PeeringKey = tuple[int, tuple[int, int]]


def ixp_crossings(hops: Iterable[int | None]) -> list[tuple[int, int, int]]:
    """``(ixp_id, left, right)`` for every ``[X, -ixp, Y]`` window."""
    hops = list(hops)
    out = []
    for left, mid, right in zip(hops, hops[1:], hops[2:]):
        if mid is None or mid >= 0:
            continue
        if left is None or right is None or left <= 0 or right <= 0:
            continue
        out.append((-mid, left, right))
    return out


def extract_peerings(paths: Iterable[MeasuredPath]) -> dict[PeeringKey, IxpPeering]:
    peerings: dict[PeeringKey, IxpPeering] = {}
    for p in paths:
        if p.verdict is Verdict.UNKNOWN:
            continue
        for ixp_id, left, right in set(ixp_crossings(p.hops)):
            pair = (min(left, right), max(left, right))
            key = (ixp_id, pair)
            peering = peerings.get(key)
            if peering is None:
                peering = peerings[key] = IxpPeering(ixp_id, pair)
            if p.verdict is Verdict.VALID:
                peering.valid_path_count += 1
            else:
                peering.invalid_path_count += 1
    return peerings


def ixp_report(peerings: Mapping[PeeringKey, IxpPeering]) -> list[IxpReport]:
    acc = defaultdict(lambda: [0, 0, 0, 0, 0, 0])
    for peering in peerings.values():
        row = acc[peering.ixp_id]
        row[0] += peering.total
        row[1] += peering.invalid_path_count
        if peering.inferred_kind == ROUTESERVER:
            row[2] += 1
            row[4] += peering.total
        else:
            row[3] += 1
            row[5] += peering.total
    return [IxpReport(ixp, *acc[ixp]) for ixp in sorted(acc)]


def ratio_summary(reports: list[IxpReport], top: int | None = None) -> dict[str, float | None]:
    """Direct-vs-routeserver mean path ratio, pooled and averaged per IXP.

    *top* restricts to the IXPs carrying the most paths.
    """
    chosen = sorted(reports, key=lambda r: (-r.total_paths, r.ixp_id))
    if top is not None:
        chosen = chosen[:top]
    d_paths = sum(r.direct_paths for r in chosen)
    d_peer = sum(r.direct_peerings for r in chosen)
    r_paths = sum(r.routeserver_paths for r in chosen)
    r_peer = sum(r.routeserver_peerings for r in chosen)
    pooled = None
    if d_peer and r_peer and r_paths:
        pooled = (d_paths / d_peer) / (r_paths / r_peer)
    per_ixp = [r.direct_routeserver_ratio for r in chosen if r.direct_routeserver_ratio is not None]
    return {
        "pooled_ratio": pooled,
        "mean_per_ixp_ratio": sum(per_ixp) / len(per_ixp) if per_ixp else None,
        "ixps": float(len(chosen)),
    }


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.4f}"


IXP_REPORT_FIELDS = [
    "ixp_id",
    "total_paths",
    "invalid_paths",
    "invalid_fraction",
    "routeserver_peerings",
    "direct_peerings",
    "avg_paths_direct",
    "avg_paths_routeserver",
    "direct_routeserver_ratio",
]


def write_ixp_report(path: str | Path, reports: list[IxpReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IXP_REPORT_FIELDS)
        for r in reports:
            w.writerow(
                [
                    r.ixp_id,
                    r.total_paths,
                    r.invalid_paths,
                    f"{r.invalid_fraction:.4f}",
                    r.routeserver_peerings,
                    r.direct_peerings,
                    _fmt(r.avg_paths_direct),
                    _fmt(r.avg_paths_routeserver),
                    _fmt(r.direct_routeserver_ratio),
                ]
            )


def write_peerings(path: str | Path, peerings: Mapping[PeeringKey, IxpPeering]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ixp_id", "asn_left", "asn_right", "valid_paths", "invalid_paths", "inferred_kind"])
        for key in sorted(peerings):
            p = peerings[key]
            w.writerow([p.ixp_id, *p.members, p.valid_path_count, p.invalid_path_count, p.inferred_kind])
