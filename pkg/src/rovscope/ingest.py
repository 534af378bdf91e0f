"""Turn raw control-plane dumps and traceroutes into AS-level paths.

Hops are signed integers: positive values are ASNs, negative values are
IXP ids, ``None`` marks an unresponsive or unmappable hop.
"""

from __future__ import annotations

import enum
import ipaddress
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .rpki import MalformedRecord, Prefix, Verdict, Vrp, iter_records, validate

log = logging.getLogger(__name__)

TIMEOUT = "*"
CONFIGURATIONS = ("A", "B")

Hop = Optional[int]


class UnknownConfigurationLabel(MalformedRecord):
    pass


class Plane(str, enum.Enum):
    CONTROL = "control"
    DATA = "data"


@dataclass(frozen=True)
class MeasuredPath:
    source_id: str
    plane: Plane
    prefix: Prefix
    configuration: str
    hops: tuple[Hop, ...]
    reached_origin: int | None
    verdict: Verdict
    # (asn, router ip) pairs observed on the path; empty for control-plane paths
    hop_ips: tuple[tuple[int, str], ...] = ()
    # hops accepted from a single responsive run
    weak_hops: int = 0

    def ases(self) -> list[int]:
        return [h for h in self.hops if h is not None and h > 0]


@dataclass
class IpMappingDb:
    """Longest-prefix-match tables for router IPs.

    IXP peering LANs are consulted before AS prefixes.
    """

    as_table: dict[int, dict[int, int]] = field(default_factory=dict)
    ixp_table: dict[int, dict[int, int]] = field(default_factory=dict)
    ixp_names: dict[int, str] = field(default_factory=dict)
    target_equivalence: dict[int, int] = field(default_factory=dict)

    @staticmethod
    def _insert(table: dict[int, dict[int, int]], prefix: Prefix, value: int) -> None:
        table.setdefault(prefix.length, {})[prefix.base] = value

    @staticmethod
    def _lookup(table: dict[int, dict[int, int]], address: int) -> int | None:
        for length in sorted(table, reverse=True):
            mask = (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF if length else 0
            hit = table[length].get(address & mask)
            if hit is not None:
                return hit
        return None

    def add_as_prefix(self, prefix: Prefix | str, asn: int) -> None:
        if isinstance(prefix, str):
            prefix = Prefix.parse(prefix)
        self._insert(self.as_table, prefix, asn)

    def add_ixp_lan(self, prefix: Prefix | str, ixp_id: int, name: str = "") -> None:
        if isinstance(prefix, str):
            prefix = Prefix.parse(prefix)
        if ixp_id <= 0:
            raise ValueError(f"IXP ids must be positive, got {ixp_id}")
        self._insert(self.ixp_table, prefix, ixp_id)
        self.ixp_names[ixp_id] = name

    def lookup(self, ip: str | None) -> Hop:
        """Signed id for *ip*: ``-ixp_id`` for LAN addresses, ASN otherwise."""
        if ip is None or ip == TIMEOUT:
            return None
        try:
            addr = ipaddress.IPv4Address(ip)
        except ValueError:
            return None
        ixp = self._lookup(self.ixp_table, int(addr))
        if ixp is not None:
            return -ixp
        if addr.is_private:
            return None
        return self._lookup(self.as_table, int(addr))

    @classmethod
    def load(
        cls,
        ip2as: str | Path,
        ixp_lans: str | Path | None = None,
        target_equivalence: str | Path | None = None,
        strict: bool = False,
    ) -> "IpMappingDb":
        db = cls()
        for lineno, line in iter_records(ip2as, strict):
            try:
                prefix, asn = line.split(",")
                db.add_as_prefix(prefix, int(asn))
            except ValueError as exc:
                raise MalformedRecord(str(exc), lineno, str(ip2as)) from exc
        if ixp_lans is not None and Path(ixp_lans).exists():
            for lineno, line in iter_records(ixp_lans, strict):
                try:
                    prefix, ixp_id, name = line.split(",", 2)
                    db.add_ixp_lan(prefix, int(ixp_id), name)
                except ValueError as exc:
                    raise MalformedRecord(str(exc), lineno, str(ixp_lans)) from exc
        if target_equivalence is not None and Path(target_equivalence).exists():
            for lineno, line in iter_records(target_equivalence, strict):
                try:
                    asn, target = line.split(",")
                    db.target_equivalence[int(asn)] = int(target)
                except ValueError as exc:
                    raise MalformedRecord(str(exc), lineno, str(target_equivalence)) from exc
        return db


def majority_vote(hop: Sequence[str | None]) -> str | None:
    """Consensus IP among the responsive runs of one hop position.

    A single responsive run is accepted as-is.
    """
    present = [ip for ip in hop if ip is not None and ip != TIMEOUT]
    if not present:
        return None
    if len(present) == 1:
        return present[0]
    ip, count = Counter(present).most_common(1)[0]
    return ip if count >= 2 else None


def _vote_runs(runs: Sequence[Sequence[str]]) -> tuple[list[str | None], int]:
    width = max((len(r) for r in runs), default=0)
    voted, weak = [], 0
    for i in range(width):
        column = [r[i] if i < len(r) else None for r in runs]
        ip = majority_vote(column)
        if ip is not None and sum(1 for c in column if c is not None and c != TIMEOUT) == 1:
            weak += 1
        voted.append(ip)
    return voted, weak


def condense(hops: Iterable[Hop]) -> list[Hop]:
    """Merge repeated ids and drop unresponsive gaps inside a single AS."""
    out = list(hops)
    while True:
        merged: list[Hop] = []
        for h in out:
            if h is not None and merged and merged[-1] == h:
                continue
            merged.append(h)
        # drop runs of None flanked by the same positive ASN
        cleaned: list[Hop] = []
        i = 0
        while i < len(merged):
            if merged[i] is None and cleaned and cleaned[-1] is not None and cleaned[-1] > 0:
                j = i
                while j < len(merged) and merged[j] is None:
                    j += 1
                if j < len(merged) and merged[j] == cleaned[-1]:
                    i = j + 1
                    continue
            cleaned.append(merged[i])
            i += 1
        if cleaned == out:
            return out
        out = cleaned


def map_and_condense(ip_hops: Iterable[str | None], db: IpMappingDb) -> list[Hop]:
    return condense(db.lookup(ip) for ip in ip_hops)


def resolve_target(
    hops: Sequence[Hop],
    prefix: Prefix,
    targets: Iterable[int],
    vrps: Iterable[Vrp],
    equivalence: Mapping[int, int] | None = None,
) -> tuple[int | None, Verdict]:
    """Origin reached by a path and the validity of that origin for *prefix*."""
    targets = set(targets)
    last = next((h for h in reversed(hops) if h is not None and h > 0), None)
    reached = None
    if last in targets:
        reached = last
    elif equivalence and last in equivalence and equivalence[last] in targets:
        reached = equivalence[last]
    if reached is None:
        return None, Verdict.UNKNOWN
    return reached, validate(prefix, reached, vrps)


def _check_configuration(label: str, vrps_by_config: Mapping[str, object], lineno, source):
    if label not in vrps_by_config:
        raise UnknownConfigurationLabel(f"unknown configuration label {label!r}", lineno, source)


def trace_to_path(
    record: Mapping,
    db: IpMappingDb,
    targets: Iterable[int],
    vrps_by_config: Mapping[str, Sequence[Vrp]],
) -> MeasuredPath | None:
    """Preprocess one traceroute record; ``None`` if no hop responded."""
    voted, weak = _vote_runs(record["runs"])
    mapped = [db.lookup(ip) for ip in voted]
    if all(h is None for h in mapped):
        return None
    hops = condense(mapped)
    prefix = Prefix.parse(record["prefix"])
    config = record["configuration"]
    reached, verdict = resolve_target(hops, prefix, targets, vrps_by_config[config], db.target_equivalence)
    hop_ips = tuple(sorted({(h, ip) for h, ip in zip(mapped, voted) if h is not None and h > 0}))
    return MeasuredPath(
        source_id=str(record["probe_id"]),
        plane=Plane.DATA,
        prefix=prefix,
        configuration=config,
        hops=tuple(hops),
        reached_origin=reached,
        verdict=verdict,
        hop_ips=hop_ips,
        weak_hops=weak,
    )


def read_traceroutes(path: str | Path, strict: bool = False) -> list[dict]:
    records = []
    for lineno, line in iter_records(path, strict):
        try:
            rec = json.loads(line)
            for key in ("probe_id", "configuration", "prefix", "runs"):
                if key not in rec:
                    raise ValueError(f"missing field {key!r}")
            if not isinstance(rec["runs"], list) or not all(isinstance(r, list) for r in rec["runs"]):
                raise ValueError("runs must be a list of hop lists")
            if len(rec["runs"]) == 0:
                raise ValueError("record has no runs")
            Prefix.parse(rec["prefix"])
        except ValueError as exc:
            raise MalformedRecord(str(exc), lineno, str(path)) from exc
        rec["_line"] = lineno
        records.append(rec)
    return records


def load_traceroutes(
    path: str | Path,
    db: IpMappingDb,
    targets: Iterable[int],
    vrps_by_config: Mapping[str, Sequence[Vrp]],
    strict: bool = False,
) -> list[MeasuredPath]:
    """Preprocess a traceroute JSONL file.

    Probes lacking a responsive measurement for every (configuration,
    prefix) combination present in the file are dropped entirely.
    """
    targets = list(targets)
    records = read_traceroutes(path, strict)
    by_probe: dict[str, list[MeasuredPath]] = defaultdict(list)
    combos = set()
    for rec in records:
        _check_configuration(rec["configuration"], vrps_by_config, rec["_line"], str(path))
        combos.add((rec["configuration"], rec["prefix"]))
        mp = trace_to_path(rec, db, targets, vrps_by_config)
        if mp is not None:
            by_probe[mp.source_id].append(mp)
    paths = []
    for probe in sorted(by_probe):
        have = {(p.configuration, str(p.prefix)) for p in by_probe[probe]}
        if have >= combos:
            paths.extend(by_probe[probe])
        else:
            log.debug("dropping probe %s: incomplete measurements", probe)
    return paths


def collapse_prepending(path: Iterable[int]) -> list[int]:
    out: list[int] = []
    for asn in path:
        if not out or out[-1] != asn:
            out.append(asn)
    return out


def load_control_dump(
    path: str | Path,
    origins: Iterable[int],
    vrps_by_config: Mapping[str, Sequence[Vrp]],
    strict: bool = False,
) -> list[MeasuredPath]:
    """Parse ``config,collector,prefix,as path`` lines into control-plane paths."""
    origins = set(origins)
    out = []
    seen = set()
    for lineno, line in iter_records(path, strict):
        fields = line.split(",")
        if len(fields) != 4:
            raise MalformedRecord(f"expected 4 fields, got {len(fields)}", lineno, str(path))
        config, collector, prefix_text, as_path = (f.strip() for f in fields)
        _check_configuration(config, vrps_by_config, lineno, str(path))
        try:
            prefix = Prefix.parse(prefix_text)
            hops = collapse_prepending(int(tok) for tok in as_path.split())
        except ValueError as exc:
            raise MalformedRecord(str(exc), lineno, str(path)) from exc
        if not hops or hops[-1] not in origins:
            continue
        if len(set(hops)) != len(hops):
            log.warning("%s:%d: AS path loop, skipped", path, lineno)
            continue
        key = (config, collector, prefix)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            MeasuredPath(
                source_id=collector,
                plane=Plane.CONTROL,
                prefix=prefix,
                configuration=config,
                hops=tuple(hops),
                reached_origin=hops[-1],
                verdict=validate(prefix, hops[-1], vrps_by_config[config]),
            )
        )
    return out
