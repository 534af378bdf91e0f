"""Divergence points, per-AS evidence and ROV behaviour categories.

Data-plane categories:

    1 no ROV              5 passive positive evidence (upstream protected)
    2 weak depreference   6 direct positive evidence
    3 strong depreference 7 strong positive evidence
    4 no negative evidence

Control-plane categories:

    1 negative evidence   3 strong positive evidence
    2 no negative evidence  4 some positive evidence
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .ingest import CONFIGURATIONS, MeasuredPath
from .rpki import Verdict

DATA_PLANE_LABELS = {
    1: "no ROV",
    2: "weak depreference",
    3: "strong depreference",
    4: "no negative evidence",
    5: "no positive evidence",
    6: "ROV evidence",
    7: "strong evidence",
}
CONTROL_PLANE_LABELS = {
    1: "negative evidence",
    2: "no negative evidence",
    3: "strong positive evidence",
    4: "some positive evidence",
}


class MismatchedPair(ValueError):
    pass


@dataclass(frozen=True)
class DivergenceRecord:
    probe_id: str
    configuration: str
    divergence_asn: int | None


@dataclass
class AsEvidence:
    asn: int
    valid_path_count: int = 0
    invalid_path_count: int = 0
    divergence_count: dict[str, int] = field(default_factory=lambda: {c: 0 for c in CONFIGURATIONS})
    # (configuration, prefix string) combinations the AS was seen on
    seen: set[tuple[str, str]] = field(default_factory=set)
    invalid_router_ips: set[str] = field(default_factory=set)
    total_router_ips: set[str] = field(default_factory=set)

    @property
    def total_divergence(self) -> int:
        return sum(self.divergence_count.values())

    def seen_in(self, configuration: str) -> bool:
        return any(c == configuration for c, _ in self.seen)

    def seen_all(self, prefixes: Iterable[str]) -> bool:
        return all((c, p) in self.seen for c in CONFIGURATIONS for p in prefixes)

    def merge(self, other: "AsEvidence") -> "AsEvidence":
        out = AsEvidence(self.asn)
        out.valid_path_count = self.valid_path_count + other.valid_path_count
        out.invalid_path_count = self.invalid_path_count + other.invalid_path_count
        out.divergence_count = {c: self.divergence_count[c] + other.divergence_count[c] for c in CONFIGURATIONS}
        out.seen = self.seen | other.seen
        out.invalid_router_ips = self.invalid_router_ips | other.invalid_router_ips
        out.total_router_ips = self.total_router_ips | other.total_router_ips
        return out


@dataclass
class AsClassification:
    asn: int
    data_plane_category: int | None = None
    control_plane_category: int | None = None
    thresholded_strict: bool = False


def _as_sequence(path: MeasuredPath) -> list[int]:
    return path.ases()


def divergence_point(path_p1: MeasuredPath, path_p2: MeasuredPath) -> int | None:
    """Last AS shared by a probe's two paths when both follow the ROAs."""
    if path_p1.source_id != path_p2.source_id or path_p1.configuration != path_p2.configuration:
        raise MismatchedPair(
            f"paths from {path_p1.source_id}/{path_p1.configuration} and "
            f"{path_p2.source_id}/{path_p2.configuration} cannot be paired"
        )
    if path_p1.verdict is not Verdict.VALID or path_p2.verdict is not Verdict.VALID:
        return None
    last = None
    for x, y in zip(_as_sequence(path_p1), _as_sequence(path_p2)):
        if x != y:
            break
        last = x
    return last


def compute_divergences(paths: Iterable[MeasuredPath]) -> list[DivergenceRecord]:
    """One record per (probe, configuration) holding exactly two prefixes."""
    grouped: dict[tuple[str, str], list[MeasuredPath]] = defaultdict(list)
    for p in paths:
        grouped[(p.source_id, p.configuration)].append(p)
    out = []
    for (source, config), group in sorted(grouped.items()):
        by_prefix = {}
        for p in group:
            by_prefix.setdefault(p.prefix, p)
        if len(by_prefix) != 2:
            continue
        first, second = (by_prefix[k] for k in sorted(by_prefix))
        out.append(DivergenceRecord(source, config, divergence_point(first, second)))
    return out


def accumulate(
    paths: Iterable[MeasuredPath], divergences: Iterable[DivergenceRecord] = ()
) -> dict[int, AsEvidence]:
    """Fold paths and divergence records into per-AS evidence.

    Each AS counts once per path. Unknown-verdict paths register the AS but
    add no valid/invalid/visibility evidence.
    """
    ev: dict[int, AsEvidence] = {}

    def get(asn):
        if asn not in ev:
            ev[asn] = AsEvidence(asn)
        return ev[asn]

    for p in paths:
        ases = set(p.ases())
        for asn in ases:
            e = get(asn)
            if p.verdict is Verdict.VALID:
                e.valid_path_count += 1
            elif p.verdict is Verdict.INVALID:
                e.invalid_path_count += 1
            if p.verdict is not Verdict.UNKNOWN:
                e.seen.add((p.configuration, str(p.prefix)))
        for asn, ip in p.hop_ips:
            e = get(asn)
            e.total_router_ips.add(ip)
            if p.verdict is Verdict.INVALID:
                e.invalid_router_ips.add(ip)
    for d in divergences:
        if d.divergence_asn is not None:
            get(d.divergence_asn).divergence_count[d.configuration] += 1
    return ev


def experiment_prefixes(paths: Iterable[MeasuredPath]) -> list[str]:
    return sorted({str(p.prefix) for p in paths})


def classify_data_plane(ev: AsEvidence, prefixes: Iterable[str]) -> int:
    """Category 1-7 evaluated strictest first; 5 is only assigned by ``upgrade_passive``."""
    valid, invalid = ev.valid_path_count, ev.invalid_path_count
    div = ev.divergence_count
    div_each = all(div[c] >= 1 for c in CONFIGURATIONS)
    if invalid == 0:
        if ev.seen_all(prefixes) and div_each:
            return 7
        if all(ev.seen_in(c) for c in CONFIGURATIONS) and ev.total_divergence >= 1:
            return 6
        return 4
    if valid >= 3 * invalid and div_each:
        return 3
    if valid >= 2 * invalid and ev.total_divergence >= 1:
        return 2
    return 1


def upgrade_passive(classified: Mapping[int, int], paths: Iterable[MeasuredPath]) -> dict[int, int]:
    """Move category-4 ASes to 5 when an enforcing AS sits downstream on every path.

    Only paths that reached a target are considered; an AS needs at least
    one such path to be upgraded.
    """
    out = dict(classified)
    protected: dict[int, bool] = {}
    for p in paths:
        if p.reached_origin is None:
            continue
        seq = p.ases()
        for i, asn in enumerate(seq):
            if classified.get(asn) != 4:
                continue
            # last occurrence, up to but excluding the final target hop
            last = len(seq) - 1 - seq[::-1].index(asn)
            between = seq[last + 1 : len(seq) - 1]
            ok = any(classified.get(x) in (6, 7) for x in between)
            protected[asn] = protected.get(asn, True) and ok
    for asn, ok in protected.items():
        if ok:
            out[asn] = 5
    return out


def classify_control_plane(ev: AsEvidence, prefixes: Iterable[str]) -> int:
    prefixes = list(prefixes)
    if ev.invalid_path_count > 0:
        return 1
    if ev.seen_all(prefixes):
        return 3
    both_prefixes_one_config = any(all((c, p) in ev.seen for p in prefixes) for c in CONFIGURATIONS)
    one_prefix_both_configs = any(all((c, p) in ev.seen for c in CONFIGURATIONS) for p in prefixes)
    if both_prefixes_one_config or one_prefix_both_configs:
        return 4
    return 2


def apply_threshold(
    classified: Mapping[int, int],
    evidence: Mapping[int, AsEvidence],
    path_frac: float = 0.10,
    router_frac: float = 0.10,
) -> set[int]:
    """ASes in categories 1-3 with only a small share of invalid paths and routers.

    ASes without observed router IPs cannot be assessed and are never flagged.
    """
    flagged = set()
    for asn, cat in classified.items():
        if cat not in (1, 2, 3):
            continue
        ev = evidence[asn]
        total = ev.valid_path_count + ev.invalid_path_count
        if total == 0 or not ev.total_router_ips:
            continue
        if ev.invalid_path_count / total < path_frac and len(ev.invalid_router_ips) / len(ev.total_router_ips) < router_frac:
            flagged.add(asn)
    return flagged


def classify_paths(
    paths: list[MeasuredPath],
) -> tuple[dict[int, int], dict[int, AsEvidence], list[DivergenceRecord]]:
    """Full data-plane pass: divergences, evidence, categories, passive upgrade."""
    prefixes = experiment_prefixes(paths)
    divergences = compute_divergences(paths)
    evidence = accumulate(paths, divergences)
    cats = {asn: classify_data_plane(ev, prefixes) for asn, ev in evidence.items()}
    return upgrade_passive(cats, paths), evidence, divergences


def classify_control_paths(paths: list[MeasuredPath]) -> tuple[dict[int, int], dict[int, AsEvidence]]:
    prefixes = experiment_prefixes(paths)
    evidence = accumulate(paths)
    return {asn: classify_control_plane(ev, prefixes) for asn, ev in evidence.items()}, evidence


def category_distribution(classified: Mapping[int, int], labels: Mapping[int, str]) -> list[tuple[int, str, int, float]]:
    total = len(classified)
    counts = defaultdict(int)
    for cat in classified.values():
        counts[cat] += 1
    return [(c, labels[c], counts[c], 100.0 * counts[c] / total if total else 0.0) for c in sorted(labels)]


def format_distribution(classified: Mapping[int, int], labels: Mapping[int, str]) -> str:
    width = max(len(v) for v in labels.values()) + 2
    lines = []
    for cat, label, count, pct in category_distribution(classified, labels):
        lines.append(f"[C{cat}] {(label + ':').ljust(width)}{count:<6d}[{pct:.1f}%]")
    return "\n".join(lines)


REPORT_FIELDS = ["asn", "plane", "category", "valid_paths", "invalid_paths", "div_a", "div_b", "thresholded"]


def write_classification_report(
    path: str | Path,
    data: tuple[Mapping[int, int], Mapping[int, AsEvidence], set[int]] | None,
    control: tuple[Mapping[int, int], Mapping[int, AsEvidence], set[int]] | None,
) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for plane, part in (("data", data), ("control", control)):
            if part is None:
                continue
            cats, evidence, flagged = part
            for asn in sorted(cats):
                ev = evidence[asn]
                w.writerow(
                    [
                        asn,
                        plane,
                        cats[asn],
                        ev.valid_path_count,
                        ev.invalid_path_count,
                        ev.divergence_count["A"],
                        ev.divergence_count["B"],
                        int(asn in flagged),
                    ]
                )


def read_classification_report(path: str | Path) -> dict[str, dict[int, dict]]:
    out: dict[str, dict[int, dict]] = {"data": {}, "control": {}}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["plane"]][int(row["asn"])] = {
                "category": int(row["category"]),
                "valid_paths": int(row["valid_paths"]),
                "invalid_paths": int(row["invalid_paths"]),
                "div_a": int(row["div_a"]),
                "div_b": int(row["div_b"]),
                "thresholded": row["thresholded"] == "1",
            }
    return out
