"""Agreement between control-plane and data-plane categories of the same AS."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping


class Similarity(str, enum.Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


# (control-plane category, data-plane category)
HIGH = frozenset({(1, 1), (1, 2), (2, 3), (2, 4), (2, 5), (3, 6), (3, 7), (4, 5), (4, 6), (4, 7)})
MEDIUM = frozenset({(1, 3), (2, 6), (2, 7), (3, 3), (3, 4), (3, 5), (4, 3), (4, 4)})
LOW = frozenset({(1, 4), (1, 5), (1, 6), (1, 7), (2, 1), (2, 2), (3, 1), (3, 2), (4, 1), (4, 2)})

CONTROL_CATEGORIES = range(1, 5)
DATA_CATEGORIES = range(1, 8)


class OutOfRangeCategory(ValueError):
    pass


def _build_table() -> dict[tuple[int, int], Similarity]:
    table: dict[tuple[int, int], Similarity] = {}
    for level, members in ((Similarity.HIGH, HIGH), (Similarity.MEDIUM, MEDIUM), (Similarity.LOW, LOW)):
        for t in members:
            if t in table:
                raise AssertionError(f"tuple {t} listed as both {table[t].value} and {level.value}")
            table[t] = level
    expected = {(c, d) for c in CONTROL_CATEGORIES for d in DATA_CATEGORIES}
    if set(table) != expected:
        missing = sorted(expected - set(table))
        extra = sorted(set(table) - expected)
        raise AssertionError(f"similarity sets incomplete: missing {missing}, extra {extra}")
    return table


_TABLE = _build_table()


def similarity(control_cat: int, data_cat: int) -> Similarity:
    try:
        return _TABLE[(control_cat, data_cat)]
    except KeyError:
        raise OutOfRangeCategory(f"no similarity defined for ({control_cat}, {data_cat})") from None


@dataclass(frozen=True)
class SimilarityVerdict:
    asn: int
    control_category: int
    data_category: int
    level: Similarity


@dataclass
class CorrelationSummary:
    verdicts: list[SimilarityVerdict]
    high: int = 0
    medium: int = 0
    low: int = 0
    only_control: int = 0
    only_data: int = 0


def intersect_and_score(control: Mapping[int, int], data: Mapping[int, int]) -> CorrelationSummary:
    both = sorted(set(control) & set(data))
    verdicts = [SimilarityVerdict(a, control[a], data[a], similarity(control[a], data[a])) for a in both]
    summary = CorrelationSummary(
        verdicts,
        only_control=len(set(control) - set(data)),
        only_data=len(set(data) - set(control)),
    )
    for v in verdicts:
        setattr(summary, v.level.value, getattr(summary, v.level.value) + 1)
    return summary


def write_correlation_report(path: str | Path, summary: CorrelationSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["asn", "cp_cat", "dp_cat", "level"])
        for v in summary.verdicts:
            w.writerow([v.asn, v.control_category, v.data_category, v.level.value])
