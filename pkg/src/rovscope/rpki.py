"""IPv4 prefixes, VRPs and the route origin validation verdict."""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable


class MalformedRecord(ValueError):
    """A line of an input file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class Verdict(str, enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN = "unknown"


def _parse_ipv4(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


@dataclass(frozen=True, order=True)
class Prefix:
    base: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= 32:
            raise ValueError(f"prefix length out of range: {self.length}")
        if not 0 <= self.base < 2**32:
            raise ValueError(f"address out of range: {self.base}")
        if self.base & ~self.mask() & 0xFFFFFFFF:
            raise ValueError(f"host bits set in {ipaddress.IPv4Address(self.base)}/{self.length}")

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        text = text.strip()
        if "/" not in text:
            raise ValueError(f"missing prefix length: {text!r}")
        addr, _, length = text.partition("/")
        return cls(_parse_ipv4(addr), int(length))

    def mask(self) -> int:
        return (0xFFFFFFFF << (32 - self.length)) & 0xFFFFFFFF if self.length else 0

    def contains_address(self, address: int) -> bool:
        return address & self.mask() == self.base

    def contains(self, other: "Prefix") -> bool:
        return other.length >= self.length and self.contains_address(other.base)

    def address(self, offset: int) -> int:
        if not 0 <= offset < 2 ** (32 - self.length):
            raise ValueError(f"offset {offset} outside {self}")
        return self.base + offset

    def __str__(self) -> str:
        return f"{ipaddress.IPv4Address(self.base)}/{self.length}"


@dataclass(frozen=True)
class Vrp:
    prefix: Prefix
    max_length: int
    asn: int

    def __post_init__(self):
        if not self.prefix.length <= self.max_length <= 32:
            raise ValueError(f"max_length {self.max_length} invalid for {self.prefix}")
        if self.asn <= 0:
            raise ValueError(f"origin ASN must be positive, got {self.asn}")

    @classmethod
    def of(cls, prefix: str | Prefix, asn: int, max_length: int | None = None) -> "Vrp":
        if isinstance(prefix, str):
            prefix = Prefix.parse(prefix)
        return cls(prefix, prefix.length if max_length is None else max_length, asn)


@dataclass(frozen=True)
class Roa:
    """VRPs published under one signing identity."""

    identity: str
    authorized: tuple[Vrp, ...]

    def __post_init__(self):
        if not self.authorized:
            raise ValueError("a ROA must authorize at least one prefix")


def covers(vrp: Vrp, announced: Prefix) -> bool:
    return vrp.prefix.contains(announced)


def validate(announced: Prefix, origin: int, vrps: Iterable[Vrp]) -> Verdict:
    covered = False
    for vrp in vrps:
        if not covers(vrp, announced):
            continue
        covered = True
        if vrp.asn == origin and announced.length <= vrp.max_length:
            return Verdict.VALID
    return Verdict.INVALID if covered else Verdict.UNKNOWN


def iter_records(path: str | Path, strict: bool = False):
    """Yield ``(line_number, stripped_line)`` for data lines of a text file.

    Blank lines and ``#`` comments are skipped unless *strict* is set, in
    which case they are rejected.
    """
    with open(path, encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                if strict:
                    raise MalformedRecord("blank or comment line in strict mode", lineno, str(path))
                continue
            yield lineno, line


def parse_vrp_line(line: str) -> Vrp:
    fields = [f.strip() for f in line.split(",")]
    if len(fields) == 2:
        prefix, asn = fields
        return Vrp.of(prefix, int(asn.upper().removeprefix("AS")))
    if len(fields) != 3:
        raise ValueError(f"expected prefix,max_length,asn; got {len(fields)} fields")
    prefix, max_length, asn = fields
    return Vrp.of(
        prefix,
        int(asn.upper().removeprefix("AS")),
        int(max_length) if max_length else None,
    )


def load_vrps(path: str | Path, strict: bool = False) -> list[Vrp]:
    vrps = []
    for lineno, line in iter_records(path, strict):
        try:
            vrps.append(parse_vrp_line(line))
        except ValueError as exc:
            raise MalformedRecord(str(exc), lineno, str(path)) from exc
    return vrps


def dump_vrps(vrps: Iterable[Vrp], path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for vrp in vrps:
            fh.write(f"{vrp.prefix},{vrp.max_length},{vrp.asn}\n")
