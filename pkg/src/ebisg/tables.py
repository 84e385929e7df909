"""Census-style surname, first-name, geography, and income tables.

All loaders consume the toolkit's canonical CSV schemas (documented in the
README) rather than the Census Bureau's native layouts. Tables are frozen
after load and safe for concurrent reads.
"""

from __future__ import annotations

import csv
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DataError
from .races import N_RACES, RACES, renormalize

NAME_TABLE_HEADER = ["name", "count", "white", "black", "hispanic", "asian", "aian", "other"]
GEO_TABLE_HEADER = ["geo_id", "white", "black", "hispanic", "asian", "aian", "other"]
INCOME_TABLE_HEADER = ["geo_id", "median_income"]
VOTER_HEADER = ["id", "first", "middle", "last", "geo_id", "race"]

# Punctuation variants that appear in real name data; mapped before the
# diacritic fold so O’Brien and O'Brien share a key.
_APOSTROPHES = {ord("‘"): "'", ord("’"): "'", ord("ʼ"): "'"}


@lru_cache(maxsize=65536)
def normalize_name(raw: str) -> str:
    """Canonical form used as the key of every name-keyed structure.

    Uppercases, trims, collapses internal whitespace runs, and folds Latin
    diacritics to ASCII. Hyphens and apostrophes are kept so hyphenated
    surnames stay first-class. Idempotent.
    """
    s = raw.translate(_APOSTROPHES)
    s = unicodedata.normalize("NFKD", s)
    s = "".join(ch for ch in s if not unicodedata.combining(ch))
    return " ".join(s.upper().split())


@dataclass(frozen=True)
class NameEntry:
    count: int
    dist: np.ndarray  # P(R | name), length 6


@dataclass(frozen=True)
class NameTable:
    """Map from normalized name to (population count, race distribution)."""

    kind: str  # "surname" | "firstname"
    entries: Mapping[str, NameEntry]
    min_count: int
    source: str = ""

    def __post_init__(self):
        if self.kind not in ("surname", "firstname"):
            raise DataError(f"name table kind must be surname or firstname, got {self.kind!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, raw: str) -> bool:
        return normalize_name(raw) in self.entries


@dataclass(frozen=True)
class GeoTable:
    """Per-geounit race counts with derived P(R|G) and population marginal P(R)."""

    geo_ids: tuple[str, ...]
    counts: np.ndarray  # shape (n_units, 6), person counts
    dists: np.ndarray  # shape (n_units, 6), rows are P(R|G)
    marginal: np.ndarray  # length 6, count-weighted P(R)
    index: Mapping[str, int]
    dropped_empty_units: int = 0
    source: str = ""

    def __contains__(self, geo_id: str) -> bool:
        return geo_id in self.index

    def dist(self, geo_id: str) -> np.ndarray:
        try:
            return self.dists[self.index[geo_id]]
        except KeyError:
            raise DataError(f"unknown geo id {geo_id!r}") from None


@dataclass(frozen=True)
class IncomeTable:
    """Median household income per geounit."""

    incomes: Mapping[str, float]
    source: str = ""

    def __contains__(self, geo_id: str) -> bool:
        return geo_id in self.incomes

    def income(self, geo_id: str) -> float:
        try:
            return self.incomes[geo_id]
        except KeyError:
            raise DataError(f"no median income for geo id {geo_id!r}") from None


@dataclass(frozen=True)
class VoterRecord:
    """One voter: the unit of prediction, training, and evaluation."""

    id: str
    first: str
    middle: str
    last: str
    geo: str
    race: Optional[str] = None  # canonical label, or None when unknown


def fullname_string(voter: VoterRecord) -> str:
    """First, middle, and last name joined by single spaces; empty parts drop out."""
    return " ".join(part for part in (voter.first, voter.middle, voter.last) if part.strip())


@dataclass(frozen=True)
class TableSet:
    """The loaded tables a prediction run needs."""

    surnames: NameTable
    geo: GeoTable
    firstnames: Optional[NameTable] = None
    income: Optional[IncomeTable] = None


def _open_rows(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    return path


def _check_header(path, header, expected):
    if header is None:
        raise DataError(f"{path}: empty file, expected header {','.join(expected)}")
    got = [h.strip().lower() for h in header]
    if got != expected:
        raise DataError(f"{path}: bad header {','.join(header)!r}, expected {','.join(expected)}")


def load_name_table(path, kind: str, min_count: Optional[int] = None) -> NameTable:
    """Load a surname or first-name table from the canonical CSV schema.

    Empty proportion cells model suppressed values and are treated as 0;
    each row is renormalized to sum 1. When ``min_count`` is given, rows
    below it are dropped (Census lists only carry names above a frequency
    threshold); otherwise the table records the smallest count it saw.
    """
    path = _open_rows(path)
    entries: dict[str, NameEntry] = {}
    dropped = 0
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        _check_header(path, next(reader, None), NAME_TABLE_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(NAME_TABLE_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(NAME_TABLE_HEADER)} fields, got {len(row)}")
            key = normalize_name(row[0])
            if not key:
                raise DataError(f"{path}:{lineno}: empty name")
            try:
                count = int(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: count {row[1]!r} is not an integer") from None
            if count < 0:
                raise DataError(f"{path}:{lineno}: negative count {count}")
            raw = []
            for col, cell in zip(NAME_TABLE_HEADER[2:], row[2:]):
                cell = cell.strip()
                if cell == "":
                    raw.append(0.0)  # suppressed cell
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: {col} value {cell!r} is not a number") from None
                if not (0.0 <= v <= 1.0):
                    raise DataError(f"{path}:{lineno}: {col} proportion {v} outside [0,1]")
                raw.append(v)
            try:
                dist = renormalize(raw, where=f"{path}:{lineno}")
            except DataError:
                raise DataError(f"{path}:{lineno}: row proportions are all zero") from None
            if min_count is not None and count < min_count:
                dropped += 1
                continue
            if key in entries:
                raise DataError(f"{path}:{lineno}: duplicate name key {key!r}")
            entries[key] = NameEntry(count=count, dist=dist)
    if not entries:
        raise DataError(f"{path}: no usable rows")
    effective = min_count if min_count is not None else min(e.count for e in entries.values())
    return NameTable(kind=kind, entries=entries, min_count=effective, source=str(path))


def load_geo_table(path) -> GeoTable:
    """Load per-geounit race counts; derives P(R|G) and the marginal P(R).

    Units with zero total population are dropped (real tract files contain
    empty tracts); the number dropped is recorded on the table.
    """
    path = _open_rows(path)
    geo_ids: list[str] = []
    rows: list[list[float]] = []
    dropped = 0
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        _check_header(path, next(reader, None), GEO_TABLE_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(GEO_TABLE_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(GEO_TABLE_HEADER)} fields, got {len(row)}")
            gid = row[0].strip()
            if not gid:
                raise DataError(f"{path}:{lineno}: empty geo id")
            if gid in seen:
                raise DataError(f"{path}:{lineno}: duplicate geo id {gid!r}")
            seen.add(gid)
            counts = []
            for col, cell in zip(GEO_TABLE_HEADER[1:], row[1:]):
                try:
                    c = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: {col} count {cell!r} is not a number") from None
                if c < 0:
                    raise DataError(f"{path}:{lineno}: negative {col} count {c}")
                counts.append(c)
            if sum(counts) <= 0:
                dropped += 1
                continue
            geo_ids.append(gid)
            rows.append(counts)
    if not rows:
        raise DataError(f"{path}: no geounit has positive population")
    counts = np.asarray(rows, dtype=np.float64)
    totals = counts.sum(axis=1, keepdims=True)
    dists = counts / totals
    marginal = counts.sum(axis=0) / counts.sum()
    return GeoTable(
        geo_ids=tuple(geo_ids),
        counts=counts,
        dists=dists,
        marginal=marginal,
        index={g: i for i, g in enumerate(geo_ids)},
        dropped_empty_units=dropped,
        source=str(path),
    )


def load_income_table(path) -> IncomeTable:
    """Load geo id -> median household income."""
    path = _open_rows(path)
    incomes: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        _check_header(path, next(reader, None), INCOME_TABLE_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            gid = row[0].strip()
            try:
                inc = float(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: income {row[1]!r} is not a number") from None
            if inc <= 0:
                raise DataError(f"{path}:{lineno}: income must be positive, got {inc}")
            if gid in incomes:
                raise DataError(f"{path}:{lineno}: duplicate geo id {gid!r}")
            incomes[gid] = inc
    if not incomes:
        raise DataError(f"{path}: no income rows")
    return IncomeTable(incomes=incomes, source=str(path))


def load_voters(path) -> list[VoterRecord]:
    """Load voter records; race may be blank when unknown."""
    path = _open_rows(path)
    voters: list[VoterRecord] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        _check_header(path, next(reader, None), VOTER_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(VOTER_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(VOTER_HEADER)} fields, got {len(row)}")
            vid, first, middle, last, geo, race = (c.strip() for c in row)
            if not vid:
                raise DataError(f"{path}:{lineno}: empty voter id")
            if vid in seen:
                raise DataError(f"{path}:{lineno}: duplicate voter id {vid!r}")
            seen.add(vid)
            if not last:
                raise DataError(f"{path}:{lineno}: voter {vid!r} has empty last name")
            if race and race not in RACES:
                raise DataError(f"{path}:{lineno}: unknown race label {race!r}")
            voters.append(VoterRecord(id=vid, first=first, middle=middle, last=last, geo=geo, race=race or None))
    return voters


def lookup_name(table: NameTable, raw: str) -> Optional[NameEntry]:
    """Entry for a raw name, or None when the name is not listed.

    Absence is a valid result: it is what marks a name as uncommon and
    routes the posterior to a substitute prior.
    """
    return table.entries.get(normalize_name(raw))


# --- coverage reporting -----------------------------------------------------

FN_STATUSES = ("fn_matched", "fn_unmatched")


@dataclass(frozen=True)
class GroupCoverage:
    """One surname-status group: sizes, first-name split, race-by-cell shares."""

    n: int
    pct_of_total: float
    fn_matched_pct: float  # of the group's voters
    fn_unmatched_pct: float
    n_known_race: int
    # race_cell_pct[race_idx, fn_status_idx]: percent of the group's
    # known-race voters in that (race, first-name-status) cell.
    race_cell_pct: np.ndarray


@dataclass(frozen=True)
class CoverageReport:
    """Match-status cross-tabulation of a voter set against the name tables."""

    n_total: int
    groups: Mapping[str, GroupCoverage]  # keys "matched" / "unmatched"

    def rows(self) -> list[dict]:
        """Long-form rows for CSV emission."""
        out = []
        for status, g in self.groups.items():
            for ri, race in enumerate(RACES):
                for fi, fn_status in enumerate(FN_STATUSES):
                    out.append(
                        {
                            "surname_status": status,
                            "fn_status": fn_status,
                            "race": race,
                            "pct_within_surname_group": g.race_cell_pct[ri, fi],
                            "group_n": g.n,
                            "group_pct_of_total": g.pct_of_total,
                        }
                    )
        return out


def coverage_report(
    surnames: NameTable, firstnames: NameTable, voters: Sequence[VoterRecord]
) -> CoverageReport:
    """Cross-tabulate surname and first-name match status over a voter set.

    Race shares are computed over voters with a known race within each
    surname group (matched/unmatched) and sum to 100 there; first-name
    shares are over all voters in the group.
    """
    if not voters:
        raise DataError("coverage_report: voters must be nonempty")
    n_total = len(voters)
    groups: dict[str, GroupCoverage] = {}
    by_status = {"matched": [], "unmatched": []}
    for v in voters:
        status = "matched" if lookup_name(surnames, v.last) is not None else "unmatched"
        by_status[status].append(v)
    for status, members in by_status.items():
        n = len(members)
        cell = np.zeros((N_RACES, 2))
        n_fn_matched = 0
        n_known = 0
        for v in members:
            fn_hit = lookup_name(firstnames, v.first) is not None if v.first else False
            fi = 0 if fn_hit else 1
            if fn_hit:
                n_fn_matched += 1
            if v.race is not None:
                cell[RACES.index(v.race), fi] += 1
                n_known += 1
        groups[status] = GroupCoverage(
            n=n,
            pct_of_total=100.0 * n / n_total,
            fn_matched_pct=100.0 * n_fn_matched / n if n else 0.0,
            fn_unmatched_pct=100.0 * (n - n_fn_matched) / n if n else 0.0,
            n_known_race=n_known,
            race_cell_pct=100.0 * cell / n_known if n_known else cell,
        )
    return CoverageReport(n_total=n_total, groups=groups)


# --- canonical-schema writers -----------------------------------------------


def write_name_table(table: NameTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(NAME_TABLE_HEADER)
        for name in sorted(table.entries):
            e = table.entries[name]
            w.writerow([name, e.count] + [f"{p:.9f}" for p in e.dist])


def write_geo_table(table: GeoTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(GEO_TABLE_HEADER)
        for gid in table.geo_ids:
            row = table.counts[table.index[gid]]
            w.writerow([gid] + [f"{c:.0f}" for c in row])


def write_income_table(table: IncomeTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(INCOME_TABLE_HEADER)
        for gid in sorted(table.incomes):
            w.writerow([gid, f"{table.incomes[gid]:.2f}"])


def write_voters(voters: Iterable[VoterRecord], path, include_race: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(VOTER_HEADER)
        for v in voters:
            race = v.race if (include_race and v.race) else ""
            w.writerow([v.id, v.first, v.middle, v.last, v.geo, race])
