"""Concordances: mapping provider access-point terms onto controlled vocabularies.

A concordance is a per-provider lookup table from (label, kind) pairs to
concept or authority ids.  Matching is deterministic; by default labels are
compared case- and whitespace-insensitively after Unicode NFC normalization,
with a strict mode for providers whose terms are already clean.
"""

from __future__ import annotations

import csv
import io
import unicodedata
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .model import ACCESS_POINT_KINDS, FieldValue, Record, StoreView, access_point_target

__all__ = [
    "Concordance",
    "ConcordanceEntry",
    "ConcordanceError",
    "MappingReport",
    "load_concordance",
    "map_access_points",
    "normalize_label",
]

CONCORDANCE_HEADER = ("source_label", "kind", "target_id")

MATCH_EXACT = "exact"
MATCH_FOLD = "fold"  # case- and whitespace-insensitive (default)


class ConcordanceError(ValueError):
    def __init__(self, code: str, message: str, row: Optional[int] = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"{code}: {message}{where}")
        self.code = code
        self.row = row


def normalize_label(label: str, mode: str = MATCH_FOLD) -> str:
    text = unicodedata.normalize("NFC", label)
    if mode == MATCH_EXACT:
        return text
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class ConcordanceEntry:
    source_label: str
    source_kind: str
    target_id: str


@dataclass(frozen=True)
class Concordance:
    scope_id: str
    entries: Tuple[ConcordanceEntry, ...] = ()
    match_mode: str = MATCH_FOLD

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for entry in self.entries:
            if entry.source_kind not in ACCESS_POINT_KINDS:
                raise ConcordanceError("bad-kind", f"unknown access point kind {entry.source_kind!r}")
            key = (normalize_label(entry.source_label, self.match_mode), entry.source_kind)
            if key in seen:
                raise ConcordanceError(
                    "duplicate-source", f"duplicate entry for {entry.source_label!r}/{entry.source_kind}"
                )
            seen.add(key)

    def lookup(self, label: str, kind: str) -> Optional[str]:
        key = (normalize_label(label, self.match_mode), kind)
        return self._index().get(key)

    def _index(self) -> Dict[Tuple[str, str], str]:
        index = getattr(self, "_cached_index", None)
        if index is None:
            index = {
                (normalize_label(e.source_label, self.match_mode), e.source_kind): e.target_id
                for e in self.entries
            }
            object.__setattr__(self, "_cached_index", index)
        return index

    def to_dict(self) -> dict:
        return {
            "scope_id": self.scope_id,
            "match_mode": self.match_mode,
            "entries": [
                {"source_label": e.source_label, "kind": e.source_kind, "target_id": e.target_id}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Concordance":
        return cls(
            scope_id=data["scope_id"],
            match_mode=data.get("match_mode", MATCH_FOLD),
            entries=tuple(
                ConcordanceEntry(e["source_label"], e["kind"], e["target_id"])
                for e in data.get("entries", [])
            ),
        )


def load_concordance(
    text: str,
    space: StoreView,
    scope_id: str,
    delimiter: str = ",",
    match_mode: str = MATCH_FOLD,
) -> Concordance:
    """Parse a concordance table and verify every target against the space.

    Expects the documented header ``source_label,kind,target_id``.  Rows are
    numbered from 1 (excluding the header) in error messages.
    """
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ConcordanceError("bad-header", "empty concordance file") from None
    if tuple(h.strip() for h in header) != CONCORDANCE_HEADER:
        raise ConcordanceError(
            "bad-header", f"expected header {','.join(CONCORDANCE_HEADER)}, got {','.join(header)}"
        )

    entries: List[ConcordanceEntry] = []
    seen = set()
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise ConcordanceError("ragged-row", f"expected 3 cells, got {len(row)}", row_no)
        label, kind, target_id = (cell.strip() for cell in row)
        if kind not in ACCESS_POINT_KINDS:
            raise ConcordanceError("bad-kind", f"unknown access point kind {kind!r}", row_no)
        key = (normalize_label(label, match_mode), kind)
        if key in seen:
            raise ConcordanceError("duplicate-source", f"duplicate entry for {label!r}/{kind}", row_no)
        seen.add(key)
        is_concept = space.has_concept(target_id)
        is_agent = space.has_agent(target_id)
        if not (is_concept or is_agent):
            raise ConcordanceError("dangling-target", f"target {target_id!r} does not resolve", row_no)
        if kind == "creator" and not is_agent:
            raise ConcordanceError(
                "dangling-target", f"creator entries must target an authority, got {target_id!r}", row_no
            )
        entries.append(ConcordanceEntry(label, kind, target_id))

    return Concordance(scope_id=scope_id, entries=tuple(entries), match_mode=match_mode)


@dataclass(frozen=True)
class MappingReport:
    matched: int = 0
    unmatched: Tuple[str, ...] = ()  # one entry per unmatched access point, verbatim

    @property
    def total(self) -> int:
        return self.matched + len(self.unmatched)

    def to_dict(self) -> dict:
        return {"matched": self.matched, "unmatched": list(self.unmatched)}


def map_access_points(
    records: Sequence[Record], concordance: Concordance
) -> Tuple[Tuple[Record, ...], MappingReport]:
    """Link access-point fields to vocabulary targets via the concordance.

    Labels are never rewritten; unmatched access points stay unlinked and are
    listed in the report.  Applying the same concordance twice is a no-op.
    """
    matched = 0
    unmatched: List[str] = []

    def map_record(rec: Record) -> Record:
        nonlocal matched
        new_fields: List[FieldValue] = []
        changed = False
        for fv in rec.fields:
            kind = access_point_target(fv.key)
            if kind is None:
                new_fields.append(fv)
                continue
            target = concordance.lookup(fv.value, kind)
            if target is None:
                unmatched.append(fv.value)
                new_fields.append(fv)
                continue
            matched += 1
            if fv.target != target:
                new_fields.append(FieldValue(fv.key, fv.value, fv.language, target))
                changed = True
            else:
                new_fields.append(fv)
        new_children = tuple(map_record(c) for c in rec.children)
        if not changed and new_children == rec.children:
            return rec
        return rec.with_fields(new_fields).with_children(new_children)

    mapped = tuple(map_record(r) for r in records)
    return mapped, MappingReport(matched=matched, unmatched=tuple(unmatched))
