"""Canonical domain types for the archival integration workbench.

Two families of types live here: the stored portal entities (countries,
repositories, documentary units with per-language descriptions, vocabularies,
authorities, links) and the intermediate ``Record`` form that every transform
stage converges on before ingest.  All types are immutable values and safe to
share across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Protocol, Sequence
from urllib.parse import quote, unquote

__all__ = [
    "ACCESS_POINT_KINDS",
    "AccessPoint",
    "AccessPointKind",
    "Concept",
    "Country",
    "DateSpan",
    "Description",
    "DocumentaryUnit",
    "FIELD_KEYS",
    "FieldValue",
    "HistoricalAgent",
    "LevelOfDescription",
    "Link",
    "LinkKind",
    "META_TARGETS",
    "Record",
    "Repository",
    "StoreView",
    "ValidationReport",
    "Violation",
    "Vocabulary",
    "access_point_target",
    "child_global_id",
    "collapse_ws",
    "descriptions_from_record",
    "encode_local_id",
    "is_valid_target",
    "validate_record_tree",
    "validate_unit",
]

# Closed ISAD(G)-subset list of description field keys.
FIELD_KEYS = (
    "scopecontent",
    "bioghist",
    "custodhist",
    "acqinfo",
    "arrangement",
    "accessrestrict",
    "userestrict",
    "processinfo",
    "physdesc",
    "note",
)

ACCESS_POINT_KINDS = (
    "subject",
    "place",
    "person",
    "corporateBody",
    "family",
    "creator",
    "genre",
)

# Mapping meta-targets: everything a rule may populate besides the plain
# description field keys.  "access_point:<kind>" is accepted for every kind.
META_TARGETS = ("local_id", "parent_ref", "parent_title", "level", "title", "language")

_COUNTRY_CODE_RE = re.compile(r"^[a-z]{2}$")
_REPOSITORY_ID_RE = re.compile(r"^[a-z]{2}-\d{6}$")
_LANGUAGE_RE = re.compile(r"^[a-z]{3}$")


class LevelOfDescription(str, Enum):
    FONDS = "fonds"
    SUBFONDS = "subfonds"
    SERIES = "series"
    SUBSERIES = "subseries"
    RECORDGRP = "recordgrp"
    COLLECTION = "collection"
    FILE = "file"
    ITEM = "item"
    OTHERLEVEL = "otherlevel"

    def __str__(self) -> str:  # serialization token is the lowercase value
        return self.value


class AccessPointKind(str, Enum):
    SUBJECT = "subject"
    PLACE = "place"
    PERSON = "person"
    CORPORATE_BODY = "corporateBody"
    FAMILY = "family"
    CREATOR = "creator"
    GENRE = "genre"

    def __str__(self) -> str:
        return self.value


class LinkKind(str, Enum):
    COPY = "copy"
    HIERARCHICAL = "hierarchical"
    TEMPORAL = "temporal"
    FAMILIAL = "familial"
    ASSOCIATIVE = "associative"

    def __str__(self) -> str:
        return self.value


def collapse_ws(text: str) -> str:
    """Collapse internal whitespace runs to single spaces and trim."""
    return " ".join(text.split())


def encode_local_id(local_id: str) -> str:
    """Percent-encode a local id for use as one global-id path segment.

    Whitespace is collapsed first; '/' and '%' are always escaped so the
    encoding is injective and path segments never collide.
    """
    return quote(collapse_ws(local_id), safe="")


def decode_local_id(segment: str) -> str:
    return unquote(segment)


def child_global_id(parent: str, local_id: str) -> str:
    """Global id of a child: parent global id (or repository id) + encoded segment."""
    return f"{parent}/{encode_local_id(local_id)}"


@dataclass(frozen=True)
class Country:
    code: str
    name: str
    report_summary: Optional[str] = None

    def __post_init__(self) -> None:
        if not _COUNTRY_CODE_RE.match(self.code):
            raise ValueError(f"country code must be 2 lowercase ASCII letters: {self.code!r}")


@dataclass(frozen=True)
class Repository:
    id: str
    country_code: str
    name: str
    contact: tuple = ()  # (label, value) pairs: address, url, email, ...
    history: Optional[str] = None

    def __post_init__(self) -> None:
        if not _REPOSITORY_ID_RE.match(self.id):
            raise ValueError(f"repository id must match <country>-<6 digits>: {self.id!r}")
        if not self.name:
            raise ValueError("repository name must be non-empty")
        object.__setattr__(self, "contact", tuple((str(k), str(v)) for k, v in self.contact))


@dataclass(frozen=True)
class DateSpan:
    """A date statement: verbatim text plus optional parsed ISO bounds."""

    text: str
    start: Optional[str] = None
    end: Optional[str] = None


@dataclass(frozen=True)
class AccessPoint:
    kind: AccessPointKind
    label: str
    target: Optional[str] = None  # Concept or HistoricalAgent id

    def __post_init__(self) -> None:
        if not isinstance(self.kind, AccessPointKind):
            object.__setattr__(self, "kind", AccessPointKind(self.kind))
        if not self.label:
            raise ValueError("access point label must be non-empty")


@dataclass(frozen=True)
class Description:
    """One per-language description block of a documentary unit."""

    language: str  # ISO 639-2 code
    title: str
    fields: tuple = ()  # ordered (field-key, value) pairs, keys from FIELD_KEYS
    dates: tuple = ()  # DateSpan values
    access_points: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple((str(k), str(v)) for k, v in self.fields))
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "access_points", tuple(self.access_points))

    def values_for(self, key: str) -> tuple:
        return tuple(v for k, v in self.fields if k == key)


@dataclass(frozen=True)
class DocumentaryUnit:
    global_id: str
    local_id: str
    repository_id: str
    parent_id: Optional[str]
    level: LevelOfDescription
    sibling_index: int
    descriptions: tuple
    source_dataset: str

    def __post_init__(self) -> None:
        if not self.local_id:
            raise ValueError("local_id must be non-empty")
        if self.sibling_index < 0:
            raise ValueError("sibling_index must be non-negative")
        object.__setattr__(self, "descriptions", tuple(self.descriptions))


@dataclass(frozen=True)
class Vocabulary:
    id: str
    name: str


@dataclass(frozen=True)
class Concept:
    id: str
    vocabulary_id: str
    pref_labels: tuple = ()  # (language, label) pairs
    broader: tuple = ()  # Concept ids within the same vocabulary

    def __post_init__(self) -> None:
        labels = tuple((str(k), str(v)) for k, v in self.pref_labels)
        if not labels:
            raise ValueError(f"concept {self.id!r} needs at least one pref_label")
        object.__setattr__(self, "pref_labels", labels)
        object.__setattr__(self, "broader", tuple(self.broader))


@dataclass(frozen=True)
class HistoricalAgent:
    id: str
    agent_type: str  # person | corporateBody | family
    name: str
    set_id: str

    def __post_init__(self) -> None:
        if self.agent_type not in ("person", "corporateBody", "family"):
            raise ValueError(f"unknown agent type: {self.agent_type!r}")
        if not self.name:
            raise ValueError("agent name must be non-empty")


@dataclass(frozen=True)
class Link:
    source_id: str
    target_id: str
    kind: LinkKind
    note: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, LinkKind):
            object.__setattr__(self, "kind", LinkKind(self.kind))
        if self.source_id == self.target_id:
            raise ValueError("link endpoints must differ")

    @property
    def key(self) -> str:
        return f"{self.source_id}|{self.target_id}|{self.kind.value}"


@dataclass(frozen=True)
class FieldValue:
    """One mapped value on a Record.

    ``key`` is a description field key, ``title``, or ``access_point:<kind>``.
    ``target`` carries a vocabulary/authority id once a concordance has
    linked an access point; it is never set for plain fields.
    """

    key: str
    value: str
    language: Optional[str] = None
    target: Optional[str] = None


def access_point_target(key: str) -> Optional[str]:
    """The access point kind named by a field key, or None for plain fields."""
    if key.startswith("access_point:"):
        kind = key.split(":", 1)[1]
        if kind in ACCESS_POINT_KINDS:
            return kind
    return None


def is_valid_target(target_field: str) -> bool:
    """True when a mapping rule may write to ``target_field``."""
    return (
        target_field in FIELD_KEYS
        or target_field in META_TARGETS
        or access_point_target(target_field) is not None
    )


@dataclass(frozen=True)
class Record:
    """Intermediate unit of archival description; all transforms converge here."""

    local_id: str
    parent_ref: Optional[str] = None
    level: Optional[LevelOfDescription] = None
    language: Optional[str] = None
    fields: tuple = ()  # FieldValue entries, order preserved
    children: tuple = ()
    parent_title: Optional[str] = None  # fonds title embedded in item exports

    def __post_init__(self) -> None:
        if not self.local_id:
            raise ValueError("record local_id must be non-empty")
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "children", tuple(self.children))
        for child in self.children:
            if child.parent_ref is not None and child.parent_ref != self.local_id:
                raise ValueError(
                    f"child {child.local_id!r} has parent_ref {child.parent_ref!r}, "
                    f"expected {self.local_id!r}"
                )
            if self.local_id in child.path_ids():
                raise ValueError(f"duplicate local_id {self.local_id!r} on a descent path")

    def path_ids(self) -> frozenset:
        """All local_ids occurring on any root-to-leaf path through this node.

        Cached: records are immutable, so the set never changes once built.
        """
        cached = getattr(self, "_path_ids", None)
        if cached is None:
            ids = {self.local_id}
            for child in self.children:
                ids |= child.path_ids()
            cached = frozenset(ids)
            object.__setattr__(self, "_path_ids", cached)
        return cached

    def values_for(self, key: str) -> tuple:
        return tuple(fv.value for fv in self.fields if fv.key == key)

    def first_value(self, key: str) -> Optional[str]:
        for fv in self.fields:
            if fv.key == key:
                return fv.value
        return None

    def with_children(self, children: Sequence["Record"]) -> "Record":
        return Record(
            local_id=self.local_id,
            parent_ref=self.parent_ref,
            level=self.level,
            language=self.language,
            fields=self.fields,
            children=tuple(children),
            parent_title=self.parent_title,
        )

    def with_parent_ref(self, parent_ref: Optional[str]) -> "Record":
        return Record(
            local_id=self.local_id,
            parent_ref=parent_ref,
            level=self.level,
            language=self.language,
            fields=self.fields,
            children=self.children,
            parent_title=self.parent_title,
        )

    def with_fields(self, fields: Sequence[FieldValue]) -> "Record":
        return Record(
            local_id=self.local_id,
            parent_ref=self.parent_ref,
            level=self.level,
            language=self.language,
            fields=tuple(fields),
            children=self.children,
            parent_title=self.parent_title,
        )

    def walk(self) -> Iterable["Record"]:
        yield self
        for child in self.children:
            yield from child.walk()


DEFAULT_LANGUAGE = "und"  # ISO 639-2 "undetermined"


def descriptions_from_record(record: Record) -> tuple:
    """Group a record's field values into per-language Description blocks.

    Each value lands in the block for its own language, falling back to the
    record language and finally to "und".  The first title value of a block
    becomes its title; a block without one borrows the record's first title
    so parallel descriptions stay valid.  Surplus title values are kept as
    ``note`` entries rather than dropped.
    """
    default_lang = record.language or DEFAULT_LANGUAGE
    order: list = []
    grouped: dict = {}
    for fv in record.fields:
        lang = fv.language or default_lang
        if lang not in grouped:
            grouped[lang] = []
            order.append(lang)
        grouped[lang].append(fv)
    if not order:
        order.append(default_lang)
        grouped[default_lang] = []

    overall_title = record.first_value("title")
    descriptions = []
    for lang in order:
        title: Optional[str] = None
        fields: list = []
        access_points: list = []
        for fv in grouped[lang]:
            kind = access_point_target(fv.key)
            if kind is not None:
                access_points.append(AccessPoint(AccessPointKind(kind), fv.value, fv.target))
            elif fv.key == "title":
                if title is None:
                    title = fv.value
                else:
                    fields.append(("note", fv.value))
            else:
                fields.append((fv.key, fv.value))
        descriptions.append(
            Description(
                language=lang,
                title=title if title is not None else (overall_title or ""),
                fields=tuple(fields),
                access_points=tuple(access_points),
            )
        )
    return tuple(descriptions)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    subject: Optional[str] = None  # global_id or local_id the violation is about


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "violations", tuple(self.violations))

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> tuple:
        return tuple(v.code for v in self.violations)


class StoreView(Protocol):
    """Read-only view of one space, as needed by validation."""

    def has_unit(self, global_id: str) -> bool: ...

    def units_under(self, parent_id: Optional[str], repository_id: str) -> Sequence[DocumentaryUnit]: ...

    def has_concept(self, concept_id: str) -> bool: ...

    def has_agent(self, agent_id: str) -> bool: ...


def validate_unit(unit: DocumentaryUnit, space: StoreView) -> ValidationReport:
    """Collect every invariant violation of ``unit`` against a space view.

    Violations are data, not errors: the report is empty iff the unit is valid.
    """
    out: list = []
    gid = unit.global_id

    if not unit.descriptions:
        out.append(Violation("missing-title", "unit has no descriptions", gid))
    seen_langs: set = set()
    for desc in unit.descriptions:
        if not desc.title.strip():
            out.append(Violation("missing-title", f"description ({desc.language}) has empty title", gid))
        if not _LANGUAGE_RE.match(desc.language):
            out.append(Violation("bad-language", f"not an ISO 639-2 code: {desc.language!r}", gid))
        if desc.language in seen_langs:
            out.append(Violation("duplicate-language", f"second description for {desc.language!r}", gid))
        seen_langs.add(desc.language)
        for key, _value in desc.fields:
            if key not in FIELD_KEYS:
                out.append(Violation("bad-field-key", f"field key {key!r} outside the closed list", gid))
        for ap in desc.access_points:
            if ap.target is not None:
                is_concept = space.has_concept(ap.target)
                is_agent = space.has_agent(ap.target)
                if not (is_concept or is_agent):
                    out.append(
                        Violation("dangling-access-point", f"target {ap.target!r} does not resolve", gid)
                    )
                elif ap.kind is AccessPointKind.CREATOR and not is_agent:
                    out.append(
                        Violation(
                            "creator-target-kind",
                            f"creator access point must target an authority, got {ap.target!r}",
                            gid,
                        )
                    )

    if not isinstance(unit.level, LevelOfDescription):
        out.append(Violation("bad-level", f"unknown level token: {unit.level!r}", gid))

    if unit.parent_id is not None and not space.has_unit(unit.parent_id):
        out.append(Violation("dangling-parent", f"parent {unit.parent_id!r} not found", gid))

    for sibling in space.units_under(unit.parent_id, unit.repository_id):
        if sibling.global_id != gid and sibling.local_id == unit.local_id:
            out.append(
                Violation("duplicate-sibling", f"sibling {sibling.global_id!r} shares local_id", gid)
            )

    return ValidationReport(tuple(out))


def validate_record_tree(records: Sequence[Record]) -> ValidationReport:
    """Pre-ingest checks on sibling groups of a record forest.

    Duplicate local_ids among siblings are the one defect the per-unit check
    cannot see before units exist in the store.
    """
    out: list = []

    def check_group(group: Sequence[Record]) -> None:
        seen: dict = {}
        for rec in group:
            if rec.local_id in seen:
                out.append(
                    Violation("duplicate-sibling", f"duplicate sibling local_id {rec.local_id!r}", rec.local_id)
                )
            seen[rec.local_id] = rec
        for rec in group:
            check_group(rec.children)

    check_group(records)
    return ValidationReport(tuple(out))
