"""Canonical JSON interchange for records, units and store entities.

Every serialization here is deterministic: keys are emitted in a fixed
documented order, optional fields are omitted when absent, and the byte form
is stable across runs.  Digests are SHA-256 over the compact form.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Sequence

from .model import (
    AccessPoint,
    AccessPointKind,
    Concept,
    Country,
    DateSpan,
    Description,
    DocumentaryUnit,
    FieldValue,
    HistoricalAgent,
    LevelOfDescription,
    Link,
    LinkKind,
    Record,
    Repository,
    Vocabulary,
)


def canonical_json(data: Any) -> str:
    """Compact deterministic JSON (digest form)."""
    return json.dumps(data, ensure_ascii=False, separators=(",", ":"))


def dumps_interchange(data: Any) -> str:
    """Readable deterministic JSON (file form), newline-terminated."""
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(data: Any) -> str:
    return sha256_hex(canonical_json(data).encode("utf-8"))


# --- Record trees ---------------------------------------------------------


def record_to_dict(record: Record) -> dict:
    out: dict = {"local_id": record.local_id}
    if record.parent_ref is not None:
        out["parent_ref"] = record.parent_ref
    if record.parent_title is not None:
        out["parent_title"] = record.parent_title
    if record.level is not None:
        out["level"] = record.level.value
    if record.language is not None:
        out["language"] = record.language
    out["fields"] = [_field_to_dict(fv) for fv in record.fields]
    out["children"] = [record_to_dict(c) for c in record.children]
    return out


def _field_to_dict(fv: FieldValue) -> dict:
    out: dict = {"key": fv.key, "value": fv.value}
    if fv.language is not None:
        out["language"] = fv.language
    if fv.target is not None:
        out["target"] = fv.target
    return out


def record_from_dict(data: dict) -> Record:
    return Record(
        local_id=data["local_id"],
        parent_ref=data.get("parent_ref"),
        parent_title=data.get("parent_title"),
        level=LevelOfDescription(data["level"]) if data.get("level") else None,
        language=data.get("language"),
        fields=tuple(
            FieldValue(
                key=f["key"],
                value=f["value"],
                language=f.get("language"),
                target=f.get("target"),
            )
            for f in data.get("fields", [])
        ),
        children=tuple(record_from_dict(c) for c in data.get("children", [])),
    )


def records_to_json(records: Sequence[Record]) -> str:
    return dumps_interchange([record_to_dict(r) for r in records])


def records_from_json(text: str) -> tuple:
    return tuple(record_from_dict(d) for d in json.loads(text))


def records_digest(records: Sequence[Record]) -> str:
    return digest_of([record_to_dict(r) for r in records])


# --- Documentary units ----------------------------------------------------


def unit_to_dict(unit: DocumentaryUnit, include_sibling_index: bool = True) -> dict:
    out: dict = {
        "global_id": unit.global_id,
        "local_id": unit.local_id,
        "repository_id": unit.repository_id,
        "parent_id": unit.parent_id,
        "level": unit.level.value if isinstance(unit.level, LevelOfDescription) else str(unit.level),
    }
    if include_sibling_index:
        out["sibling_index"] = unit.sibling_index
    out["descriptions"] = [_description_to_dict(d) for d in unit.descriptions]
    out["source_dataset"] = unit.source_dataset
    return out


def _description_to_dict(desc: Description) -> dict:
    out: dict = {
        "language": desc.language,
        "title": desc.title,
        "fields": [{"key": k, "value": v} for k, v in desc.fields],
    }
    if desc.dates:
        out["dates"] = [_date_to_dict(d) for d in desc.dates]
    if desc.access_points:
        out["access_points"] = [_access_point_to_dict(ap) for ap in desc.access_points]
    return out


def _date_to_dict(span: DateSpan) -> dict:
    out: dict = {"text": span.text}
    if span.start is not None:
        out["start"] = span.start
    if span.end is not None:
        out["end"] = span.end
    return out


def _access_point_to_dict(ap: AccessPoint) -> dict:
    out: dict = {"kind": ap.kind.value, "label": ap.label}
    if ap.target is not None:
        out["target"] = ap.target
    return out


def unit_from_dict(data: dict) -> DocumentaryUnit:
    return DocumentaryUnit(
        global_id=data["global_id"],
        local_id=data["local_id"],
        repository_id=data["repository_id"],
        parent_id=data.get("parent_id"),
        level=LevelOfDescription(data["level"]),
        sibling_index=data.get("sibling_index", 0),
        descriptions=tuple(_description_from_dict(d) for d in data.get("descriptions", [])),
        source_dataset=data["source_dataset"],
    )


def _description_from_dict(data: dict) -> Description:
    return Description(
        language=data["language"],
        title=data["title"],
        fields=tuple((f["key"], f["value"]) for f in data.get("fields", [])),
        dates=tuple(
            DateSpan(text=d["text"], start=d.get("start"), end=d.get("end"))
            for d in data.get("dates", [])
        ),
        access_points=tuple(
            AccessPoint(AccessPointKind(a["kind"]), a["label"], a.get("target"))
            for a in data.get("access_points", [])
        ),
    )


def unit_digest(unit: DocumentaryUnit) -> str:
    """Content digest of a unit; sibling order is deliberately excluded."""
    return digest_of(unit_to_dict(unit, include_sibling_index=False))


# --- Other store entities -------------------------------------------------


def entity_to_dict(entity: Any) -> dict:
    if isinstance(entity, DocumentaryUnit):
        return unit_to_dict(entity)
    if isinstance(entity, Country):
        out = {"code": entity.code, "name": entity.name}
        if entity.report_summary is not None:
            out["report_summary"] = entity.report_summary
        return out
    if isinstance(entity, Repository):
        out = {
            "id": entity.id,
            "country_code": entity.country_code,
            "name": entity.name,
            "contact": [[k, v] for k, v in entity.contact],
        }
        if entity.history is not None:
            out["history"] = entity.history
        return out
    if isinstance(entity, Vocabulary):
        return {"id": entity.id, "name": entity.name}
    if isinstance(entity, Concept):
        return {
            "id": entity.id,
            "vocabulary_id": entity.vocabulary_id,
            "pref_labels": [[k, v] for k, v in entity.pref_labels],
            "broader": list(entity.broader),
        }
    if isinstance(entity, HistoricalAgent):
        return {
            "id": entity.id,
            "agent_type": entity.agent_type,
            "name": entity.name,
            "set_id": entity.set_id,
        }
    if isinstance(entity, Link):
        out = {
            "source_id": entity.source_id,
            "target_id": entity.target_id,
            "kind": entity.kind.value,
        }
        if entity.note is not None:
            out["note"] = entity.note
        return out
    raise TypeError(f"not a store entity: {type(entity).__name__}")


_ENTITY_PARSERS = {
    "countries": lambda d: Country(d["code"], d["name"], d.get("report_summary")),
    "repositories": lambda d: Repository(
        d["id"], d["country_code"], d["name"],
        tuple((k, v) for k, v in d.get("contact", [])), d.get("history"),
    ),
    "vocabularies": lambda d: Vocabulary(d["id"], d["name"]),
    "concepts": lambda d: Concept(
        d["id"], d["vocabulary_id"],
        tuple((k, v) for k, v in d.get("pref_labels", [])), tuple(d.get("broader", [])),
    ),
    "agents": lambda d: HistoricalAgent(d["id"], d["agent_type"], d["name"], d["set_id"]),
    "links": lambda d: Link(d["source_id"], d["target_id"], LinkKind(d["kind"]), d.get("note")),
    "units": unit_from_dict,
}


def entity_from_dict(collection: str, data: dict) -> Any:
    try:
        parser = _ENTITY_PARSERS[collection]
    except KeyError:
        raise ValueError(f"unknown entity collection: {collection!r}") from None
    return parser(data)


def entity_digest(entity: Any) -> str:
    if isinstance(entity, DocumentaryUnit):
        return unit_digest(entity)
    return digest_of(entity_to_dict(entity))
