"""Typed, chainable, cacheable transformation stages.

Provider files become canonical Record trees through an ordered pipeline of
stages: structural XML rewrites, declarative tabular mappings over XML, the
two-level CSV reshape, JSON mappings, and vocabulary concordances.  Each
stage is a pure function of (configuration, input bytes), which makes
per-stage outputs content-addressable: editing stage k of a pipeline only
re-executes stages k and onward.
"""

from __future__ import annotations

import csv
import io
import json
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import xml.etree.ElementTree as ET

from . import pathexpr
from .harvest import FileItem, FileSet, make_item
from .interchange import digest_of, records_digest
from .model import (
    FieldValue,
    LevelOfDescription,
    Record,
    access_point_target,
    is_valid_target,
)
from .pathexpr import PathExpr, PathParseError
from .vocab import Concordance, map_access_points

__all__ = [
    "CsvSpec",
    "JsonSpec",
    "MappingRule",
    "MappingTable",
    "MAPPING_HEADER",
    "PipelineResult",
    "PreviewResult",
    "RewriteRule",
    "Stage",
    "StageCache",
    "StageFailure",
    "StageTrace",
    "TransformError",
    "TransformPipeline",
    "apply_mapping",
    "compile_mapping",
    "csv_to_records",
    "json_to_records",
    "preview",
    "run_pipeline",
    "structural_rewrite",
]

MAPPING_HEADER = ("record_path", "target_field", "source", "template", "condition")

_XML_LANG = "{http://www.w3.org/XML/1998/namespace}lang"
_TEMPLATE_RE = re.compile(r"\{([^{}]+)\}")


class TransformError(Exception):
    pass


class MappingParseError(TransformError):
    def __init__(self, row: int, expr: str, reason: str):
        super().__init__(f"row {row}: bad expression {expr!r}: {reason}")
        self.row = row
        self.expr = expr


class MissingLocalIdRule(TransformError):
    def __init__(self, record_path: str):
        super().__init__(f"no local_id rule for record path {record_path!r}")
        self.record_path = record_path


class XmlParseError(TransformError):
    pass


class RuleConflictError(TransformError):
    pass


class CsvError(TransformError):
    def __init__(self, code: str, message: str, row: Optional[int] = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"{code}: {message}{where}")
        self.code = code
        self.row = row


class JsonError(TransformError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class StageFailure(TransformError):
    """A stage aborted the pipeline run."""

    def __init__(self, stage_index: int, kind: str, errors: Sequence[Tuple[str, str]]):
        detail = "; ".join(f"{name}: {msg}" for name, msg in errors)
        super().__init__(f"stage {stage_index} ({kind}) failed: {detail}")
        self.stage_index = stage_index
        self.kind = kind
        self.errors = tuple(errors)


# --- Declarative XML mapping ------------------------------------------------


@dataclass(frozen=True)
class MappingRule:
    record_path: PathExpr
    target_field: str
    source: Optional[PathExpr] = None
    template: Optional[str] = None
    condition: Optional[PathExpr] = None
    template_exprs: Tuple[PathExpr, ...] = ()

    def to_row(self) -> Tuple[str, str, str, str, str]:
        return (
            self.record_path.text,
            self.target_field,
            self.source.text if self.source else "",
            self.template or "",
            self.condition.text if self.condition else "",
        )


@dataclass(frozen=True)
class MappingTable:
    rules: Tuple[MappingRule, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        for path in self.record_paths():
            count = sum(
                1 for r in self.rules if r.record_path.text == path and r.target_field == "local_id"
            )
            if count != 1:
                raise MissingLocalIdRule(path)

    def record_paths(self) -> Tuple[str, ...]:
        seen: List[str] = []
        for rule in self.rules:
            if rule.record_path.text not in seen:
                seen.append(rule.record_path.text)
        return tuple(seen)

    def rules_for(self, record_path: str) -> Tuple[MappingRule, ...]:
        return tuple(r for r in self.rules if r.record_path.text == record_path)

    def to_dict(self) -> dict:
        return {"rules": [list(r.to_row()) for r in self.rules]}

    def to_table_text(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(MAPPING_HEADER)
        for rule in self.rules:
            writer.writerow(rule.to_row())
        return buf.getvalue()


def compile_mapping(text: str, delimiter: str = ",") -> MappingTable:
    """Compile a tabular mapping source into a checked MappingTable.

    The header row must be ``record_path,target_field,source,template,
    condition``.  Every expression is parsed up front so errors carry the row
    number and the offending expression; row order is preserved.
    """
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise MappingParseError(0, "", "empty mapping table") from None
    if tuple(h.strip() for h in header) != MAPPING_HEADER:
        raise MappingParseError(0, ",".join(header), f"header must be {','.join(MAPPING_HEADER)}")

    rules: List[MappingRule] = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(MAPPING_HEADER):
            raise MappingParseError(row_no, ",".join(row), f"expected {len(MAPPING_HEADER)} cells")
        record_path_s, target_field, source_s, template, condition_s = (c.strip() for c in row)

        if not is_valid_target(target_field):
            raise MappingParseError(row_no, target_field, "unknown target field")

        def parse_expr(expr: str) -> PathExpr:
            try:
                return pathexpr.parse(expr)
            except PathParseError as exc:
                raise MappingParseError(row_no, expr, str(exc)) from exc

        record_path = parse_expr(record_path_s)
        source = parse_expr(source_s) if source_s else None
        condition = parse_expr(condition_s) if condition_s else None
        template_exprs: Tuple[PathExpr, ...] = ()
        if template:
            template_exprs = tuple(parse_expr(m.group(1)) for m in _TEMPLATE_RE.finditer(template))
        if source is None and not template:
            raise MappingParseError(row_no, "", "rule needs a source or a template")

        rules.append(
            MappingRule(
                record_path=record_path,
                target_field=target_field,
                source=source,
                template=template or None,
                condition=condition,
                template_exprs=template_exprs,
            )
        )

    if not rules:
        raise MissingLocalIdRule("(empty table)")
    return MappingTable(tuple(rules))


def _element_lang(el: Optional[ET.Element]) -> Optional[str]:
    if el is None:
        return None
    return el.attrib.get("lang") or el.attrib.get(_XML_LANG)


def _rule_values(
    rule: MappingRule, node: ET.Element, root: ET.Element
) -> List[Tuple[str, Optional[ET.Element]]]:
    if rule.template is not None:
        values: List[str] = []
        for expr in rule.template_exprs:
            matches = expr.strings(node, root)
            values.append(matches[0] if matches else "")
        it = iter(values)
        text = _TEMPLATE_RE.sub(lambda _m: next(it), rule.template)
        return [(text, None)] if text else []
    assert rule.source is not None
    return rule.source.values(node, root)


def apply_mapping(
    table: MappingTable,
    doc: Union[bytes, str],
    warnings: Optional[List[str]] = None,
) -> List[Record]:
    """Apply a mapping table to one XML document, producing Record trees.

    Every element matched by a record path becomes a Record; matches nested
    inside other matches become children, mirroring recursive component
    elements.  Rules are evaluated relative to their record node, appending
    multi-valued matches in document order.  A ``lang`` attribute on a
    matched element is carried onto the produced field value, and an
    ``authfilenumber`` attribute on an access-point element is carried as
    its link target.
    """
    sink = warnings if warnings is not None else []
    try:
        root = ET.fromstring(doc if isinstance(doc, (bytes, bytearray)) else doc.encode("utf-8"))
    except ET.ParseError as exc:
        raise XmlParseError(f"xml-parse-error: {exc}") from exc

    # group membership: first matching record path wins
    node_group: Dict[int, str] = {}
    nodes_by_id: Dict[int, ET.Element] = {}
    for path in table.record_paths():
        expr = table.rules_for(path)[0].record_path
        for el in expr.evaluate(root, root):
            if id(el) not in node_group:
                node_group[id(el)] = path
                nodes_by_id[id(el)] = el

    if not node_group:
        return []

    parent_of: Dict[int, Optional[int]] = {}
    children_of: Dict[int, List[int]] = {id(el): [] for el in nodes_by_id.values()}
    roots: List[int] = []

    def assign(el: ET.Element, nearest: Optional[int]) -> None:
        mine = id(el) if id(el) in node_group else None
        if mine is not None:
            parent_of[mine] = nearest
            if nearest is None:
                roots.append(mine)
            else:
                children_of[nearest].append(mine)
            nearest = mine
        for child in el:
            assign(child, nearest)

    assign(root, None)

    def local_id_for(node_id: int) -> str:
        node = nodes_by_id[node_id]
        group = node_group[node_id]
        rule = next(r for r in table.rules_for(group) if r.target_field == "local_id")
        if rule.condition is not None and not rule.condition.evaluate(node, root):
            raise RuleConflictError(f"local_id rule condition failed for {pathexpr.local_name(node.tag)}")
        values = [v for v, _el in _rule_values(rule, node, root)]
        if not values:
            raise RuleConflictError(
                f"no local_id produced for a {pathexpr.local_name(node.tag)!r} record node"
            )
        if len(set(values)) > 1:
            raise RuleConflictError(f"conflicting local_id values {sorted(set(values))!r} for one node")
        return values[0]

    def build(node_id: int, parent_local_id: Optional[str]) -> Record:
        node = nodes_by_id[node_id]
        group = node_group[node_id]
        local_id = local_id_for(node_id)
        level: Optional[LevelOfDescription] = None
        language: Optional[str] = None
        parent_ref_value: Optional[str] = None
        parent_title: Optional[str] = None
        fields: List[FieldValue] = []

        for rule in table.rules_for(group):
            if rule.target_field == "local_id":
                continue
            if rule.condition is not None and not rule.condition.evaluate(node, root):
                continue
            values = _rule_values(rule, node, root)
            if not values:
                continue
            if rule.target_field == "level":
                token = values[0][0]
                try:
                    level = LevelOfDescription(token)
                except ValueError:
                    sink.append(f"{local_id}: unknown level token {token!r} ignored")
            elif rule.target_field == "language":
                language = values[0][0]
            elif rule.target_field == "parent_ref":
                parent_ref_value = values[0][0]
            elif rule.target_field == "parent_title":
                parent_title = values[0][0]
            else:
                for value, el in values:
                    target = None
                    if access_point_target(rule.target_field) is not None and el is not None:
                        target = el.attrib.get("authfilenumber")
                    fields.append(
                        FieldValue(rule.target_field, value, _element_lang(el), target)
                    )

        children = [build(c, local_id) for c in children_of[node_id]]
        try:
            return Record(
                local_id=local_id,
                parent_ref=parent_local_id if parent_local_id is not None else parent_ref_value,
                level=level,
                language=language,
                fields=tuple(fields),
                children=tuple(children),
                parent_title=parent_title,
            )
        except ValueError as exc:
            raise RuleConflictError(str(exc)) from exc

    return [build(r, None) for r in roots]


# --- Structural rewrite ------------------------------------------------------


@dataclass(frozen=True)
class RewriteRule:
    """One structural edit: rename | prune | wrap | copy-attribute."""

    kind: str
    match: PathExpr
    name: Optional[str] = None  # new element name (rename, wrap)
    source_attr: Optional[str] = None  # copy-attribute
    target_attr: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("rename", "prune", "wrap", "copy-attribute"):
            raise ValueError(f"unknown rewrite rule kind: {self.kind!r}")
        if self.kind in ("rename", "wrap") and not self.name:
            raise ValueError(f"{self.kind} rule needs a target name")
        if self.kind == "copy-attribute" and not (self.source_attr and self.target_attr):
            raise ValueError("copy-attribute rule needs source and target attribute names")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "match": self.match.text}
        if self.name:
            out["name"] = self.name
        if self.source_attr:
            out["source_attr"] = self.source_attr
        if self.target_attr:
            out["target_attr"] = self.target_attr
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RewriteRule":
        return cls(
            kind=data["kind"],
            match=pathexpr.parse(data["match"]),
            name=data.get("name"),
            source_attr=data.get("source_attr"),
            target_attr=data.get("target_attr"),
        )


def structural_rewrite(rules: Sequence[RewriteRule], doc: Union[bytes, str]) -> bytes:
    """Apply rewrite rules in order and re-serialize canonically.

    Rules whose match selects nothing are no-ops.  Output is well-formed XML
    with attributes in sorted order; untouched content survives modulo
    re-serialization.
    """
    try:
        root = ET.fromstring(doc if isinstance(doc, (bytes, bytearray)) else doc.encode("utf-8"))
    except ET.ParseError as exc:
        raise XmlParseError(f"xml-parse-error: {exc}") from exc

    for rule in rules:
        matches = [el for el in rule.match.evaluate(root, root) if isinstance(el, ET.Element)]
        if rule.kind == "rename":
            for el in matches:
                el.tag = rule.name
        elif rule.kind == "copy-attribute":
            for el in matches:
                if rule.source_attr in el.attrib:
                    el.set(rule.target_attr, el.attrib[rule.source_attr])
        elif rule.kind == "prune":
            if any(el is root for el in matches):
                raise TransformError("cannot prune the document root")
            root = _prune(root, set(id(el) for el in matches))
        elif rule.kind == "wrap":
            root = _wrap(root, set(id(el) for el in matches), rule.name)

    _sort_attributes(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def _prune(root: ET.Element, doomed: set) -> ET.Element:
    def walk(el: ET.Element) -> None:
        for child in list(el):
            if id(child) in doomed:
                # keep any tail text with the parent so content is not lost
                idx = list(el).index(child)
                if child.tail:
                    if idx > 0:
                        prev = list(el)[idx - 1]
                        prev.tail = (prev.tail or "") + child.tail
                    else:
                        el.text = (el.text or "") + child.tail
                el.remove(child)
            else:
                walk(child)

    walk(root)
    return root


def _wrap(root: ET.Element, targets: set, name: str) -> ET.Element:
    def walk(el: ET.Element) -> None:
        for idx, child in enumerate(list(el)):
            walk(child)
            if id(child) in targets:
                wrapper = ET.Element(name)
                wrapper.append(child)
                wrapper.tail = child.tail
                child.tail = None
                el.remove(child)
                el.insert(idx, wrapper)

    walk(root)
    if id(root) in targets:
        wrapper = ET.Element(name)
        wrapper.append(root)
        return wrapper
    return root


def _sort_attributes(root: ET.Element) -> None:
    for el in root.iter():
        if len(el.attrib) > 1:
            items = sorted(el.attrib.items())
            el.attrib.clear()
            el.attrib.update(items)


# --- CSV reshape -------------------------------------------------------------


@dataclass(frozen=True)
class CsvSpec:
    """Two-level reshape of a tabular export: grouped rows become parent trees."""

    group_by: Tuple[str, ...]
    parent_columns: Tuple[Tuple[str, str], ...]  # (column, target_field)
    child_columns: Tuple[Tuple[str, str], ...]
    delimiter: str = ","

    def __post_init__(self) -> None:
        object.__setattr__(self, "group_by", tuple(self.group_by))
        object.__setattr__(self, "parent_columns", tuple(tuple(p) for p in self.parent_columns))
        object.__setattr__(self, "child_columns", tuple(tuple(p) for p in self.child_columns))
        if not self.group_by:
            raise ValueError("group_by must name at least one column")
        for _col, target in self.parent_columns + self.child_columns:
            if not is_valid_target(target):
                raise ValueError(f"unknown target field {target!r}")
        if not any(target == "local_id" for _c, target in self.child_columns):
            raise ValueError("child_columns must map a local_id column")

    def to_dict(self) -> dict:
        return {
            "delimiter": self.delimiter,
            "group_by": list(self.group_by),
            "parent_columns": {c: t for c, t in self.parent_columns},
            "child_columns": {c: t for c, t in self.child_columns},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CsvSpec":
        return cls(
            group_by=tuple(data["group_by"]),
            parent_columns=tuple(data.get("parent_columns", {}).items()),
            child_columns=tuple(data["child_columns"].items()),
            delimiter=data.get("delimiter", ","),
        )


def csv_to_records(
    spec: CsvSpec,
    text: Union[bytes, str],
    warnings: Optional[List[str]] = None,
) -> List[Record]:
    """Reshape a two-level CSV into parent Records with one child per row.

    Rows are grouped by the group_by key in first-appearance order; the
    parent's fields come from the group's first row.  Conflicting parent
    cells in later rows keep the first value and emit a warning.
    """
    sink = warnings if warnings is not None else []
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text), delimiter=spec.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CsvError("missing-column", "file has no header row") from None

    index: Dict[str, int] = {name: i for i, name in enumerate(header)}
    referenced = list(spec.group_by) + [c for c, _t in spec.parent_columns + spec.child_columns]
    for column in referenced:
        if column not in index:
            raise CsvError("missing-column", f"column {column!r} not in header")

    rows: List[List[str]] = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise CsvError("ragged-row", f"expected {len(header)} cells, got {len(row)}", row_no)
        rows.append([cell.strip() for cell in row])
    if not rows:
        raise CsvError("missing-column", "file has no data rows")

    def apply_targets(
        pairs: Sequence[Tuple[str, str]], row: List[str]
    ) -> Tuple[Optional[str], Optional[LevelOfDescription], Optional[str], List[FieldValue]]:
        local_id = None
        level = None
        language = None
        fields: List[FieldValue] = []
        for column, target in pairs:
            value = row[index[column]]
            if not value:
                continue
            if target == "local_id":
                local_id = value
            elif target == "level":
                try:
                    level = LevelOfDescription(value)
                except ValueError:
                    sink.append(f"unknown level token {value!r} ignored")
            elif target == "language":
                language = value
            elif target in ("parent_ref", "parent_title"):
                continue  # structure is given by the grouping itself
            else:
                fields.append(FieldValue(target, value))
        return local_id, level, language, fields

    groups: List[Tuple[Tuple[str, ...], List[Tuple[int, List[str]]]]] = []
    group_index: Dict[Tuple[str, ...], int] = {}
    for row_no, row in enumerate(rows, start=1):
        key = tuple(row[index[c]] for c in spec.group_by)
        if key not in group_index:
            group_index[key] = len(groups)
            groups.append((key, []))
        groups[group_index[key]][1].append((row_no, row))

    trees: List[Record] = []
    seen_parent_ids: set = set()
    for key, grouped_rows in groups:
        first_no, first_row = grouped_rows[0]
        parent_local, parent_level, parent_lang, parent_fields = apply_targets(
            spec.parent_columns, first_row
        )
        if parent_local is None:
            # group key identifies the parent when no explicit id column is mapped
            parent_local = key[0]
        if not parent_local:
            raise CsvError("missing-column", f"empty parent id for group {key!r}", first_no)
        if parent_local in seen_parent_ids:
            raise CsvError(
                "duplicate-parent",
                f"two groups produce the same parent local_id {parent_local!r}; "
                "the group_by columns do not identify parents uniquely",
                first_no,
            )
        seen_parent_ids.add(parent_local)

        for row_no, row in grouped_rows[1:]:
            for column, _target in spec.parent_columns:
                if row[index[column]] != first_row[index[column]]:
                    sink.append(
                        f"row {row_no}: parent column {column!r} conflicts with first row "
                        f"({row[index[column]]!r} != {first_row[index[column]]!r}); first wins"
                    )

        children: List[Record] = []
        seen_child_ids: set = set()
        for row_no, row in grouped_rows:
            child_local, child_level, child_lang, child_fields = apply_targets(
                spec.child_columns, row
            )
            if not child_local:
                raise CsvError("missing-column", "empty child local_id", row_no)
            if child_local in seen_child_ids:
                raise CsvError(
                    "duplicate-child", f"duplicate child local_id {child_local!r} in group {key!r}", row_no
                )
            seen_child_ids.add(child_local)
            children.append(
                Record(
                    local_id=child_local,
                    parent_ref=parent_local,
                    level=child_level,
                    language=child_lang,
                    fields=tuple(child_fields),
                )
            )
        trees.append(
            Record(
                local_id=parent_local,
                level=parent_level,
                language=parent_lang,
                fields=tuple(parent_fields),
                children=tuple(children),
            )
        )
    return trees


# --- JSON mapping ------------------------------------------------------------


_JSON_PATH_RE = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def _json_path_steps(path: str) -> List[Union[str, int]]:
    steps: List[Union[str, int]] = []
    pos = 0
    for m in _JSON_PATH_RE.finditer(path):
        if m.start() != pos:
            raise ValueError(f"bad object path {path!r}")
        pos = m.end()
        if path[pos:pos + 1] == ".":
            pos += 1
        steps.append(int(m.group(2)) if m.group(2) is not None else m.group(1))
    if pos != len(path) or not steps:
        raise ValueError(f"bad object path {path!r}")
    return steps


def _json_resolve(obj: object, steps: Sequence[Union[str, int]]) -> List[object]:
    current: List[object] = [obj]
    for step in steps:
        nxt: List[object] = []
        for item in current:
            if isinstance(step, int):
                if isinstance(item, list) and 0 <= step < len(item):
                    nxt.append(item[step])
            elif isinstance(item, dict) and step in item:
                nxt.append(item[step])
        current = nxt
    return current


def _json_scalars(values: Sequence[object]) -> List[str]:
    out: List[str] = []
    for value in values:
        if isinstance(value, list):
            out.extend(_json_scalars(value))
        elif isinstance(value, bool):
            out.append("true" if value else "false")
        elif isinstance(value, (str, int, float)):
            text = str(value).strip() if isinstance(value, str) else str(value)
            if text:
                out.append(text)
    return out


@dataclass(frozen=True)
class JsonSpec:
    """Map an array of JSON objects onto flat Records."""

    iterator: str  # dot/bracket path to the record array
    fields: Tuple[Tuple[str, str], ...]  # (object path, target_field)
    parent_ref_path: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(tuple(p) for p in self.fields))
        _json_path_steps(self.iterator)
        for path, target in self.fields:
            _json_path_steps(path)
            if not is_valid_target(target):
                raise ValueError(f"unknown target field {target!r}")
        if not any(t == "local_id" for _p, t in self.fields):
            raise ValueError("fields must map a local_id path")
        if self.parent_ref_path:
            _json_path_steps(self.parent_ref_path)

    def to_dict(self) -> dict:
        out: dict = {"iterator": self.iterator, "fields": {p: t for p, t in self.fields}}
        if self.parent_ref_path:
            out["parent_ref"] = self.parent_ref_path
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "JsonSpec":
        return cls(
            iterator=data["iterator"],
            fields=tuple(data["fields"].items()),
            parent_ref_path=data.get("parent_ref"),
        )


def json_to_records(spec: JsonSpec, text: Union[bytes, str]) -> List[Record]:
    """One flat Record per array element; linking happens later via build_tree."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise JsonError("json-parse-error", str(exc)) from exc

    roots = _json_resolve(payload, _json_path_steps(spec.iterator))
    if len(roots) != 1 or not isinstance(roots[0], list):
        raise JsonError("iterator-not-array", f"path {spec.iterator!r} does not select an array")

    records: List[Record] = []
    for i, element in enumerate(roots[0]):
        local_id: Optional[str] = None
        level: Optional[LevelOfDescription] = None
        language: Optional[str] = None
        fields: List[FieldValue] = []
        for path, target in spec.fields:
            values = _json_scalars(_json_resolve(element, _json_path_steps(path)))
            if not values:
                continue
            if target == "local_id":
                local_id = values[0]
            elif target == "level":
                try:
                    level = LevelOfDescription(values[0])
                except ValueError:
                    pass
            elif target == "language":
                language = values[0]
            elif target in ("parent_ref", "parent_title"):
                continue
            else:
                fields.extend(FieldValue(target, v) for v in values)
        if not local_id:
            raise JsonError("missing-local-id", f"element {i} has no local_id value")
        parent_ref = None
        if spec.parent_ref_path:
            parents = _json_scalars(_json_resolve(element, _json_path_steps(spec.parent_ref_path)))
            parent_ref = parents[0] if parents else None
        records.append(
            Record(
                local_id=local_id,
                parent_ref=parent_ref,
                level=level,
                language=language,
                fields=tuple(fields),
            )
        )
    return records


# --- Stages and pipelines -----------------------------------------------------


FILES_XML = "files-xml"
FILES_CSV = "files-csv"
FILES_JSON = "files-json"
RECORDS = "records"


class StageKind(str, Enum):
    XML_MAPPING = "xml-mapping"
    STRUCTURAL_REWRITE = "structural-rewrite"
    CSV_RESHAPE = "csv-reshape"
    JSON_MAPPING = "json-mapping"
    CONCORDANCE = "concordance"

    def __str__(self) -> str:
        return self.value


_STAGE_TYPES = {
    StageKind.STRUCTURAL_REWRITE: (FILES_XML, FILES_XML),
    StageKind.XML_MAPPING: (FILES_XML, RECORDS),
    StageKind.CSV_RESHAPE: (FILES_CSV, RECORDS),
    StageKind.JSON_MAPPING: (FILES_JSON, RECORDS),
    StageKind.CONCORDANCE: (RECORDS, RECORDS),
}

_MEDIA_COMPAT = {
    FILES_XML: ("application/xml", "text/xml", "application/rdf+xml"),
    FILES_CSV: ("text/csv", "text/plain", "application/csv"),
    FILES_JSON: ("application/json", "text/json"),
}


@dataclass(frozen=True)
class Stage:
    kind: StageKind
    mapping: Optional[MappingTable] = None
    rewrite_rules: Tuple[RewriteRule, ...] = ()
    csv_spec: Optional[CsvSpec] = None
    json_spec: Optional[JsonSpec] = None
    concordance: Optional[Concordance] = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, StageKind):
            object.__setattr__(self, "kind", StageKind(self.kind))
        object.__setattr__(self, "rewrite_rules", tuple(self.rewrite_rules))
        needed = {
            StageKind.XML_MAPPING: self.mapping,
            StageKind.STRUCTURAL_REWRITE: self.rewrite_rules,
            StageKind.CSV_RESHAPE: self.csv_spec,
            StageKind.JSON_MAPPING: self.json_spec,
            StageKind.CONCORDANCE: self.concordance,
        }[self.kind]
        if needed is None:
            raise ValueError(f"stage {self.kind} is missing its configuration")

    @property
    def input_type(self) -> str:
        return _STAGE_TYPES[self.kind][0]

    @property
    def output_type(self) -> str:
        return _STAGE_TYPES[self.kind][1]

    def config_digest(self) -> str:
        return digest_of(self.to_dict())

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.mapping is not None:
            out["mapping"] = self.mapping.to_dict()
        if self.rewrite_rules:
            out["rules"] = [r.to_dict() for r in self.rewrite_rules]
        if self.csv_spec is not None:
            out["csv"] = self.csv_spec.to_dict()
        if self.json_spec is not None:
            out["json"] = self.json_spec.to_dict()
        if self.concordance is not None:
            out["concordance"] = self.concordance.to_dict()
        return out


@dataclass(frozen=True)
class TransformPipeline:
    stages: Tuple[Stage, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("pipeline needs at least one stage")
        for i in range(len(self.stages) - 1):
            a, b = self.stages[i], self.stages[i + 1]
            if a.output_type != b.input_type:
                raise ValueError(
                    f"stage {i} outputs {a.output_type} but stage {i + 1} expects {b.input_type}"
                )
        if self.stages[-1].output_type != RECORDS:
            raise ValueError("pipeline must end by producing records")

    @property
    def input_type(self) -> str:
        return self.stages[0].input_type

    def to_dict(self) -> dict:
        return {"stages": [s.to_dict() for s in self.stages]}


@dataclass(frozen=True)
class StageRun:
    index: int
    kind: str
    cache_hit: bool
    duration_ms: float
    input_count: int
    output_count: int
    warnings: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "cache_hit": self.cache_hit,
            "duration_ms": round(self.duration_ms, 3),
            "input_count": self.input_count,
            "output_count": self.output_count,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class StageTrace:
    runs: Tuple[StageRun, ...] = ()

    def to_dict(self) -> dict:
        return {"stages": [r.to_dict() for r in self.runs]}

    @property
    def warnings(self) -> Tuple[str, ...]:
        out: List[str] = []
        for run in self.runs:
            out.extend(run.warnings)
        return tuple(out)


class StageCache:
    """Content-addressed store of stage outputs keyed by (config, input) digests."""

    def __init__(self) -> None:
        self._entries: Dict[Tuple[str, str], object] = {}
        self.hits = 0
        self.misses = 0

    def get(self, key: Tuple[str, str]) -> Optional[object]:
        value = self._entries.get(key)
        if value is not None:
            self.hits += 1
        else:
            self.misses += 1
        return value

    def put(self, key: Tuple[str, str], value: object) -> None:
        self._entries[key] = value

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class PipelineResult:
    records: Tuple[Record, ...]
    trace: StageTrace


@dataclass(frozen=True)
class PreviewResult:
    records: Tuple[Record, ...]
    ead: Tuple[str, ...]  # one serialized document per top-level record
    trace: StageTrace


def _fileset_digest(files: FileSet) -> str:
    return digest_of([[i.name, i.checksum, i.deleted] for i in files.items])


def _input_digest(payload: object) -> str:
    if isinstance(payload, FileSet):
        return _fileset_digest(payload)
    return records_digest(list(payload))


def _check_media_types(pipeline: TransformPipeline, files: FileSet) -> None:
    accepted = _MEDIA_COMPAT[pipeline.input_type]
    bad = [
        item.name
        for item in files.items
        if not item.deleted and item.media_type not in accepted
    ]
    if bad:
        raise StageFailure(
            0,
            pipeline.stages[0].kind.value,
            [(name, f"media type does not match {pipeline.input_type}") for name in bad],
        )


def _run_stage(stage: Stage, payload: object, index: int) -> Tuple[object, List[str]]:
    warnings: List[str] = []
    errors: List[Tuple[str, str]] = []

    if stage.kind is StageKind.CONCORDANCE:
        records, report = map_access_points(tuple(payload), stage.concordance)
        if report.unmatched:
            warnings.append(
                f"{len(report.unmatched)} unmatched access point(s): "
                + ", ".join(sorted(set(report.unmatched))[:10])
            )
        return tuple(records), warnings

    files: FileSet = payload
    active = [item for item in files.items if not item.deleted]

    if stage.kind is StageKind.STRUCTURAL_REWRITE:
        out_items: List[FileItem] = []
        for item in files.items:
            if item.deleted:
                out_items.append(item)
                continue
            try:
                rewritten = structural_rewrite(stage.rewrite_rules, item.data)
            except TransformError as exc:
                errors.append((item.name, str(exc)))
                continue
            out_items.append(make_item(item.name, rewritten, item.source_uri, item.media_type))
        if errors:
            raise StageFailure(index, stage.kind.value, errors)
        return FileSet(items=tuple(out_items), fetched_at=files.fetched_at, errors=files.errors), warnings

    records_out: List[Record] = []
    for item in active:
        try:
            if stage.kind is StageKind.XML_MAPPING:
                records_out.extend(apply_mapping(stage.mapping, item.data, warnings=warnings))
            elif stage.kind is StageKind.CSV_RESHAPE:
                records_out.extend(csv_to_records(stage.csv_spec, item.data, warnings=warnings))
            elif stage.kind is StageKind.JSON_MAPPING:
                records_out.extend(json_to_records(stage.json_spec, item.data))
        except TransformError as exc:
            errors.append((item.name, str(exc)))
    if errors:
        raise StageFailure(index, stage.kind.value, errors)
    return tuple(records_out), warnings


def run_pipeline(
    pipeline: TransformPipeline,
    files: FileSet,
    cache: Optional[StageCache] = None,
) -> PipelineResult:
    """Run every stage in order over a FileSet, producing Record trees.

    Stage outputs are cached by (stage config digest, input digest), so a
    rerun after editing stage k only re-executes stages k and onward.  The
    first failing stage aborts the run with its index and per-file errors.
    """
    _check_media_types(pipeline, files)
    payload: object = files
    runs: List[StageRun] = []
    for index, stage in enumerate(pipeline.stages):
        input_count = len(payload.items) if isinstance(payload, FileSet) else len(payload)
        key = (stage.config_digest(), _input_digest(payload))
        cached = cache.get(key) if cache is not None else None
        started = time.perf_counter()
        if cached is not None:
            payload, warnings = cached
            cache_hit = True
        else:
            payload, warnings = _run_stage(stage, payload, index)
            if cache is not None:
                cache.put(key, (payload, tuple(warnings)))
            cache_hit = False
        duration_ms = (time.perf_counter() - started) * 1000.0
        output_count = len(payload.items) if isinstance(payload, FileSet) else len(payload)
        runs.append(
            StageRun(
                index=index,
                kind=stage.kind.value,
                cache_hit=cache_hit,
                duration_ms=duration_ms,
                input_count=input_count,
                output_count=output_count,
                warnings=tuple(warnings),
            )
        )
    return PipelineResult(records=tuple(payload), trace=StageTrace(tuple(runs)))


def preview(
    pipeline: TransformPipeline,
    files: FileSet,
    limit: int,
    cache: Optional[StageCache] = None,
) -> PreviewResult:
    """Run the pipeline over the first ``limit`` files only; never writes anywhere.

    Output is identical to a full run restricted to those files, plus the
    records serialized in the EAD profile for display.
    """
    from .ead import serialize_ead

    if limit < 1:
        raise ValueError("preview limit must be >= 1")
    result = run_pipeline(pipeline, files.first(limit), cache=cache)
    return PreviewResult(
        records=result.records,
        ead=tuple(serialize_ead(result.records)),
        trace=result.trace,
    )
