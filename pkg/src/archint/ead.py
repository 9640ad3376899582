"""The workbench's EAD 2002 profile: serializer and canonical inverse mapping.

Record trees serialize to a fixed, deterministic EAD subset so providers can
review their material in a familiar shape and mappings can be checked by
round-tripping.  The profile nests components as ``archdesc/dsc/c`` with
direct ``c`` recursion, puts unitid/unittitle/langmaterial/origination in
``did``, emits the description field keys as direct children in canonical
order, and carries per-value languages as ``lang`` attributes and vocabulary
links as ``authfilenumber`` attributes.

``canonical_mapping()`` is the inverse: applying it to serialized output
reproduces the Record tree exactly, provided the input was in canonical form
(fields grouped as title, field keys, access points, in profile order).  The
profile is documented by ``resources/ead-profile.xsd``.
"""

from __future__ import annotations

import io
from typing import List, Optional, Sequence

import xml.etree.ElementTree as ET

from .model import ACCESS_POINT_KINDS, FIELD_KEYS, LevelOfDescription, Record, access_point_target
from .transform import MappingTable, compile_mapping

__all__ = [
    "EadSerializeError",
    "ACCESS_POINT_ELEMENTS",
    "canonical_mapping",
    "canonical_mapping_text",
    "serialize_ead",
]

# Access point kind -> (parent element, element name); creator sits in did
ACCESS_POINT_ELEMENTS = {
    "subject": ("controlaccess", "subject"),
    "place": ("controlaccess", "geogname"),
    "person": ("controlaccess", "persname"),
    "corporateBody": ("controlaccess", "corpname"),
    "family": ("controlaccess", "famname"),
    "creator": ("did", "origination"),
    "genre": ("controlaccess", "genreform"),
}

_XML_DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>\n'


class EadSerializeError(ValueError):
    pass


def _value_element(parent: ET.Element, tag: str, value: str, language: Optional[str], target: Optional[str] = None) -> None:
    el = ET.SubElement(parent, tag)
    # insertion order is serialization order: keep attributes sorted
    if target is not None:
        el.set("authfilenumber", target)
    if language is not None:
        el.set("lang", language)
    el.text = value


def _fill_node(el: ET.Element, record: Record) -> None:
    level = record.level or LevelOfDescription.OTHERLEVEL
    el.set("level", level.value)

    did = ET.SubElement(el, "did")
    unitid = ET.SubElement(did, "unitid")
    unitid.text = record.local_id

    for fv in record.fields:
        if fv.key == "title":
            _value_element(did, "unittitle", fv.value, fv.language)
        elif fv.key not in FIELD_KEYS and access_point_target(fv.key) is None:
            raise EadSerializeError(f"invalid-record: field key {fv.key!r} is outside the profile")

    if record.language is not None:
        langmaterial = ET.SubElement(did, "langmaterial")
        ET.SubElement(langmaterial, "language", {"langcode": record.language})

    for fv in record.fields:
        if access_point_target(fv.key) == "creator":
            _value_element(did, "origination", fv.value, fv.language, fv.target)

    for key in FIELD_KEYS:
        for fv in record.fields:
            if fv.key == key:
                _value_element(el, key, fv.value, fv.language)

    controlaccess: Optional[ET.Element] = None
    for kind in ACCESS_POINT_KINDS:
        parent_name, tag = ACCESS_POINT_ELEMENTS[kind]
        if parent_name != "controlaccess":
            continue
        key = f"access_point:{kind}"
        for fv in record.fields:
            if fv.key == key:
                if controlaccess is None:
                    controlaccess = ET.SubElement(el, "controlaccess")
                _value_element(controlaccess, tag, fv.value, fv.language, fv.target)

    if record.children:
        container = ET.SubElement(el, "dsc") if el.tag == "archdesc" else el
        for child in record.children:
            _fill_node(ET.SubElement(container, "c"), child)


def serialize_ead(records: Sequence[Record]) -> List[str]:
    """Serialize each top-level record as one EAD profile document.

    Output is deterministic: stable element and attribute order, two-space
    indentation, UTF-8 text with an XML declaration.
    """
    documents: List[str] = []
    for record in records:
        ead = ET.Element("ead")
        eadheader = ET.SubElement(ead, "eadheader")
        eadid = ET.SubElement(eadheader, "eadid")
        eadid.text = record.local_id
        archdesc = ET.SubElement(ead, "archdesc")
        _fill_node(archdesc, record)
        tree = ET.ElementTree(ead)
        ET.indent(tree, space="  ")
        documents.append(_XML_DECLARATION + ET.tostring(ead, encoding="unicode") + "\n")
    return documents


def canonical_mapping_text() -> str:
    """The default EAD mapping as a tabular source, the shape providers edit."""
    rows = []
    for record_path in ("/ead/archdesc", "//c"):
        rows.append(f"{record_path},local_id,did/unitid,,")
        rows.append(f"{record_path},level,@level,,")
        rows.append(f"{record_path},language,did/langmaterial/language/@langcode,,")
        rows.append(f"{record_path},title,did/unittitle,,")
        for key in FIELD_KEYS:
            rows.append(f"{record_path},{key},{key},,")
        for kind in ACCESS_POINT_KINDS:
            parent_name, tag = ACCESS_POINT_ELEMENTS[kind]
            rows.append(f"{record_path},access_point:{kind},{parent_name}/{tag},,")
    return "record_path,target_field,source,template,condition\n" + "\n".join(rows) + "\n"


def canonical_mapping() -> MappingTable:
    return compile_mapping(canonical_mapping_text())
