"""A small, pure path language over XML documents.

Supported grammar (a deliberately closed subset of XPath-style paths):

    expr      = '//' steps | '/' steps | steps | '@' NAME | 'text()'
    steps     = step (('/' | '//') step)*
    step      = nametest predicate* | '@' NAME | 'text()'
    nametest  = NAME | PREFIX ':' NAME | '*'
    predicate = '[@' NAME '=' "'" VALUE "'" ']' | '[' INTEGER ']'

Element names match on local name, so namespaced and plain documents are
addressed the same way; an explicit ``prefix:name`` test also matches on the
local part.  ``@name`` and ``text()`` are terminal, value-producing steps.
Index predicates are 1-based and select within each evaluation context's
match list.  Evaluation is pure and deterministic (document order).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import xml.etree.ElementTree as ET

__all__ = ["PathExpr", "PathParseError", "parse", "local_name"]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*")


class PathParseError(ValueError):
    def __init__(self, expr: str, pos: int, message: str):
        super().__init__(f"bad path expression {expr!r} at offset {pos}: {message}")
        self.expr = expr
        self.pos = pos


def local_name(tag: str) -> str:
    """Local part of an ElementTree tag (strips any '{uri}' prefix)."""
    if tag.startswith("{"):
        return tag.rsplit("}", 1)[-1]
    return tag


@dataclass(frozen=True)
class _Predicate:
    attr: Optional[str] = None
    value: Optional[str] = None
    index: Optional[int] = None


@dataclass(frozen=True)
class _Step:
    axis: str  # "child" | "descendant"
    name: str  # local name or "*"
    predicates: Tuple[_Predicate, ...] = ()


@dataclass(frozen=True)
class PathExpr:
    text: str
    absolute: bool
    steps: Tuple[_Step, ...]
    terminal: Optional[Tuple[str, str]] = None  # ("attr", name) or ("text", "")

    def __str__(self) -> str:
        return self.text

    def evaluate(self, node: ET.Element, root: Optional[ET.Element] = None) -> List[Union[ET.Element, str]]:
        """All matches relative to ``node`` (or the document root if absolute).

        Element steps yield elements; terminal ``@attr``/``text()`` steps
        yield raw strings.
        """
        selected = self._select(node, root)
        if self.terminal is None:
            return list(selected)
        kind, name = self.terminal
        out: List[Union[ET.Element, str]] = []
        for el in selected:
            if kind == "attr":
                if name in el.attrib:
                    out.append(el.attrib[name])
            else:
                text = (el.text or "") + "".join(child.tail or "" for child in el)
                if text:
                    out.append(text)
        return out

    def _select(self, node: ET.Element, root: Optional[ET.Element]) -> List[ET.Element]:
        doc = root if root is not None else node
        current: List[object] = [_DOC] if self.absolute else [node]
        for step in self.steps:
            nxt: List[ET.Element] = []
            seen = set()
            for ctx in current:
                if ctx is _DOC:
                    if step.axis == "child":
                        candidates = [doc] if _test(doc, step.name) else []
                    else:  # '//x' searches the whole document, root included
                        candidates = [el for el in doc.iter() if _test(el, step.name)]
                else:
                    if step.axis == "child":
                        candidates = [c for c in ctx if _test(c, step.name)]
                    else:
                        candidates = [c for c in _descendants(ctx) if _test(c, step.name)]
                candidates = [c for c in candidates if _keep(c, step.predicates, candidates)]
                for c in candidates:
                    if id(c) not in seen:
                        seen.add(id(c))
                        nxt.append(c)
            current = nxt
            if not current:
                break
        return [doc if c is _DOC else c for c in current]

    def strings(self, node: ET.Element, root: Optional[ET.Element] = None) -> List[str]:
        """Matches as trimmed strings; element matches use their string-value."""
        return [text for text, _el in self.values(node, root)]

    def values(
        self, node: ET.Element, root: Optional[ET.Element] = None
    ) -> List[Tuple[str, Optional[ET.Element]]]:
        """(trimmed string value, source element) pairs, empty values dropped.

        For terminal ``@attr``/``text()`` steps the source element is the
        owner of the attribute or text; plain element matches report
        themselves.  The element lets callers pick up carried metadata such
        as ``lang`` attributes.
        """
        selected = self._select(node, root)
        out: List[Tuple[str, Optional[ET.Element]]] = []
        if self.terminal is None:
            for el in selected:
                text = "".join(el.itertext()).strip()
                if text:
                    out.append((text, el))
            return out
        kind, name = self.terminal
        for el in selected:
            if kind == "attr":
                value = el.attrib.get(name)
                if value is not None and value.strip():
                    out.append((value.strip(), el))
            else:
                text = ((el.text or "") + "".join(child.tail or "" for child in el)).strip()
                if text:
                    out.append((text, el))
        return out


class _DocSentinel:
    """Virtual document node: parent of the root element for absolute paths."""


_DOC = _DocSentinel()


def _descendants(el: ET.Element):
    it = el.iter()
    next(it, None)  # mid-path '//' is a true descendant axis, self excluded
    return it


def _test(el: ET.Element, name: str) -> bool:
    if not isinstance(el.tag, str):  # comments / processing instructions
        return False
    return name == "*" or local_name(el.tag) == name


def _keep(el: ET.Element, predicates: Sequence[_Predicate], group: Sequence[ET.Element]) -> bool:
    for pred in predicates:
        if pred.index is not None:
            if pred.index < 1 or pred.index > len(group) or group[pred.index - 1] is not el:
                return False
        else:
            if el.attrib.get(pred.attr) != pred.value:
                return False
    return True


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, literal: str) -> bool:
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str) -> None:
        if not self.take(literal):
            raise PathParseError(self.text, self.pos, f"expected {literal!r}")

    def name(self) -> str:
        m = _NAME_RE.match(self.text, self.pos)
        if not m:
            raise PathParseError(self.text, self.pos, "expected a name")
        self.pos = m.end()
        return m.group(0)


def parse(expr: str) -> PathExpr:
    """Parse a path expression, raising PathParseError on bad grammar."""
    text = expr.strip()
    if not text:
        raise PathParseError(expr, 0, "empty expression")
    sc = _Scanner(text)

    absolute = False
    first_axis = "child"
    if sc.take("//"):
        absolute = True
        first_axis = "descendant"
    elif sc.take("/"):
        absolute = True
    elif sc.take("./"):
        pass  # explicit relative prefix

    steps: List[_Step] = []
    terminal: Optional[Tuple[str, str]] = None
    axis = first_axis

    while True:
        if sc.take("@"):
            terminal = ("attr", sc.name())
            break
        if sc.take("text()"):
            terminal = ("text", "")
            break
        if sc.take("*"):
            name = "*"
        else:
            name = sc.name()
            if sc.take(":"):  # prefix:name matches on the local part
                name = sc.name()
        predicates: List[_Predicate] = []
        while sc.take("["):
            if sc.take("@"):
                attr = sc.name()
                sc.expect("=")
                sc.expect("'")
                end = sc.text.find("'", sc.pos)
                if end < 0:
                    raise PathParseError(text, sc.pos, "unterminated string")
                value = sc.text[sc.pos:end]
                sc.pos = end + 1
            else:
                start = sc.pos
                while sc.peek().isdigit():
                    sc.pos += 1
                if sc.pos == start:
                    raise PathParseError(text, sc.pos, "expected '@attr=' or an index")
                attr, value = None, None
                predicates.append(_Predicate(index=int(sc.text[start:sc.pos])))
                sc.expect("]")
                continue
            sc.expect("]")
            predicates.append(_Predicate(attr=attr, value=value))
        steps.append(_Step(axis=axis, name=name, predicates=tuple(predicates)))

        if sc.take("//"):
            axis = "descendant"
        elif sc.take("/"):
            axis = "child"
        else:
            break

    if not sc.eof():
        raise PathParseError(text, sc.pos, "trailing characters")
    if terminal is None and not steps:
        raise PathParseError(text, 0, "expression selects nothing")
    return PathExpr(text=text, absolute=absolute, steps=tuple(steps), terminal=terminal)
