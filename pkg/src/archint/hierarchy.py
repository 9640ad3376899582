"""Reconstruct archival hierarchies that providers ship flattened or split.

Providers frequently export hierarchical descriptions as flat rows with a
parent reference, as separate fonds/item files, or across two formats of
uneven richness.  The operations here rebuild proper Record trees from those
shapes; orphans and unmatched rows are always reported, never repaired or
dropped silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .model import FieldValue, Record

__all__ = [
    "CycleError",
    "DuplicateLocalIdError",
    "MergeResult",
    "OrphanReport",
    "build_tree",
    "flatten",
    "priority_merge",
    "skeleton_enrich",
]


class DuplicateLocalIdError(ValueError):
    def __init__(self, local_id: str):
        super().__init__(f"duplicate local_id in flat input: {local_id!r}")
        self.local_id = local_id


class CycleError(ValueError):
    def __init__(self, cycle_ids: Sequence[str]):
        super().__init__("parent_ref cycle: " + " -> ".join(cycle_ids))
        self.cycle_ids = tuple(cycle_ids)


@dataclass(frozen=True)
class OrphanReport:
    """Records whose parent_ref resolved to nothing."""

    orphans: Tuple[Record, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.orphans

    def to_dict(self) -> dict:
        return {"orphans": [{"local_id": r.local_id, "parent_ref": r.parent_ref} for r in self.orphans]}


def build_tree(flat: Sequence[Record]) -> Tuple[Tuple[Record, ...], OrphanReport]:
    """Attach each record under the one named by its parent_ref.

    Records without parent_ref become roots.  Sibling order follows input
    order.  Records referencing an absent parent are returned in the orphan
    report rather than silently dropped or re-rooted.
    """
    by_id: Dict[str, Record] = {}
    for rec in flat:
        if rec.local_id in by_id:
            raise DuplicateLocalIdError(rec.local_id)
        by_id[rec.local_id] = rec

    _check_cycles(flat, by_id)

    children: Dict[str, List[Record]] = {rec.local_id: [] for rec in flat}
    roots: List[Record] = []
    orphans: List[Record] = []
    for rec in flat:
        if rec.parent_ref is None:
            roots.append(rec)
        elif rec.parent_ref in by_id:
            children[rec.parent_ref].append(rec)
        else:
            orphans.append(rec)

    def assemble(rec: Record) -> Record:
        return rec.with_children([assemble(c) for c in children[rec.local_id]])

    # orphans keep any children that resolved to them, so nothing is lost
    return tuple(assemble(r) for r in roots), OrphanReport(tuple(assemble(r) for r in orphans))


def _check_cycles(flat: Sequence[Record], by_id: Dict[str, Record]) -> None:
    state: Dict[str, int] = {}  # 1 = on stack, 2 = done
    for rec in flat:
        if state.get(rec.local_id):
            continue
        path: List[str] = []
        cur: Optional[Record] = rec
        while cur is not None and state.get(cur.local_id) != 2:
            if state.get(cur.local_id) == 1:
                start = path.index(cur.local_id)
                raise CycleError(path[start:] + [cur.local_id])
            state[cur.local_id] = 1
            path.append(cur.local_id)
            cur = by_id.get(cur.parent_ref) if cur.parent_ref is not None else None
        for lid in path:
            state[lid] = 2


def flatten(trees: Sequence[Record]) -> Tuple[Record, ...]:
    """Pre-order traversal to flat records with parent_ref set; inverse of build_tree."""
    out: List[Record] = []

    def visit(rec: Record, parent: Optional[str]) -> None:
        out.append(rec.with_parent_ref(parent).with_children(()))
        for child in rec.children:
            visit(child, rec.local_id)

    for tree in trees:
        visit(tree, None)
    return tuple(out)


@dataclass(frozen=True)
class MergeResult:
    trees: Tuple[Record, ...]
    unmatched: Tuple[Record, ...] = ()  # supplement records with no primary match
    warnings: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "unmatched": [r.local_id for r in self.unmatched],
            "warnings": list(self.warnings),
        }


def skeleton_enrich(items: Sequence[Record], fonds: Sequence[Record]) -> MergeResult:
    """Two-phase ingest for hierarchies split across files.

    Phase 1 groups item records beneath synthesized skeleton parents built
    from the fonds id (and title) each item carries.  Phase 2 merges the full
    fonds records onto matching skeletons by local_id: fonds fields replace
    the skeleton's, children gained in phase 1 are kept.  Fonds without items
    become childless trees; conflicting skeleton titles warn, first wins.
    """
    warnings: List[str] = []
    skeleton_order: List[str] = []
    skeleton_title: Dict[str, Optional[str]] = {}
    grouped: Dict[str, List[Record]] = {}
    loose: List[Record] = []

    for item in items:
        fid = item.parent_ref
        if fid is None:
            loose.append(item)
            continue
        if fid not in grouped:
            grouped[fid] = []
            skeleton_order.append(fid)
            skeleton_title[fid] = item.parent_title
        elif item.parent_title is not None:
            current = skeleton_title[fid]
            if current is None:
                skeleton_title[fid] = item.parent_title
            elif current != item.parent_title:
                warnings.append(
                    f"conflicting skeleton titles for {fid!r}: keeping {current!r}, "
                    f"ignoring {item.parent_title!r}"
                )
        grouped[fid].append(item)

    fonds_by_id = {}
    for f in fonds:
        if f.local_id in fonds_by_id:
            raise DuplicateLocalIdError(f.local_id)
        fonds_by_id[f.local_id] = f

    trees: List[Record] = []
    for fid in skeleton_order:
        children = grouped[fid]
        full = fonds_by_id.pop(fid, None)
        if full is not None:
            base = full.with_children(tuple(full.children) + tuple(children))
        else:
            title = skeleton_title[fid]
            fields = (FieldValue("title", title),) if title is not None else ()
            base = Record(local_id=fid, fields=fields, children=tuple(children))
        trees.append(base)

    # fonds that grouped no items stand alone, in their input order
    trees.extend(fonds_by_id.values())
    trees.extend(loose)
    return MergeResult(trees=tuple(trees), warnings=tuple(warnings))


def priority_merge(primary: Sequence[Record], supplement: Sequence[Record]) -> MergeResult:
    """Merge a richer flat export into hierarchy-preserving primary trees.

    For every primary node with a supplement record of the same local_id,
    field keys present in primary keep the primary values; keys only the
    supplement has are copied in.  Hierarchy comes exclusively from primary;
    supplement records matching nothing are reported unmatched.
    """
    supp_by_id: Dict[str, Record] = {}
    for rec in supplement:
        if rec.local_id in supp_by_id:
            raise DuplicateLocalIdError(rec.local_id)
        supp_by_id[rec.local_id] = rec

    matched: set = set()

    def merge_node(node: Record) -> Record:
        supp = supp_by_id.get(node.local_id)
        children = tuple(merge_node(c) for c in node.children)
        if supp is None:
            return node.with_children(children)
        matched.add(node.local_id)
        own_keys = {fv.key for fv in node.fields}
        extra = tuple(fv for fv in supp.fields if fv.key not in own_keys)
        merged = node.with_fields(tuple(node.fields) + extra)
        if merged.level is None and supp.level is not None:
            merged = Record(
                local_id=merged.local_id,
                parent_ref=merged.parent_ref,
                level=supp.level,
                language=merged.language,
                fields=merged.fields,
                children=merged.children,
                parent_title=merged.parent_title,
            )
        return merged.with_children(children)

    trees = tuple(merge_node(t) for t in primary)
    unmatched = tuple(rec for rec in supplement if rec.local_id not in matched)
    return MergeResult(trees=trees, unmatched=unmatched)
