"""Transactional hierarchical repository with staging and production spaces.

The store keeps every entity collection per space in immutable snapshot
states; a transaction works on copies and swaps the snapshot atomically on
commit, so readers always see the last committed state and a rollback is a
no-op by construction.  Commits append to a transaction log and full
snapshots serialize to bit-stable canonical files, which keeps rollback and
promotion verifiable by digest comparison.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .interchange import (
    digest_of,
    dumps_interchange,
    entity_digest,
    entity_from_dict,
    entity_to_dict,
    unit_digest,
)
from .model import (
    Concept,
    Country,
    DocumentaryUnit,
    HistoricalAgent,
    LevelOfDescription,
    Link,
    Record,
    Repository,
    ValidationReport,
    Vocabulary,
    child_global_id,
    descriptions_from_record,
    validate_record_tree,
    validate_unit,
)

__all__ = [
    "ChangeSummary",
    "DuplicateSiblingError",
    "IntegrityError",
    "MissingManifestError",
    "NotApprovedError",
    "NotFoundError",
    "PromotionReport",
    "SPACES",
    "Space",
    "SpaceState",
    "Store",
    "StoreError",
    "SyncManifest",
    "Transaction",
    "UnitNode",
    "ValidationFailure",
    "space_digest",
]

SPACES = ("staging", "production")

COLLECTIONS = ("countries", "repositories", "vocabularies", "concepts", "agents", "links", "units")


class StoreError(Exception):
    pass


class NotFoundError(StoreError):
    pass


class NotApprovedError(StoreError):
    pass


class MissingManifestError(StoreError):
    pass


class DuplicateSiblingError(StoreError):
    pass


class IntegrityError(StoreError):
    pass


class ValidationFailure(StoreError):
    def __init__(self, report: ValidationReport):
        lines = "; ".join(f"{v.code}({v.subject}): {v.message}" for v in report.violations[:5])
        more = "" if len(report.violations) <= 5 else f" (+{len(report.violations) - 5} more)"
        super().__init__(f"validation failed: {lines}{more}")
        self.report = report


@dataclass(frozen=True)
class SyncManifest:
    """Per-dataset ledger of ingested global ids and content digests."""

    dataset_id: str
    entries: Tuple[Tuple[str, str], ...]  # sorted (global_id, digest)
    timestamp: Optional[datetime] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))

    def ids(self) -> Tuple[str, ...]:
        return tuple(gid for gid, _d in self.entries)

    def digest_for(self, global_id: str) -> Optional[str]:
        for gid, digest in self.entries:
            if gid == global_id:
                return digest
        return None

    def to_dict(self, include_timestamp: bool = False) -> dict:
        out: dict = {"dataset_id": self.dataset_id, "entries": [[g, d] for g, d in self.entries]}
        if include_timestamp and self.timestamp is not None:
            out["timestamp"] = self.timestamp.isoformat()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SyncManifest":
        stamp = data.get("timestamp")
        return cls(
            dataset_id=data["dataset_id"],
            entries=tuple((g, d) for g, d in data.get("entries", [])),
            timestamp=datetime.fromisoformat(stamp) if stamp else None,
        )

    def content_digest(self) -> str:
        # timestamps deliberately excluded: equal content means equal digest
        return digest_of(self.to_dict())


class SpaceState:
    """One immutable committed snapshot of a space's collections."""

    __slots__ = ("countries", "repositories", "vocabularies", "concepts", "agents", "links", "units", "manifests")

    def __init__(
        self,
        countries: Optional[Dict[str, Country]] = None,
        repositories: Optional[Dict[str, Repository]] = None,
        vocabularies: Optional[Dict[str, Vocabulary]] = None,
        concepts: Optional[Dict[str, Concept]] = None,
        agents: Optional[Dict[str, HistoricalAgent]] = None,
        links: Optional[Dict[str, Link]] = None,
        units: Optional[Dict[str, DocumentaryUnit]] = None,
        manifests: Optional[Dict[str, SyncManifest]] = None,
    ):
        self.countries = dict(countries or {})
        self.repositories = dict(repositories or {})
        self.vocabularies = dict(vocabularies or {})
        self.concepts = dict(concepts or {})
        self.agents = dict(agents or {})
        self.links = dict(links or {})
        self.units = dict(units or {})
        self.manifests = dict(manifests or {})

    def copy(self) -> "SpaceState":
        return SpaceState(
            self.countries, self.repositories, self.vocabularies, self.concepts,
            self.agents, self.links, self.units, self.manifests,
        )

    def collection(self, name: str) -> dict:
        return getattr(self, name)

    # StoreView protocol used by validate_unit and concordance loading
    def has_unit(self, global_id: str) -> bool:
        return global_id in self.units

    def units_under(self, parent_id: Optional[str], repository_id: str) -> List[DocumentaryUnit]:
        if parent_id is None:
            found = [
                u for u in self.units.values()
                if u.parent_id is None and u.repository_id == repository_id
            ]
        else:
            found = [u for u in self.units.values() if u.parent_id == parent_id]
        return sorted(found, key=lambda u: (u.sibling_index, u.global_id))

    def has_concept(self, concept_id: str) -> bool:
        return concept_id in self.concepts

    def has_agent(self, agent_id: str) -> bool:
        return agent_id in self.agents

    def entity_exists(self, entity_id: str) -> bool:
        return any(entity_id in self.collection(c) for c in COLLECTIONS)


@dataclass
class Space:
    name: str
    state: SpaceState = field(default_factory=SpaceState)


@dataclass(frozen=True)
class ChangeSummary:
    created: int = 0
    updated: int = 0
    unchanged: int = 0
    actions: Tuple[Tuple[str, str], ...] = ()  # (global_id, created|updated|unchanged)

    def merged(self, other: "ChangeSummary") -> "ChangeSummary":
        return ChangeSummary(
            created=self.created + other.created,
            updated=self.updated + other.updated,
            unchanged=self.unchanged + other.unchanged,
            actions=self.actions + other.actions,
        )

    def to_dict(self) -> dict:
        return {
            "created": self.created,
            "updated": self.updated,
            "unchanged": self.unchanged,
            "actions": [[g, a] for g, a in self.actions],
        }


@dataclass(frozen=True)
class PromotionReport:
    dataset_id: str
    created: int = 0
    updated: int = 0
    unchanged: int = 0
    deleted: int = 0
    blocked: Tuple[str, ...] = ()  # deletions refused (link-targeted units)
    warnings: Tuple[str, ...] = ()

    @property
    def all_unchanged(self) -> bool:
        return self.created == 0 and self.updated == 0 and self.deleted == 0

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "created": self.created,
            "updated": self.updated,
            "unchanged": self.unchanged,
            "deleted": self.deleted,
            "blocked": list(self.blocked),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class UnitNode:
    unit: DocumentaryUnit
    children: Tuple["UnitNode", ...] = ()

    def walk(self) -> Iterable[DocumentaryUnit]:
        yield self.unit
        for child in self.children:
            yield from child.walk()

    def to_dict(self) -> dict:
        out = entity_to_dict(self.unit)
        out["children"] = [c.to_dict() for c in self.children]
        return out


class Transaction:
    """Buffered mutations over one space; all-or-nothing on commit."""

    def __init__(self, store: "Store", space_name: str):
        self._store = store
        self.space_name = space_name
        self.state = store.space(space_name).copy()  # working copy; reads see buffered writes
        self._puts: Dict[str, List[dict]] = {}
        self._deletes: Dict[str, List[str]] = {}
        self._manifests: List[SyncManifest] = []
        self.closed = False

    def put(self, collection: str, entity_id: str, entity: object) -> None:
        self._require_open()
        self.state.collection(collection)[entity_id] = entity
        self._puts.setdefault(collection, []).append(entity_to_dict(entity))

    def delete(self, collection: str, entity_id: str) -> None:
        self._require_open()
        self.state.collection(collection).pop(entity_id, None)
        self._deletes.setdefault(collection, []).append(entity_id)

    def set_manifest(self, manifest: SyncManifest) -> None:
        self._require_open()
        self.state.manifests[manifest.dataset_id] = manifest
        self._manifests.append(manifest)

    def _require_open(self) -> None:
        if self.closed:
            raise StoreError("transaction is closed")

    def _log_entry(self, seq: int) -> dict:
        return {
            "seq": seq,
            "space": self.space_name,
            "puts": self._puts,
            "deletes": self._deletes,
            "manifests": [m.to_dict(include_timestamp=True) for m in self._manifests],
        }


def _check_integrity(state: SpaceState) -> None:
    """Full referential-integrity scan; raises IntegrityError on the first hole."""
    for repo in state.repositories.values():
        if repo.country_code not in state.countries:
            raise IntegrityError(f"repository {repo.id} references unknown country {repo.country_code!r}")
    for concept in state.concepts.values():
        if concept.vocabulary_id not in state.vocabularies:
            raise IntegrityError(f"concept {concept.id} references unknown vocabulary")
        for broader_id in concept.broader:
            other = state.concepts.get(broader_id)
            if other is None:
                raise IntegrityError(f"concept {concept.id} has dangling broader {broader_id!r}")
            if other.vocabulary_id != concept.vocabulary_id:
                raise IntegrityError(f"concept {concept.id} broader crosses vocabularies")
    _check_concept_cycles(state.concepts)
    for link in state.links.values():
        for endpoint in (link.source_id, link.target_id):
            if not state.entity_exists(endpoint):
                raise IntegrityError(f"link endpoint {endpoint!r} does not resolve")
    for unit in state.units.values():
        if unit.repository_id not in state.repositories:
            raise IntegrityError(f"unit {unit.global_id} references unknown repository")
        if unit.parent_id is not None and unit.parent_id not in state.units:
            raise IntegrityError(f"unit {unit.global_id} has dangling parent {unit.parent_id!r}")
        for desc in unit.descriptions:
            for ap in desc.access_points:
                if ap.target is not None and not (
                    state.has_concept(ap.target) or state.has_agent(ap.target)
                ):
                    raise IntegrityError(f"unit {unit.global_id} access point target {ap.target!r} dangles")
    _check_unit_cycles(state.units)
    for manifest in state.manifests.values():
        for gid in manifest.ids():
            if gid not in state.units:
                raise IntegrityError(f"manifest {manifest.dataset_id} lists missing unit {gid!r}")


def _check_concept_cycles(concepts: Dict[str, Concept]) -> None:
    state: Dict[str, int] = {}

    def visit(cid: str, stack: Tuple[str, ...]) -> None:
        if state.get(cid) == 2:
            return
        if state.get(cid) == 1:
            raise IntegrityError(f"broader cycle through concept {cid!r}")
        state[cid] = 1
        for broader_id in concepts[cid].broader:
            if broader_id in concepts:
                visit(broader_id, stack + (cid,))
        state[cid] = 2

    for cid in concepts:
        visit(cid, ())


def _check_unit_cycles(units: Dict[str, DocumentaryUnit]) -> None:
    for gid in units:
        seen = set()
        cur: Optional[str] = gid
        while cur is not None:
            if cur in seen:
                raise IntegrityError(f"parent cycle through unit {gid!r}")
            seen.add(cur)
            unit = units.get(cur)
            cur = unit.parent_id if unit is not None else None


class Store:
    """Two fixed spaces, serialized single-writer transactions, optional persistence."""

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else None
        self._spaces: Dict[str, Space] = {name: Space(name) for name in SPACES}
        self._lock = threading.RLock()
        self._seq = 0
        self.dataset_status: Dict[str, str] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._load()

    # --- reading ---------------------------------------------------------

    def space(self, name: str) -> SpaceState:
        if name not in self._spaces:
            raise NotFoundError(f"unknown space {name!r}")
        return self._spaces[name].state

    # --- transactions ----------------------------------------------------

    def transaction(self, space_name: str) -> "_TransactionContext":
        if space_name not in self._spaces:
            raise NotFoundError(f"unknown space {space_name!r}")
        return _TransactionContext(self, space_name)

    def _commit(self, txn: Transaction) -> None:
        _check_integrity(txn.state)
        self._seq += 1
        entry = txn._log_entry(self._seq)
        if self.root is not None:
            with (self.root / "txlog.jsonl").open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        self._spaces[txn.space_name].state = txn.state
        txn.closed = True

    # --- persistence ------------------------------------------------------

    def save_snapshot(self) -> None:
        """Write bit-stable snapshot files for both spaces and truncate the log."""
        if self.root is None:
            raise StoreError("store has no persistence root")
        with self._lock:
            for name, space in self._spaces.items():
                space_dir = self.root / name
                space_dir.mkdir(parents=True, exist_ok=True)
                state = space.state
                for collection in COLLECTIONS:
                    entities = state.collection(collection)
                    rows = [entity_to_dict(entities[k]) for k in sorted(entities)]
                    (space_dir / f"{collection}.json").write_text(
                        dumps_interchange(rows), encoding="utf-8"
                    )
                manifest_dir = space_dir / "manifests"
                manifest_dir.mkdir(exist_ok=True)
                for stale in manifest_dir.glob("*.json"):
                    stale.unlink()
                for dataset_id in sorted(state.manifests):
                    (manifest_dir / f"{dataset_id}.json").write_text(
                        dumps_interchange(state.manifests[dataset_id].to_dict()), encoding="utf-8"
                    )
            (self.root / "meta.json").write_text(
                dumps_interchange({"snapshot_seq": self._seq}), encoding="utf-8"
            )
            (self.root / "txlog.jsonl").write_text("", encoding="utf-8")

    def _load(self) -> None:
        meta_path = self.root / "meta.json"
        if meta_path.exists():
            self._seq = json.loads(meta_path.read_text(encoding="utf-8")).get("snapshot_seq", 0)
        for name in SPACES:
            space_dir = self.root / name
            if not space_dir.exists():
                continue
            state = SpaceState()
            for collection in COLLECTIONS:
                path = space_dir / f"{collection}.json"
                if not path.exists():
                    continue
                for row in json.loads(path.read_text(encoding="utf-8")):
                    entity = entity_from_dict(collection, row)
                    key = entity.global_id if collection == "units" else (
                        entity.key if collection == "links" else getattr(entity, "id", None) or entity.code
                    )
                    state.collection(collection)[key] = entity
            manifest_dir = space_dir / "manifests"
            if manifest_dir.exists():
                for path in sorted(manifest_dir.glob("*.json")):
                    manifest = SyncManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))
                    state.manifests[manifest.dataset_id] = manifest
            self._spaces[name].state = state
        log_path = self.root / "txlog.jsonl"
        if log_path.exists():
            with log_path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._replay(json.loads(line))

    def _replay(self, entry: dict) -> None:
        if entry["seq"] <= self._seq:
            return  # older than the snapshot; already folded in
        state = self._spaces[entry["space"]].state.copy()
        for collection, rows in entry.get("puts", {}).items():
            for row in rows:
                entity = entity_from_dict(collection, row)
                key = entity.global_id if collection == "units" else (
                    entity.key if collection == "links" else getattr(entity, "id", None) or entity.code
                )
                state.collection(collection)[key] = entity
        for collection, ids in entry.get("deletes", {}).items():
            for entity_id in ids:
                state.collection(collection).pop(entity_id, None)
        for manifest_row in entry.get("manifests", []):
            manifest = SyncManifest.from_dict(manifest_row)
            state.manifests[manifest.dataset_id] = manifest
        self._spaces[entry["space"]].state = state
        self._seq = max(self._seq, entry["seq"])

    # --- promotion ---------------------------------------------------------

    def promote_dataset(self, dataset_id: str) -> PromotionReport:
        """Replace production's dataset-scoped content with staging's snapshot.

        Requires the dataset to be approved and a staging manifest to exist.
        Production units of this dataset missing from the staging manifest
        are deleted, except units targeted by links, which are retained with
        a warning.  Support entities (countries, repositories, vocabulary
        terms, authorities) referenced by promoted units are copied when
        absent in production; existing ones are never overwritten.
        """
        if self.dataset_status.get(dataset_id) != "approved":
            raise NotApprovedError(f"dataset {dataset_id!r} is not approved")
        staging = self.space("staging")
        manifest = staging.manifests.get(dataset_id)
        if manifest is None:
            raise MissingManifestError(f"no staging manifest for dataset {dataset_id!r}")

        staged_units = {
            gid: unit for gid, unit in staging.units.items() if unit.source_dataset == dataset_id
        }
        created = updated = unchanged = deleted = 0
        blocked: List[str] = []
        warnings: List[str] = []

        with self.transaction("production") as txn:
            production = txn.state

            for gid in sorted(staged_units):
                unit = staged_units[gid]
                existing = production.units.get(gid)
                if existing is None:
                    created += 1
                    txn.put("units", gid, unit)
                elif unit_digest(existing) != unit_digest(unit) or existing.sibling_index != unit.sibling_index:
                    updated += 1
                    txn.put("units", gid, unit)
                else:
                    unchanged += 1
                self._copy_support_entities(txn, staging, unit, warnings)

            manifest_ids = set(manifest.ids())
            production_scoped = [
                u for u in production.units.values() if u.source_dataset == dataset_id
            ]
            for unit in sorted(production_scoped, key=lambda u: u.global_id, reverse=True):
                if unit.global_id in manifest_ids:
                    continue
                if self._is_link_targeted(production, unit.global_id):
                    blocked.append(unit.global_id)
                    warnings.append(
                        f"retained {unit.global_id}: targeted by links in production"
                    )
                    continue
                txn.delete("units", unit.global_id)
                deleted += 1

            txn.set_manifest(manifest)

        self.dataset_status[dataset_id] = "promoted"
        return PromotionReport(
            dataset_id=dataset_id,
            created=created,
            updated=updated,
            unchanged=unchanged,
            deleted=deleted,
            blocked=tuple(blocked),
            warnings=tuple(warnings),
        )

    def _copy_support_entities(
        self, txn: Transaction, staging: SpaceState, unit: DocumentaryUnit, warnings: List[str]
    ) -> None:
        production = txn.state
        repo = staging.repositories.get(unit.repository_id)
        if repo is not None and unit.repository_id not in production.repositories:
            country = staging.countries.get(repo.country_code)
            if country is not None and repo.country_code not in production.countries:
                txn.put("countries", country.code, country)
            txn.put("repositories", repo.id, repo)
        if unit.parent_id is not None and unit.parent_id not in production.units:
            parent = staging.units.get(unit.parent_id)
            if parent is not None:
                if parent.source_dataset != unit.source_dataset:
                    warnings.append(
                        f"copied ancestor {parent.global_id} from dataset {parent.source_dataset!r}"
                    )
                txn.put("units", parent.global_id, parent)
                self._copy_support_entities(txn, staging, parent, warnings)
        for desc in unit.descriptions:
            for ap in desc.access_points:
                if ap.target is None:
                    continue
                if staging.has_concept(ap.target) and ap.target not in production.concepts:
                    concept = staging.concepts[ap.target]
                    vocab = staging.vocabularies.get(concept.vocabulary_id)
                    if vocab is not None and vocab.id not in production.vocabularies:
                        txn.put("vocabularies", vocab.id, vocab)
                    self._copy_concept(txn, staging, concept)
                elif staging.has_agent(ap.target) and ap.target not in production.agents:
                    txn.put("agents", ap.target, staging.agents[ap.target])

    def _copy_concept(self, txn: Transaction, staging: SpaceState, concept: Concept) -> None:
        if concept.id in txn.state.concepts:
            return
        txn.put("concepts", concept.id, concept)
        for broader_id in concept.broader:
            broader = staging.concepts.get(broader_id)
            if broader is not None:
                self._copy_concept(txn, staging, broader)

    @staticmethod
    def _is_link_targeted(state: SpaceState, global_id: str) -> bool:
        return any(
            link.source_id == global_id or link.target_id == global_id
            for link in state.links.values()
        )


class _TransactionContext:
    def __init__(self, store: Store, space_name: str):
        self._store = store
        self._space_name = space_name
        self._txn: Optional[Transaction] = None

    def __enter__(self) -> Transaction:
        self._store._lock.acquire()
        self._txn = Transaction(self._store, self._space_name)
        return self._txn

    def __exit__(self, exc_type, exc, tb) -> bool:
        try:
            if exc_type is None:
                self._store._commit(self._txn)
            else:
                self._txn.closed = True  # rollback: working state is discarded
        finally:
            self._store._lock.release()
        return False


# --- subtree operations -----------------------------------------------------


def plan_units(
    records: Sequence[Record],
    repository_id: str,
    parent_id: Optional[str],
    dataset_id: str,
) -> List[DocumentaryUnit]:
    """The units a record forest maps to, with computed global ids; pure."""
    planned: List[DocumentaryUnit] = []

    def plan(record: Record, parent_gid: Optional[str], index: int) -> None:
        base = parent_gid if parent_gid is not None else repository_id
        gid = child_global_id(base, record.local_id)
        unit = DocumentaryUnit(
            global_id=gid,
            local_id=record.local_id,
            repository_id=repository_id,
            parent_id=parent_gid,
            level=record.level or LevelOfDescription.OTHERLEVEL,
            sibling_index=index,
            descriptions=descriptions_from_record(record),
            source_dataset=dataset_id,
        )
        planned.append(unit)
        for i, child in enumerate(record.children):
            plan(child, gid, i)

    for i, record in enumerate(records):
        plan(record, parent_id, i)
    return planned


def upsert_subtree(
    txn: Transaction,
    repository_id: str,
    parent_id: Optional[str],
    records: Sequence[Record],
    dataset_id: str,
) -> ChangeSummary:
    """Map a Record forest to documentary units under one parent scope.

    Each record lands at its computed global id.  Units whose content digest
    is unchanged are not rewritten (and counted ``unchanged``); sibling order
    follows record order, and an order-only change counts as ``updated``.
    """
    state = txn.state
    if repository_id not in state.repositories:
        raise NotFoundError(f"unknown repository {repository_id!r}")
    if parent_id is not None and parent_id not in state.units:
        raise NotFoundError(f"dangling parent {parent_id!r}")

    duplicate_report = validate_record_tree(records)
    if not duplicate_report.ok:
        raise DuplicateSiblingError(str(ValidationFailure(duplicate_report)))

    violations: List = []
    planned = plan_units(records, repository_id, parent_id, dataset_id)

    summary_actions: List[Tuple[str, str]] = []
    created = updated = unchanged = 0
    for unit in planned:
        existing = state.units.get(unit.global_id)
        if existing is None:
            action = "created"
        elif unit_digest(existing) != unit_digest(unit):
            action = "updated"
        elif existing.sibling_index != unit.sibling_index:
            action = "updated"  # order is content for archives, but not for diffs
        else:
            action = "unchanged"
        if action != "unchanged":
            txn.put("units", unit.global_id, unit)
        summary_actions.append((unit.global_id, action))
        created += action == "created"
        updated += action == "updated"
        unchanged += action == "unchanged"

    for unit in planned:
        report = validate_unit(unit, state)
        violations.extend(report.violations)
    if violations:
        raise ValidationFailure(ValidationReport(tuple(violations)))

    return ChangeSummary(
        created=created, updated=updated, unchanged=unchanged, actions=tuple(summary_actions)
    )


def get_subtree(state: SpaceState, global_id: str, depth: Optional[int] = None) -> UnitNode:
    """Fetch a unit with its descendants to ``depth`` (full when absent)."""
    unit = state.units.get(global_id)
    if unit is None:
        raise NotFoundError(f"unit {global_id!r} not found")

    def expand(u: DocumentaryUnit, remaining: Optional[int]) -> UnitNode:
        if remaining is not None and remaining <= 0:
            return UnitNode(unit=u, children=())
        children = state.units_under(u.global_id, u.repository_id)
        return UnitNode(
            unit=u,
            children=tuple(
                expand(c, None if remaining is None else remaining - 1) for c in children
            ),
        )

    return expand(unit, depth)


def space_digest(state: SpaceState, scope: Optional[str] = None) -> str:
    """Deterministic digest of all in-scope content; equal iff content equal.

    ``scope`` may be a repository id (that repository and its units) or a
    dataset id (the dataset's units and manifest); no scope hashes the whole
    space including manifests.  Insertion order never affects the digest.
    """
    triples: List[Tuple[str, str, str]] = []
    if scope is None:
        for collection in COLLECTIONS:
            for key, entity in state.collection(collection).items():
                triples.append((collection, key, entity_digest(entity)))
        for dataset_id, manifest in state.manifests.items():
            triples.append(("manifests", dataset_id, manifest.content_digest()))
    elif scope in state.repositories:
        triples.append(("repositories", scope, entity_digest(state.repositories[scope])))
        for gid, unit in state.units.items():
            if unit.repository_id == scope:
                triples.append(("units", gid, unit_digest(unit)))
    else:
        for gid, unit in state.units.items():
            if unit.source_dataset == scope:
                triples.append(("units", gid, unit_digest(unit)))
        manifest = state.manifests.get(scope)
        if manifest is not None:
            triples.append(("manifests", scope, manifest.content_digest()))
    return digest_of(sorted(triples))
