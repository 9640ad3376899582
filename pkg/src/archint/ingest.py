"""Load leg: transactional, diff-aware dataset ingest with stale cleanup.

Ingest maps a record forest into the store under a dataset's parent scope in
one transaction, writes the dataset's sync manifest, and reports per-unit
actions.  An earlier manifest makes re-ingest idempotent (unchanged content
is never rewritten) and drives stale cleanup.  Deletions are opt-in and
conservative: units still referenced from elsewhere are retained loudly.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .interchange import unit_digest
from .model import Record, ValidationReport, validate_record_tree, validate_unit
from .store import (
    ChangeSummary,
    MissingManifestError,
    Store,
    SyncManifest,
    ValidationFailure,
    plan_units,
    upsert_subtree,
)

__all__ = [
    "BatchJob",
    "BatchOutcome",
    "IngestOptions",
    "IngestReport",
    "batch_run",
    "cleanup_stale",
    "ingest_dataset",
]

TOLERANCE_STRICT = "strict"
TOLERANCE_LENIENT = "lenient"


@dataclass(frozen=True)
class IngestOptions:
    dry_run: bool = False
    allow_deletions: bool = False
    continue_on_error: bool = False  # batch policy; default stops at first failure
    tolerance: str = TOLERANCE_STRICT

    def __post_init__(self) -> None:
        if self.tolerance not in (TOLERANCE_STRICT, TOLERANCE_LENIENT):
            raise ValueError(f"unknown tolerance {self.tolerance!r}")

    def to_dict(self) -> dict:
        return {
            "dry_run": self.dry_run,
            "allow_deletions": self.allow_deletions,
            "continue_on_error": self.continue_on_error,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IngestOptions":
        return cls(
            dry_run=bool(data.get("dry_run", False)),
            allow_deletions=bool(data.get("allow_deletions", False)),
            continue_on_error=bool(data.get("continue_on_error", False)),
            tolerance=data.get("tolerance", TOLERANCE_STRICT),
        )


@dataclass(frozen=True)
class IngestReport:
    dataset_id: str
    created: int = 0
    updated: int = 0
    unchanged: int = 0
    deleted: int = 0
    actions: Tuple[Tuple[str, str], ...] = ()
    warnings: Tuple[str, ...] = ()
    manifest_digest_before: Optional[str] = None
    manifest_digest_after: Optional[str] = None
    committed: bool = True

    def __post_init__(self) -> None:
        tally: Dict[str, int] = {"created": 0, "updated": 0, "unchanged": 0, "deleted": 0}
        for _gid, action in self.actions:
            if action in tally:
                tally[action] += 1
        stated = {
            "created": self.created,
            "updated": self.updated,
            "unchanged": self.unchanged,
            "deleted": self.deleted,
        }
        if stated != tally:
            raise ValueError(f"report counts {stated} do not match action tallies {tally}")

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "created": self.created,
            "updated": self.updated,
            "unchanged": self.unchanged,
            "deleted": self.deleted,
            "actions": [[g, a] for g, a in self.actions],
            "warnings": list(self.warnings),
            "manifest_digest_before": self.manifest_digest_before,
            "manifest_digest_after": self.manifest_digest_after,
            "committed": self.committed,
        }


class _DryRunRollback(Exception):
    def __init__(self, summary: ChangeSummary, manifest: SyncManifest):
        self.summary = summary
        self.manifest = manifest


class _CombinedView:
    """State view extended with planned units, for pre-transaction validation."""

    def __init__(self, state, planned_by_id: Dict[str, object]):
        self._state = state
        self._planned = planned_by_id

    def has_unit(self, global_id: str) -> bool:
        return global_id in self._planned or self._state.has_unit(global_id)

    def units_under(self, parent_id, repository_id):
        return self._state.units_under(parent_id, repository_id)

    def has_concept(self, concept_id: str) -> bool:
        return self._state.has_concept(concept_id)

    def has_agent(self, agent_id: str) -> bool:
        return self._state.has_agent(agent_id)


def _drop_duplicate_siblings(records: Sequence[Record], warnings: List[str]) -> List[Record]:
    def dedupe(group: Sequence[Record]) -> List[Record]:
        seen: Set[str] = set()
        out: List[Record] = []
        for rec in group:
            if rec.local_id in seen:
                warnings.append(f"dropped duplicate sibling {rec.local_id!r}")
                continue
            seen.add(rec.local_id)
            out.append(rec.with_children(dedupe(rec.children)))
        return out

    return dedupe(records)


def _drop_invalid(
    records: Sequence[Record],
    store_state,
    repository_id: str,
    parent_scope: Optional[str],
    dataset_id: str,
    warnings: List[str],
) -> List[Record]:
    planned = plan_units(records, repository_id, parent_scope, dataset_id)
    view = _CombinedView(store_state, {u.global_id: u for u in planned})
    bad: Set[str] = set()
    for unit in planned:
        report = validate_unit(unit, view)
        if not report.ok:
            bad.add(unit.global_id)
            for violation in report.violations:
                warnings.append(f"dropped {unit.global_id}: {violation.code}: {violation.message}")

    if not bad:
        return list(records)

    from .model import child_global_id

    def prune(group: Sequence[Record], base: str) -> List[Record]:
        out: List[Record] = []
        for rec in group:
            gid = child_global_id(base, rec.local_id)
            if gid in bad:
                continue  # the whole subtree goes with its invalid root
            out.append(rec.with_children(prune(rec.children, gid)))
        return out

    return prune(records, parent_scope if parent_scope is not None else repository_id)


def ingest_dataset(
    store: Store,
    records: Sequence[Record],
    dataset_id: str,
    repository_id: str,
    parent_scope: Optional[str] = None,
    options: IngestOptions = IngestOptions(),
    space: str = "staging",
) -> IngestReport:
    """Validate and load a record forest for one dataset in a single transaction.

    Strict tolerance aborts (and rolls back) on any invariant violation,
    leaving the space digest unchanged; lenient drops invalid records with
    warnings and loads the rest.  A dry run produces the full report without
    committing anything.
    """
    warnings: List[str] = []
    state = store.space(space)
    previous_manifest = state.manifests.get(dataset_id)

    work = list(records)
    duplicate_report = validate_record_tree(work)
    if not duplicate_report.ok:
        if options.tolerance == TOLERANCE_STRICT:
            raise ValidationFailure(duplicate_report)
        work = _drop_duplicate_siblings(work, warnings)

    if options.tolerance == TOLERANCE_STRICT:
        planned = plan_units(work, repository_id, parent_scope, dataset_id)
        view = _CombinedView(state, {u.global_id: u for u in planned})
        violations = []
        for unit in planned:
            violations.extend(validate_unit(unit, view).violations)
        if violations:
            raise ValidationFailure(ValidationReport(tuple(violations)))
    else:
        work = _drop_invalid(work, state, repository_id, parent_scope, dataset_id, warnings)

    def build_manifest() -> SyncManifest:
        planned_now = plan_units(work, repository_id, parent_scope, dataset_id)
        entries = tuple((u.global_id, unit_digest(u)) for u in planned_now)
        return SyncManifest(dataset_id, entries, timestamp=datetime.now(timezone.utc))

    summary: Optional[ChangeSummary] = None
    manifest: Optional[SyncManifest] = None
    if options.dry_run:
        try:
            with store.transaction(space) as txn:
                dry_summary = upsert_subtree(txn, repository_id, parent_scope, work, dataset_id)
                raise _DryRunRollback(dry_summary, build_manifest())
        except _DryRunRollback as marker:
            summary = marker.summary
            manifest = marker.manifest
    else:
        with store.transaction(space) as txn:
            summary = upsert_subtree(txn, repository_id, parent_scope, work, dataset_id)
            manifest = build_manifest()
            txn.set_manifest(manifest)

    return IngestReport(
        dataset_id=dataset_id,
        created=summary.created,
        updated=summary.updated,
        unchanged=summary.unchanged,
        deleted=0,
        actions=summary.actions,
        warnings=tuple(warnings),
        manifest_digest_before=previous_manifest.content_digest() if previous_manifest else None,
        manifest_digest_after=manifest.content_digest(),
        committed=not options.dry_run,
    )


def cleanup_stale(
    store: Store,
    dataset_id: str,
    current_manifest: SyncManifest,
    options: IngestOptions = IngestOptions(),
    previous: Optional[SyncManifest] = None,
    space: str = "staging",
) -> IngestReport:
    """Handle units a previous ingest created that the current one no longer has.

    The stale set is previous manifest ids minus current ids.  Without
    ``allow_deletions`` the report only lists them.  With deletions enabled,
    stale units are removed in one transaction, refusing (with a warning) any
    unit that still has children outside the deletion set or is an endpoint
    of a link.
    """
    state = store.space(space)
    if previous is None:
        previous = state.manifests.get(dataset_id)
    if previous is None:
        raise MissingManifestError(f"no previous manifest for dataset {dataset_id!r}")

    current_ids = set(current_manifest.ids())
    stale = [gid for gid in previous.ids() if gid not in current_ids]
    warnings: List[str] = []

    if not options.allow_deletions or options.dry_run:
        actions = tuple((gid, "stale") for gid in stale)
        if stale:
            warnings.append(f"{len(stale)} stale unit(s) found; deletions disabled")
        return IngestReport(
            dataset_id=dataset_id,
            actions=actions,
            warnings=tuple(warnings),
            manifest_digest_before=previous.content_digest(),
            manifest_digest_after=current_manifest.content_digest(),
            committed=False,
        )

    deletable: Set[str] = set()
    refused: List[str] = []
    stale_set = set(stale)
    for gid in stale:
        unit = state.units.get(gid)
        if unit is None:
            continue  # already gone
        children = state.units_under(gid, unit.repository_id)
        blockers = [c for c in children if c.global_id not in stale_set]
        cross_dataset = [c for c in blockers if c.source_dataset != dataset_id]
        if blockers:
            refused.append(gid)
            kind = "children from other datasets" if cross_dataset else "children still current"
            warnings.append(f"retained {gid}: has {kind}")
        elif _is_linked(state, gid):
            refused.append(gid)
            warnings.append(f"retained {gid}: endpoint of links")
        else:
            deletable.add(gid)

    # a deletable unit whose ancestor was refused must also keep its chain valid;
    # deleting leaves are always safe, so process deepest-first
    actions: List[Tuple[str, str]] = []
    if deletable:
        with store.transaction(space) as txn:
            for gid in sorted(deletable, reverse=True):
                txn.delete("units", gid)
                actions.append((gid, "deleted"))
            stored = txn.state.manifests.get(dataset_id)
            if stored is not None and any(gid in deletable for gid in stored.ids()):
                txn.set_manifest(
                    SyncManifest(
                        dataset_id,
                        tuple(e for e in stored.entries if e[0] not in deletable),
                        timestamp=stored.timestamp,
                    )
                )
    actions.extend((gid, "stale") for gid in refused)

    return IngestReport(
        dataset_id=dataset_id,
        deleted=len(deletable),
        actions=tuple(actions),
        warnings=tuple(warnings),
        manifest_digest_before=previous.content_digest(),
        manifest_digest_after=current_manifest.content_digest(),
    )


def _is_linked(state, global_id: str) -> bool:
    return any(
        link.source_id == global_id or link.target_id == global_id
        for link in state.links.values()
    )


@dataclass(frozen=True)
class BatchJob:
    """One dataset's work in a batch: how to obtain records, where they land."""

    dataset_id: str
    repository_id: str
    records_source: Callable[[], Sequence[Record]]
    parent_scope: Optional[str] = None


@dataclass(frozen=True)
class BatchOutcome:
    dataset_id: str
    status: str  # ok | failed | not-run
    report: Optional[IngestReport] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "status": self.status,
            "report": self.report.to_dict() if self.report else None,
            "error": self.error,
        }


def batch_run(
    store: Store,
    jobs: Sequence[BatchJob],
    options: IngestOptions = IngestOptions(),
    space: str = "staging",
) -> List[BatchOutcome]:
    """Execute fetch/transform/ingest per dataset, each in its own transaction.

    The stop policy (default) halts after the first failure, leaving earlier
    commits intact and later datasets untouched; the continue policy carries
    on and aggregates failures.
    """
    outcomes: List[BatchOutcome] = []
    stopped = False
    for job in jobs:
        if stopped:
            outcomes.append(BatchOutcome(job.dataset_id, "not-run"))
            continue
        try:
            records = job.records_source()
            report = ingest_dataset(
                store,
                records,
                dataset_id=job.dataset_id,
                repository_id=job.repository_id,
                parent_scope=job.parent_scope,
                options=options,
                space=space,
            )
            outcomes.append(BatchOutcome(job.dataset_id, "ok", report=report))
        except Exception as exc:  # per-dataset isolation: one bad dataset never poisons others
            outcomes.append(BatchOutcome(job.dataset_id, "failed", error=str(exc)))
            if not options.continue_on_error:
                stopped = True
    return outcomes
