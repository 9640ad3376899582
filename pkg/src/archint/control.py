"""Dataset lifecycle service: configure, fetch, preview, run, review, promote.

A dataset bundles one provider's fetch configuration and transform pipeline
with a status machine (draft, fetched, transformed, staged, approved,
promoted, error) and an audit log.  Work runs as pollable jobs, one at a
time per dataset; store writes stay serialized behind the store's own lock.
Everything is persisted under a workspace directory so the CLI and the HTTP
service operate on the same state.
"""

from __future__ import annotations

import base64
import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import yaml

from . import harvest
from .harvest import FetchConfig, FileItem, FileSet
from .hierarchy import build_tree
from .ingest import IngestOptions, cleanup_stale, ingest_dataset
from .interchange import dumps_interchange, record_from_dict, record_to_dict, unit_to_dict
from .model import (
    Concept,
    Country,
    HistoricalAgent,
    Record,
    Repository,
    Vocabulary,
    encode_local_id,
)
from .store import (
    NotFoundError,
    PromotionReport,
    Store,
    StoreError,
    get_subtree,
    space_digest,
)
from .transform import (
    CsvSpec,
    JsonSpec,
    MappingTable,
    PreviewResult,
    RewriteRule,
    Stage,
    StageCache,
    StageKind,
    TransformError,
    TransformPipeline,
    compile_mapping,
    preview as run_preview,
    run_pipeline,
)
from .vocab import Concordance, load_concordance

__all__ = [
    "AuditEntry",
    "ControlError",
    "Dataset",
    "DATASET_STATUSES",
    "DefinitionError",
    "ControlService",
    "Job",
    "WrongStatusError",
    "load_config",
]

DATASET_STATUSES = ("draft", "fetched", "transformed", "staged", "approved", "promoted", "error")

# fetch/upload may start a new revision cycle from any status; the later
# stages require their predecessors' artifacts and an unfrozen status
_STAGE_GATES = {
    "fetch": DATASET_STATUSES,
    "transform": ("fetched", "transformed", "staged", "error"),
    "ingest-staging": ("transformed", "staged", "error"),
}

_STAGE_SUCCESS = {"fetch": "fetched", "transform": "transformed", "ingest-staging": "staged"}


class ControlError(StoreError):
    pass


class DefinitionError(ControlError):
    """Invalid dataset definition; carries field-level messages."""

    def __init__(self, problems: Sequence[str]):
        super().__init__("invalid definition: " + "; ".join(problems))
        self.problems = tuple(problems)


class WrongStatusError(ControlError):
    pass


class JobConflictError(ControlError):
    pass


@dataclass(frozen=True)
class AuditEntry:
    instant: str  # UTC ISO instant
    actor: str
    action: str

    def to_dict(self) -> dict:
        return {"instant": self.instant, "actor": self.actor, "action": self.action}


@dataclass
class Dataset:
    id: str
    repository_id: str
    fetch: FetchConfig
    pipeline: TransformPipeline
    parent_scope: Optional[str] = None
    status: str = "draft"
    audit: List[AuditEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "repository_id": self.repository_id,
            "parent_scope": self.parent_scope,
            "status": self.status,
            "fetch": self.fetch.to_dict(),
            "pipeline": self.pipeline.to_dict(),
            "audit": [a.to_dict() for a in self.audit],
        }


@dataclass
class Job:
    id: str
    dataset_id: str
    stage: str
    status: str = "queued"  # queued | running | done | failed
    report: Optional[dict] = None
    error: Optional[str] = None
    created_at: str = ""
    finished_at: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dataset_id": self.dataset_id,
            "stage": self.stage,
            "status": self.status,
            "report": self.report,
            "error": self.error,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


# --- dataset definitions -----------------------------------------------------


def parse_pipeline(
    stages_cfg: Sequence[dict], base_dir: Optional[Path], space_view
) -> TransformPipeline:
    """Build a pipeline from its declarative config, resolving file references."""

    def read_ref(value: str) -> str:
        if base_dir is None:
            raise DefinitionError([f"file reference {value!r} needs a base directory"])
        return (base_dir / value).read_text(encoding="utf-8")

    stages: List[Stage] = []
    for i, cfg in enumerate(stages_cfg):
        kind = cfg.get("kind")
        try:
            kind = StageKind(kind)
        except ValueError:
            raise DefinitionError([f"stages[{i}].kind: unknown stage kind {kind!r}"]) from None
        try:
            if kind is StageKind.XML_MAPPING:
                if "mapping" in cfg and isinstance(cfg["mapping"], dict):
                    rows = cfg["mapping"].get("rules", [])
                    text = "record_path,target_field,source,template,condition\n" + "\n".join(
                        ",".join(_csv_escape(c) for c in row) for row in rows
                    )
                    table = compile_mapping(text)
                elif "mapping_file" in cfg:
                    table = compile_mapping(
                        read_ref(cfg["mapping_file"]), cfg.get("delimiter", ",")
                    )
                elif "mapping_text" in cfg:
                    table = compile_mapping(cfg["mapping_text"], cfg.get("delimiter", ","))
                else:
                    raise DefinitionError([f"stages[{i}]: xml-mapping needs mapping rows or a file"])
                stages.append(Stage(kind=kind, mapping=table))
            elif kind is StageKind.STRUCTURAL_REWRITE:
                rules = tuple(RewriteRule.from_dict(r) for r in cfg.get("rules", []))
                stages.append(Stage(kind=kind, rewrite_rules=rules))
            elif kind is StageKind.CSV_RESHAPE:
                stages.append(Stage(kind=kind, csv_spec=CsvSpec.from_dict(cfg["csv"])))
            elif kind is StageKind.JSON_MAPPING:
                stages.append(Stage(kind=kind, json_spec=JsonSpec.from_dict(cfg["json"])))
            elif kind is StageKind.CONCORDANCE:
                if "concordance" in cfg and isinstance(cfg["concordance"], dict):
                    conc = Concordance.from_dict(cfg["concordance"])
                elif "concordance_file" in cfg:
                    conc = load_concordance(
                        read_ref(cfg["concordance_file"]),
                        space_view,
                        scope_id=cfg.get("scope", "dataset"),
                        delimiter=cfg.get("delimiter", ","),
                        match_mode=cfg.get("match_mode", "fold"),
                    )
                else:
                    raise DefinitionError([f"stages[{i}]: concordance needs entries or a file"])
                stages.append(Stage(kind=kind, concordance=conc))
        except DefinitionError:
            raise
        except (TransformError, ValueError, KeyError) as exc:
            raise DefinitionError([f"stages[{i}]: {exc}"]) from exc
    try:
        return TransformPipeline(tuple(stages))
    except ValueError as exc:
        raise DefinitionError([f"pipeline: {exc}"]) from exc


def _csv_escape(cell: str) -> str:
    if any(ch in cell for ch in ',"\n'):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def link_flat_records(records: Sequence[Record]):
    """Reconstruct hierarchy for pipelines that emit flat parent-ref records.

    JSON (and flat XML) exports carry the hierarchy only as parent references;
    when a transform ends with childless records that reference each other,
    they are linked into trees here. Orphans (dangling parent_ref) are kept
    as top-level records and reported rather than dropped.
    """
    recs = list(records)
    if not recs or any(r.children for r in recs) or all(r.parent_ref is None for r in recs):
        return tuple(recs), None
    ids = {r.local_id for r in recs}
    if not any(r.parent_ref in ids for r in recs if r.parent_ref is not None):
        return tuple(recs), None  # references point outside this batch
    trees, orphan_report = build_tree(recs)
    out = list(trees)
    report = {"roots": len(trees), "orphans": []}
    for orphan in orphan_report.orphans:
        report["orphans"].append({"local_id": orphan.local_id, "parent_ref": orphan.parent_ref})
        out.append(orphan)
    return tuple(out), report


# --- the service --------------------------------------------------------------


class ControlService:
    def __init__(self, workspace: Path):
        self.workspace = Path(workspace)
        self.workspace.mkdir(parents=True, exist_ok=True)
        self.store = Store(self.workspace / "store")
        self.datasets_dir = self.workspace / "datasets"
        self.datasets_dir.mkdir(exist_ok=True)
        self._datasets: Dict[str, Dataset] = {}
        self._jobs: Dict[str, Job] = {}
        self._busy: set = set()
        self._lock = threading.RLock()
        self._caches: Dict[str, StageCache] = {}
        self._load_datasets()

    # -- persistence helpers --

    def _dataset_dir(self, dataset_id: str) -> Path:
        return self.datasets_dir / dataset_id

    def _load_datasets(self) -> None:
        for path in sorted(self.datasets_dir.glob("*/dataset.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            dataset = self._dataset_from_dict(data)
            self._datasets[dataset.id] = dataset
            self.store.dataset_status[dataset.id] = dataset.status

    def _dataset_from_dict(self, data: dict) -> Dataset:
        return Dataset(
            id=data["id"],
            repository_id=data["repository_id"],
            parent_scope=data.get("parent_scope"),
            status=data.get("status", "draft"),
            fetch=FetchConfig.from_dict(data["fetch"]),
            pipeline=parse_pipeline(data["pipeline"]["stages"], None, self.store.space("staging")),
            audit=[AuditEntry(**a) for a in data.get("audit", [])],
        )

    def _save_dataset(self, dataset: Dataset) -> None:
        d = self._dataset_dir(dataset.id)
        d.mkdir(parents=True, exist_ok=True)
        (d / "dataset.json").write_text(dumps_interchange(dataset.to_dict()), encoding="utf-8")

    def _audit(self, dataset: Dataset, actor: str, action: str, new_status: Optional[str] = None) -> None:
        dataset.audit.append(AuditEntry(instant=_now(), actor=actor, action=action))
        if new_status is not None:
            dataset.status = new_status
            self.store.dataset_status[dataset.id] = new_status
        self._save_dataset(dataset)

    # -- entities seeding --

    def seed_entities(self, payload: dict, space: str = "staging") -> dict:
        """Load supporting entities (countries, repositories, vocabularies,
        concepts, authorities) into a space from a definition mapping."""
        counts: Dict[str, int] = {}
        with self.store.transaction(space) as txn:
            for row in payload.get("countries", []):
                country = Country(row["code"], row["name"], row.get("report_summary"))
                txn.put("countries", country.code, country)
            for row in payload.get("repositories", []):
                repo = Repository(
                    row["id"], row["country_code"], row["name"],
                    tuple((k, v) for k, v in row.get("contact", {}).items()), row.get("history"),
                )
                txn.put("repositories", repo.id, repo)
            for row in payload.get("vocabularies", []):
                vocab = Vocabulary(row["id"], row["name"])
                txn.put("vocabularies", vocab.id, vocab)
            for row in payload.get("concepts", []):
                concept = Concept(
                    row["id"], row["vocabulary_id"],
                    tuple(row.get("pref_labels", {}).items()), tuple(row.get("broader", [])),
                )
                txn.put("concepts", concept.id, concept)
            for row in payload.get("agents", []):
                agent = HistoricalAgent(row["id"], row["agent_type"], row["name"], row.get("set_id", "default"))
                txn.put("agents", agent.id, agent)
        for key in ("countries", "repositories", "vocabularies", "concepts", "agents"):
            counts[key] = len(payload.get(key, []))
        return counts

    # -- dataset lifecycle --

    def create_dataset(self, definition: dict, actor: str = "system", base_dir: Optional[Path] = None) -> Dataset:
        problems: List[str] = []
        dataset_id = definition.get("id")
        if not dataset_id or not isinstance(dataset_id, str):
            problems.append("id: required string")
        elif dataset_id in self._datasets:
            problems.append(f"id: dataset {dataset_id!r} already exists")
        repository_id = definition.get("repository")
        if not repository_id:
            problems.append("repository: required")
        elif repository_id not in self.store.space("staging").repositories:
            problems.append(f"repository: {repository_id!r} does not exist in staging")
        if "fetch" not in definition:
            problems.append("fetch: required")
        if "pipeline" not in definition:
            problems.append("pipeline: required")
        if problems:
            raise DefinitionError(problems)

        try:
            fetch = FetchConfig.from_dict(definition["fetch"])
        except (ValueError, KeyError) as exc:
            raise DefinitionError([f"fetch: {exc}"]) from exc
        stages_cfg = definition["pipeline"]
        if isinstance(stages_cfg, dict):
            stages_cfg = stages_cfg.get("stages", [])
        pipeline = parse_pipeline(stages_cfg, base_dir, self.store.space("staging"))

        parent_scope = definition.get("parent_scope")
        if parent_scope and not self.store.space("staging").has_unit(parent_scope):
            raise DefinitionError([f"parent_scope: unit {parent_scope!r} does not exist in staging"])

        with self._lock:
            dataset = Dataset(
                id=dataset_id,
                repository_id=repository_id,
                fetch=fetch,
                pipeline=pipeline,
                parent_scope=parent_scope,
            )
            self._datasets[dataset_id] = dataset
            self.store.dataset_status[dataset_id] = "draft"
            self._audit(dataset, actor, "create")
        return dataset

    def update_dataset(self, dataset_id: str, definition: dict, actor: str = "system",
                       base_dir: Optional[Path] = None) -> Dataset:
        """Edit a dataset's configuration; any edit resets the status to draft."""
        dataset = self.get_dataset(dataset_id)
        with self._lock:
            if "fetch" in definition:
                try:
                    dataset.fetch = FetchConfig.from_dict(definition["fetch"])
                except (ValueError, KeyError) as exc:
                    raise DefinitionError([f"fetch: {exc}"]) from exc
            if "pipeline" in definition:
                stages_cfg = definition["pipeline"]
                if isinstance(stages_cfg, dict):
                    stages_cfg = stages_cfg.get("stages", [])
                dataset.pipeline = parse_pipeline(stages_cfg, base_dir, self.store.space("staging"))
            if "parent_scope" in definition:
                dataset.parent_scope = definition["parent_scope"]
            self._caches.pop(dataset_id, None)
            self._audit(dataset, actor, "edit", new_status="draft")
        return dataset

    def get_dataset(self, dataset_id: str) -> Dataset:
        dataset = self._datasets.get(dataset_id)
        if dataset is None:
            raise NotFoundError(f"dataset {dataset_id!r} not found")
        return dataset

    def list_datasets(self) -> List[Dataset]:
        return [self._datasets[k] for k in sorted(self._datasets)]

    def dataset_payload(self, dataset: Dataset) -> dict:
        """API shape of a dataset, including editor conveniences."""
        out = dataset.to_dict()
        mapping_text = None
        for stage in dataset.pipeline.stages:
            if stage.kind is StageKind.XML_MAPPING:
                mapping_text = stage.mapping.to_table_text()
                break
        out["mapping_text"] = mapping_text
        out["has_files"] = self._files_path(dataset.id).exists()
        out["has_records"] = self._records_path(dataset.id).exists()
        return out

    # -- artifacts --

    def _files_path(self, dataset_id: str) -> Path:
        return self._dataset_dir(dataset_id) / "files.json"

    def _records_path(self, dataset_id: str) -> Path:
        return self._dataset_dir(dataset_id) / "records.json"

    def save_fileset(self, dataset_id: str, files: FileSet) -> None:
        payload = {
            "fetched_at": files.fetched_at.isoformat(),
            "errors": [{"source": e.source, "message": e.message} for e in files.errors],
            "items": [
                {
                    "name": item.name,
                    "source_uri": item.source_uri,
                    "checksum": item.checksum,
                    "media_type": item.media_type,
                    "deleted": item.deleted,
                    "note": item.note,
                    "content_base64": base64.b64encode(item.data).decode("ascii"),
                }
                for item in files.items
            ],
        }
        self._dataset_dir(dataset_id).mkdir(parents=True, exist_ok=True)
        self._files_path(dataset_id).write_text(dumps_interchange(payload), encoding="utf-8")

    def load_fileset(self, dataset_id: str) -> FileSet:
        path = self._files_path(dataset_id)
        if not path.exists():
            raise ControlError(f"dataset {dataset_id!r} has no fetched files")
        payload = json.loads(path.read_text(encoding="utf-8"))
        items = tuple(
            FileItem(
                name=row["name"],
                data=base64.b64decode(row["content_base64"]),
                source_uri=row["source_uri"],
                checksum=row["checksum"],
                media_type=row["media_type"],
                deleted=row.get("deleted", False),
                note=row.get("note"),
            )
            for row in payload["items"]
        )
        return FileSet(
            items=items,
            fetched_at=datetime.fromisoformat(payload["fetched_at"]),
            errors=tuple(
                harvest.FetchError(e["source"], e["message"]) for e in payload.get("errors", [])
            ),
        )

    def save_records(self, dataset_id: str, records: Sequence[Record]) -> None:
        rows = [record_to_dict(r) for r in records]
        self._records_path(dataset_id).write_text(dumps_interchange(rows), encoding="utf-8")

    def load_records(self, dataset_id: str) -> Tuple[Record, ...]:
        path = self._records_path(dataset_id)
        if not path.exists():
            raise ControlError(f"dataset {dataset_id!r} has no transformed records")
        return tuple(record_from_dict(d) for d in json.loads(path.read_text(encoding="utf-8")))

    def upload_files(self, dataset_id: str, files: Sequence[Tuple[str, bytes]], actor: str = "system") -> FileSet:
        dataset = self.get_dataset(dataset_id)
        fileset = harvest.upload_fileset(files)
        self.save_fileset(dataset_id, fileset)
        self._audit(dataset, actor, "upload", new_status="fetched")
        return fileset

    # -- jobs --

    def run_stage(
        self,
        dataset_id: str,
        stage: str,
        options: Optional[IngestOptions] = None,
        actor: str = "system",
        wait: bool = False,
    ) -> Job:
        """Run fetch/transform/ingest-staging asynchronously; returns the job."""
        if stage not in _STAGE_GATES:
            raise ControlError(f"unknown stage {stage!r}")
        dataset = self.get_dataset(dataset_id)
        if dataset.status not in _STAGE_GATES[stage]:
            raise WrongStatusError(
                f"stage {stage!r} not allowed while dataset is {dataset.status!r}"
            )
        with self._lock:
            if dataset_id in self._busy:
                raise JobConflictError(f"dataset {dataset_id!r} already has an active job")
            self._busy.add(dataset_id)
            job = Job(
                id=uuid.uuid4().hex[:12],
                dataset_id=dataset_id,
                stage=stage,
                created_at=_now(),
            )
            self._jobs[job.id] = job

        def execute() -> None:
            job.status = "running"
            try:
                report = self._execute_stage(dataset, stage, options or IngestOptions(), actor)
                job.report = report
                job.status = "done"
            except Exception as exc:
                job.error = str(exc)
                job.status = "failed"
                self._audit(dataset, actor, f"{stage}:failed", new_status="error")
            finally:
                job.finished_at = _now()
                with self._lock:
                    self._busy.discard(dataset_id)

        if wait:
            execute()
        else:
            threading.Thread(target=execute, daemon=True).start()
        return job

    def get_job(self, job_id: str) -> Job:
        job = self._jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"job {job_id!r} not found")
        return job

    def _execute_stage(self, dataset: Dataset, stage: str, options: IngestOptions, actor: str) -> dict:
        if stage == "fetch":
            fileset = self._fetch(dataset)
            self.save_fileset(dataset.id, fileset)
            self._audit(dataset, actor, "fetch", new_status="fetched")
            return {
                "files": len(fileset.items),
                "errors": [{"source": e.source, "message": e.message} for e in fileset.errors],
            }
        if stage == "transform":
            files = self.load_fileset(dataset.id)
            cache = self._caches.setdefault(dataset.id, StageCache())
            result = run_pipeline(dataset.pipeline, files, cache=cache)
            records, link_report = link_flat_records(result.records)
            self.save_records(dataset.id, records)
            self._audit(dataset, actor, "transform", new_status="transformed")
            payload = {"records": len(records), "trace": result.trace.to_dict()}
            if link_report is not None:
                payload["linked"] = link_report
            return payload
        if stage == "ingest-staging":
            records = self.load_records(dataset.id)
            previous = self.store.space("staging").manifests.get(dataset.id)
            report = ingest_dataset(
                self.store,
                records,
                dataset_id=dataset.id,
                repository_id=dataset.repository_id,
                parent_scope=dataset.parent_scope,
                options=options,
                space="staging",
            )
            payload = report.to_dict()
            if previous is not None and not options.dry_run:
                current = self.store.space("staging").manifests[dataset.id]
                cleanup = cleanup_stale(
                    self.store, dataset.id, current, options=options, previous=previous
                )
                payload["cleanup"] = cleanup.to_dict()
            if not options.dry_run:
                self._audit(dataset, actor, "ingest-staging", new_status="staged")
            return payload
        raise ControlError(f"unknown stage {stage!r}")

    def _fetch(self, dataset: Dataset) -> FileSet:
        config = dataset.fetch
        previous: Optional[FileSet] = None
        if self._files_path(dataset.id).exists():
            previous = self.load_fileset(dataset.id)
        if config.method == "oaipmh":
            return harvest.oai_harvest(config, previous=previous)
        if config.method == "resourcesync":
            return harvest.rs_sync(config, previous=previous)
        if config.method == "urlset":
            return harvest.fetch_urls(config)
        if config.method == "upload":
            if previous is None:
                raise ControlError("upload-method dataset has no uploaded files yet")
            return previous
        raise ControlError(f"unknown fetch method {config.method!r}")

    # -- preview --

    def preview_dataset(
        self,
        dataset_id: str,
        limit: int = 1,
        mapping_text: Optional[str] = None,
    ) -> PreviewResult:
        """Interactive preview; optionally substitutes edited mapping-table text."""
        dataset = self.get_dataset(dataset_id)
        files = self.load_fileset(dataset_id)
        pipeline = dataset.pipeline
        if mapping_text is not None:
            table = compile_mapping(mapping_text)
            stages = []
            replaced = False
            for stage in pipeline.stages:
                if not replaced and stage.kind is StageKind.XML_MAPPING:
                    stages.append(Stage(kind=StageKind.XML_MAPPING, mapping=table))
                    replaced = True
                else:
                    stages.append(stage)
            if not replaced:
                raise ControlError("pipeline has no xml-mapping stage to preview against")
            pipeline = TransformPipeline(tuple(stages))
        cache = self._caches.setdefault(dataset_id, StageCache())
        return run_preview(pipeline, files, limit, cache=cache)

    # -- review / approval / promotion --

    def diff_dataset(self, dataset_id: str) -> dict:
        """Staging-vs-production comparison of the dataset's scoped content."""
        self.get_dataset(dataset_id)
        staging = self.store.space("staging")
        production = self.store.space("production")
        stage_units = {g: u for g, u in staging.units.items() if u.source_dataset == dataset_id}
        prod_units = {g: u for g, u in production.units.items() if u.source_dataset == dataset_id}
        created = sorted(set(stage_units) - set(prod_units))
        deleted = sorted(set(prod_units) - set(stage_units))
        updated = []
        for gid in sorted(set(stage_units) & set(prod_units)):
            before = unit_to_dict(prod_units[gid])
            after = unit_to_dict(stage_units[gid])
            if before != after:
                updated.append({"global_id": gid, "changes": _dict_changes(before, after)})
        return {
            "dataset_id": dataset_id,
            "staging_digest": space_digest(staging, dataset_id),
            "production_digest": space_digest(production, dataset_id),
            "created": created,
            "deleted": deleted,
            "updated": updated,
        }

    def approve_dataset(self, dataset_id: str, approver: str) -> Dataset:
        dataset = self.get_dataset(dataset_id)
        if dataset.status != "staged":
            raise WrongStatusError(f"approval requires status staged, not {dataset.status!r}")
        self._audit(dataset, approver, "approve", new_status="approved")
        return dataset

    def promote_dataset(self, dataset_id: str, actor: str) -> PromotionReport:
        dataset = self.get_dataset(dataset_id)
        if dataset.status != "approved":
            raise WrongStatusError(f"promotion requires status approved, not {dataset.status!r}")
        try:
            report = self.store.promote_dataset(dataset_id)
        except StoreError:
            # status stays approved so the promotion can be retried
            self.store.dataset_status[dataset_id] = "approved"
            raise
        self._audit(dataset, actor, "promote", new_status="promoted")
        return report

    def approve_and_promote(self, dataset_id: str, approver: str) -> PromotionReport:
        """Record the approval and promote in one step."""
        self.approve_dataset(dataset_id, approver)
        return self.promote_dataset(dataset_id, approver)

    # -- unit browsing --

    def unit_tree(self, space: str, global_id: str, depth: Optional[int] = None) -> dict:
        """Fetch a unit subtree; HTTP stacks URL-decode ids, so a decoded
        form (raw local_id segments) is accepted alongside the exact id."""
        state = self.store.space(space)
        candidates = [global_id]
        segments = global_id.split("/")
        if len(segments) > 1:
            candidates.append(segments[0] + "/" + "/".join(encode_local_id(s) for s in segments[1:]))
        for candidate in candidates:
            if state.has_unit(candidate):
                return get_subtree(state, candidate, depth).to_dict()
        raise NotFoundError(f"unit {global_id!r} not found in {space}")

    # -- public resource export --

    def export_resources(self, dataset_id: str, dest: Path) -> Path:
        """Write a self-contained replication folder for one dataset.

        The folder carries the dataset definition, mapping tables and
        concordances as standalone files, and a README manifest describing
        how to replay the workflow.
        """
        dataset = self.get_dataset(dataset_id)
        out = Path(dest) / dataset_id
        out.mkdir(parents=True, exist_ok=True)

        stages_cfg: List[dict] = []
        notes: List[str] = []
        for i, stage in enumerate(dataset.pipeline.stages):
            cfg = {"kind": stage.kind.value}
            if stage.kind is StageKind.XML_MAPPING:
                name = f"mapping-{i}.csv"
                (out / name).write_text(stage.mapping.to_table_text(), encoding="utf-8")
                cfg["mapping_file"] = name
                notes.append(f"- `{name}`: tabular mapping rules for stage {i}")
            elif stage.kind is StageKind.CONCORDANCE:
                name = f"concordance-{i}.csv"
                lines = ["source_label,kind,target_id"]
                lines += [
                    ",".join(_csv_escape(c) for c in (e.source_label, e.source_kind, e.target_id))
                    for e in stage.concordance.entries
                ]
                (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
                cfg["concordance_file"] = name
                cfg["scope"] = stage.concordance.scope_id
                cfg["match_mode"] = stage.concordance.match_mode
                notes.append(f"- `{name}`: access-point concordance for stage {i}")
            else:
                cfg.update({k: v for k, v in stage.to_dict().items() if k != "kind"})
            stages_cfg.append(cfg)

        definition = {
            "id": dataset.id,
            "repository": dataset.repository_id,
            "parent_scope": dataset.parent_scope,
            "fetch": dataset.fetch.to_dict(),
            "pipeline": {"stages": stages_cfg},
        }
        (out / "dataset.yaml").write_text(yaml.safe_dump(definition, sort_keys=False), encoding="utf-8")
        readme = [
            f"# Integration resources: {dataset.id}",
            "",
            f"Repository: {dataset.repository_id}",
            f"Fetch method: {dataset.fetch.method}",
            "",
            "## Files",
            "- `dataset.yaml`: dataset definition (fetch + pipeline)",
            *notes,
            "",
            "## Replay",
            "1. `archint dataset create dataset.yaml`",
            f"2. `archint dataset fetch {dataset.id}`",
            f"3. `archint dataset transform {dataset.id}`",
            f"4. `archint dataset ingest {dataset.id}`",
            "5. review in staging, then approve and promote",
            "",
        ]
        (out / "README.md").write_text("\n".join(readme), encoding="utf-8")
        return out


def _dict_changes(before: dict, after: dict, prefix: str = "") -> List[dict]:
    """Field-level change list between two canonical dicts."""
    changes: List[dict] = []
    keys = list(dict.fromkeys(list(before.keys()) + list(after.keys())))
    for key in keys:
        path = f"{prefix}.{key}" if prefix else key
        a, b = before.get(key), after.get(key)
        if a == b:
            continue
        if isinstance(a, dict) and isinstance(b, dict):
            changes.extend(_dict_changes(a, b, path))
        else:
            changes.append({"path": path, "before": a, "after": b})
    return changes


# --- configuration -------------------------------------------------------------


DEFAULT_CONFIG = {
    "workspace": "./workspace",
    "host": "127.0.0.1",
    "port": 8642,
    "actor": "operator",
}

_ENV_PREFIX = "ARCHINT_"


def load_config(
    config_file: Optional[Path] = None,
    env: Optional[dict] = None,
    overrides: Optional[dict] = None,
) -> dict:
    """Effective configuration with documented precedence: flags > env > file."""
    import os

    merged = dict(DEFAULT_CONFIG)
    path = config_file or Path("archint.yaml")
    if path.exists():
        loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        merged.update({k: v for k, v in loaded.items() if k in DEFAULT_CONFIG})
    environ = env if env is not None else dict(os.environ)
    for key in DEFAULT_CONFIG:
        env_key = _ENV_PREFIX + key.upper()
        if env_key in environ:
            merged[key] = environ[env_key]
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    merged["port"] = int(merged["port"])
    return merged
