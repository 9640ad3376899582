"""Command-line interface mirroring the HTTP API, operating on a workspace.

Configuration precedence is flags > environment (ARCHINT_*) > config file
(archint.yaml).  Exit codes: 0 success, 2 validation failure, 3 partial
batch failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional, Tuple

import click
import yaml

from .control import ControlService, load_config
from .ingest import IngestOptions

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARTIAL_BATCH = 3


def _service(ctx: click.Context) -> ControlService:
    return ControlService(Path(ctx.obj["workspace"]))


def _echo_json(data) -> None:
    click.echo(json.dumps(data, ensure_ascii=False, indent=2))


def _load_definition(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        return yaml.safe_load(text)
    return json.loads(text)


@click.group()
@click.option("--config", "-c", "config_path", type=click.Path(path_type=Path), default=None,
              help="Config file (default: ./archint.yaml if present).")
@click.option("--workspace", "-w", type=click.Path(path_type=Path), default=None,
              help="Workspace directory holding the store and datasets.")
@click.option("--actor", default=None, help="Actor recorded in audit entries.")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path], workspace: Optional[Path], actor: Optional[str]) -> None:
    """Archival metadata integration workbench."""
    overrides = {"workspace": str(workspace) if workspace else None, "actor": actor}
    ctx.obj = load_config(config_path, overrides=overrides)


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx: click.Context, host: Optional[str], port: Optional[int]) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app

    app = create_app(Path(ctx.obj["workspace"]))
    uvicorn.run(app, host=host or ctx.obj["host"], port=port or ctx.obj["port"], log_level="info")


@main.command()
@click.argument("file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def seed(ctx: click.Context, file: Path) -> None:
    """Load supporting entities (countries, repositories, vocabularies) into staging."""
    counts = _service(ctx).seed_entities(_load_definition(file))
    _echo_json(counts)


@main.command()
@click.pass_context
def snapshot(ctx: click.Context) -> None:
    """Write bit-stable store snapshot files and truncate the transaction log."""
    service = _service(ctx)
    service.store.save_snapshot()
    click.echo(f"snapshot written under {service.workspace / 'store'}")


@main.group()
def dataset() -> None:
    """Dataset lifecycle commands."""


@dataset.command("create")
@click.argument("file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def dataset_create(ctx: click.Context, file: Path) -> None:
    service = _service(ctx)
    created = service.create_dataset(
        _load_definition(file), actor=ctx.obj["actor"], base_dir=file.parent
    )
    _echo_json(service.dataset_payload(created))


@dataset.command("list")
@click.pass_context
def dataset_list(ctx: click.Context) -> None:
    service = _service(ctx)
    for ds in service.list_datasets():
        click.echo(f"{ds.id}\t{ds.status}\t{ds.repository_id}")


@dataset.command("show")
@click.argument("dataset_id")
@click.pass_context
def dataset_show(ctx: click.Context, dataset_id: str) -> None:
    service = _service(ctx)
    _echo_json(service.dataset_payload(service.get_dataset(dataset_id)))


@dataset.command("upload")
@click.argument("dataset_id")
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.pass_context
def dataset_upload(ctx: click.Context, dataset_id: str, files: Tuple[Path, ...]) -> None:
    service = _service(ctx)
    payload = [(f.name, f.read_bytes()) for f in files]
    fileset = service.upload_files(dataset_id, payload, actor=ctx.obj["actor"])
    click.echo(f"uploaded {len(fileset.items)} file(s)")


def _run_stage_command(ctx: click.Context, dataset_id: str, stage: str, options: IngestOptions) -> None:
    service = _service(ctx)
    job = service.run_stage(dataset_id, stage, options=options, actor=ctx.obj["actor"], wait=True)
    if job.status == "failed":
        click.echo(f"{stage} failed: {job.error}", err=True)
        code = EXIT_VALIDATION if "validation failed" in (job.error or "") else 1
        sys.exit(code)
    _echo_json(job.report)


@dataset.command("fetch")
@click.argument("dataset_id")
@click.pass_context
def dataset_fetch(ctx: click.Context, dataset_id: str) -> None:
    _run_stage_command(ctx, dataset_id, "fetch", IngestOptions())


@dataset.command("transform")
@click.argument("dataset_id")
@click.pass_context
def dataset_transform(ctx: click.Context, dataset_id: str) -> None:
    _run_stage_command(ctx, dataset_id, "transform", IngestOptions())


@dataset.command("preview")
@click.argument("dataset_id")
@click.option("--limit", "-k", type=int, default=1, show_default=True)
@click.option("--mapping", type=click.Path(exists=True, path_type=Path), default=None,
              help="Try an edited mapping table file instead of the configured one.")
@click.pass_context
def dataset_preview(ctx: click.Context, dataset_id: str, limit: int, mapping: Optional[Path]) -> None:
    service = _service(ctx)
    mapping_text = mapping.read_text(encoding="utf-8") if mapping else None
    result = service.preview_dataset(dataset_id, limit=limit, mapping_text=mapping_text)
    for doc in result.ead:
        click.echo(doc)
    for warning in result.trace.warnings:
        click.echo(f"warning: {warning}", err=True)


@dataset.command("ingest")
@click.argument("dataset_id")
@click.option("--dry-run", is_flag=True)
@click.option("--allow-deletions", is_flag=True)
@click.option("--tolerance", type=click.Choice(["strict", "lenient"]), default="strict", show_default=True)
@click.pass_context
def dataset_ingest(ctx: click.Context, dataset_id: str, dry_run: bool, allow_deletions: bool, tolerance: str) -> None:
    options = IngestOptions(dry_run=dry_run, allow_deletions=allow_deletions, tolerance=tolerance)
    _run_stage_command(ctx, dataset_id, "ingest-staging", options)


@dataset.command("approve")
@click.argument("dataset_id")
@click.option("--approver", default=None, help="Defaults to the configured actor.")
@click.pass_context
def dataset_approve(ctx: click.Context, dataset_id: str, approver: Optional[str]) -> None:
    service = _service(ctx)
    approved = service.approve_dataset(dataset_id, approver=approver or ctx.obj["actor"])
    click.echo(f"{approved.id}: {approved.status}")


@dataset.command("promote")
@click.argument("dataset_id")
@click.pass_context
def dataset_promote(ctx: click.Context, dataset_id: str) -> None:
    service = _service(ctx)
    report = service.promote_dataset(dataset_id, actor=ctx.obj["actor"])
    _echo_json(report.to_dict())


@dataset.command("diff")
@click.argument("dataset_id")
@click.pass_context
def dataset_diff(ctx: click.Context, dataset_id: str) -> None:
    _echo_json(_service(ctx).diff_dataset(dataset_id))


@main.command("export-resources")
@click.argument("dataset_id")
@click.option("--dest", type=click.Path(path_type=Path), default=Path("resources"), show_default=True)
@click.pass_context
def export_resources(ctx: click.Context, dataset_id: str, dest: Path) -> None:
    """Export a dataset's replication folder (config, mappings, concordances)."""
    out = _service(ctx).export_resources(dataset_id, dest)
    click.echo(f"exported to {out}")


@main.group()
def batch() -> None:
    """Run a stage across many datasets, one transaction each."""


@batch.command("ingest")
@click.argument("dataset_ids", nargs=-1, required=True)
@click.option("--continue-on-error", is_flag=True, help="Keep going after a failure (default: stop).")
@click.option("--tolerance", type=click.Choice(["strict", "lenient"]), default="strict", show_default=True)
@click.pass_context
def batch_ingest(ctx: click.Context, dataset_ids: Tuple[str, ...], continue_on_error: bool, tolerance: str) -> None:
    """Ingest several transformed datasets; each dataset is its own transaction."""
    from .ingest import BatchJob, batch_run

    service = _service(ctx)
    options = IngestOptions(continue_on_error=continue_on_error, tolerance=tolerance)
    jobs = []
    for dataset_id in dataset_ids:
        ds = service.get_dataset(dataset_id)
        jobs.append(
            BatchJob(
                dataset_id=ds.id,
                repository_id=ds.repository_id,
                parent_scope=ds.parent_scope,
                records_source=lambda d=ds: service.load_records(d.id),
            )
        )
    outcomes = batch_run(service.store, jobs, options=options)
    for outcome in outcomes:
        if outcome.status == "ok":
            service._audit(service.get_dataset(outcome.dataset_id), ctx.obj["actor"],
                           "ingest-staging", new_status="staged")
        elif outcome.status == "failed":
            service._audit(service.get_dataset(outcome.dataset_id), ctx.obj["actor"],
                           "ingest-staging:failed", new_status="error")
    _echo_json([o.to_dict() for o in outcomes])
    statuses = {o.status for o in outcomes}
    if statuses == {"ok"} or not outcomes:
        sys.exit(EXIT_OK)
    if "ok" in statuses:
        sys.exit(EXIT_PARTIAL_BATCH)
    sys.exit(EXIT_VALIDATION if any("validation" in (o.error or "") for o in outcomes) else 1)


if __name__ == "__main__":
    main()
