"""HTTP+JSON API over the control service.

One service instance per workspace; endpoints mirror the dataset lifecycle
(create, fetch, transform, preview, ingest, approve, promote, diff) plus job
polling and unit browsing.  The caller's identity arrives via the X-Actor
header; there is deliberately no authentication layer here.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Header, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .control import (
    ControlError,
    ControlService,
    DefinitionError,
    JobConflictError,
    WrongStatusError,
)
from .ingest import IngestOptions
from .store import (
    MissingManifestError,
    NotApprovedError,
    NotFoundError,
    StoreError,
    ValidationFailure,
)
from .transform import MappingParseError, StageFailure, TransformError
from .harvest import HarvestError

__all__ = ["create_app"]


def create_app(workspace: Path) -> FastAPI:
    service = ControlService(Path(workspace))
    app = FastAPI(title="archint", version="0.1.0")
    app.state.service = service
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(NotFoundError)
    async def not_found(_req: Request, exc: NotFoundError) -> JSONResponse:
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(DefinitionError)
    async def bad_definition(_req: Request, exc: DefinitionError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"error": str(exc), "problems": list(exc.problems)})

    @app.exception_handler(MappingParseError)
    async def bad_mapping(_req: Request, exc: MappingParseError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"error": str(exc), "row": exc.row, "expression": exc.expr},
        )

    @app.exception_handler(ValidationFailure)
    async def validation_failed(_req: Request, exc: ValidationFailure) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={
                "error": str(exc),
                "violations": [
                    {"code": v.code, "message": v.message, "subject": v.subject}
                    for v in exc.report.violations
                ],
            },
        )

    @app.exception_handler(StageFailure)
    async def stage_failed(_req: Request, exc: StageFailure) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={
                "error": str(exc),
                "stage_index": exc.stage_index,
                "kind": exc.kind,
                "files": [{"name": n, "message": m} for n, m in exc.errors],
            },
        )

    @app.exception_handler(WrongStatusError)
    async def wrong_status(_req: Request, exc: WrongStatusError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(JobConflictError)
    async def job_conflict(_req: Request, exc: JobConflictError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(NotApprovedError)
    async def not_approved(_req: Request, exc: NotApprovedError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(MissingManifestError)
    async def missing_manifest(_req: Request, exc: MissingManifestError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(TransformError)
    async def transform_error(_req: Request, exc: TransformError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(HarvestError)
    async def harvest_error(_req: Request, exc: HarvestError) -> JSONResponse:
        return JSONResponse(status_code=502, content={"error": str(exc)})

    @app.exception_handler(ControlError)
    async def control_error(_req: Request, exc: ControlError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(StoreError)
    async def store_error(_req: Request, exc: StoreError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/seed", status_code=201)
    def seed(payload: dict = Body(...)) -> dict:
        return service.seed_entities(payload)

    @app.post("/datasets", status_code=201)
    def create_dataset(
        definition: dict = Body(...), x_actor: str = Header(default="operator")
    ) -> dict:
        dataset = service.create_dataset(definition, actor=x_actor)
        return service.dataset_payload(dataset)

    @app.get("/datasets")
    def list_datasets() -> list:
        return [service.dataset_payload(d) for d in service.list_datasets()]

    @app.get("/datasets/{dataset_id}")
    def get_dataset(dataset_id: str) -> dict:
        return service.dataset_payload(service.get_dataset(dataset_id))

    @app.put("/datasets/{dataset_id}")
    def update_dataset(
        dataset_id: str, definition: dict = Body(...), x_actor: str = Header(default="operator")
    ) -> dict:
        return service.dataset_payload(service.update_dataset(dataset_id, definition, actor=x_actor))

    @app.post("/datasets/{dataset_id}/upload", status_code=201)
    def upload(
        dataset_id: str, payload: dict = Body(...), x_actor: str = Header(default="operator")
    ) -> dict:
        import base64

        files = [
            (row["name"], base64.b64decode(row["content_base64"]))
            for row in payload.get("files", [])
        ]
        fileset = service.upload_files(dataset_id, files, actor=x_actor)
        return {"files": len(fileset.items)}

    def _run_stage(dataset_id: str, stage: str, payload: Optional[dict], actor: str) -> dict:
        options = IngestOptions.from_dict(payload or {})
        job = service.run_stage(dataset_id, stage, options=options, actor=actor)
        return job.to_dict()

    @app.post("/datasets/{dataset_id}/fetch", status_code=202)
    def fetch(
        dataset_id: str,
        payload: Optional[dict] = Body(default=None),
        x_actor: str = Header(default="operator"),
    ) -> dict:
        return _run_stage(dataset_id, "fetch", payload, x_actor)

    @app.post("/datasets/{dataset_id}/transform", status_code=202)
    def transform(
        dataset_id: str,
        payload: Optional[dict] = Body(default=None),
        x_actor: str = Header(default="operator"),
    ) -> dict:
        return _run_stage(dataset_id, "transform", payload, x_actor)

    @app.post("/datasets/{dataset_id}/ingest", status_code=202)
    def ingest(
        dataset_id: str,
        payload: Optional[dict] = Body(default=None),
        x_actor: str = Header(default="operator"),
    ) -> dict:
        return _run_stage(dataset_id, "ingest-staging", payload, x_actor)

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        return service.get_job(job_id).to_dict()

    @app.post("/datasets/{dataset_id}/preview")
    def preview(
        dataset_id: str,
        limit: int = Query(default=1, ge=1),
        payload: Optional[dict] = Body(default=None),
    ) -> dict:
        from .interchange import record_to_dict

        mapping_text = (payload or {}).get("mapping_text")
        result = service.preview_dataset(dataset_id, limit=limit, mapping_text=mapping_text)
        return {
            "records": [record_to_dict(r) for r in result.records],
            "ead": list(result.ead),
            "trace": result.trace.to_dict(),
        }

    @app.get("/datasets/{dataset_id}/diff")
    def diff(dataset_id: str) -> dict:
        return service.diff_dataset(dataset_id)

    @app.post("/datasets/{dataset_id}/approve")
    def approve(dataset_id: str, x_actor: str = Header(default="operator")) -> dict:
        dataset = service.approve_dataset(dataset_id, approver=x_actor)
        return service.dataset_payload(dataset)

    @app.post("/datasets/{dataset_id}/promote")
    def promote(dataset_id: str, x_actor: str = Header(default="operator")) -> dict:
        report = service.promote_dataset(dataset_id, actor=x_actor)
        return report.to_dict()

    @app.get("/spaces/{space}/units/{global_id:path}")
    def unit(space: str, global_id: str, depth: Optional[int] = Query(default=None)) -> dict:
        return service.unit_tree(space, global_id, depth)

    return app
