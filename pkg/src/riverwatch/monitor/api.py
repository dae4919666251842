"""HTTP API over MonitorService, plus static hosting for the dashboard build."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field

from .service import AOI, DuplicateIdError, MonitorService, UnknownIdError


class AOICreate(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    aoi_id: str = Field(min_length=1)
    name: str = Field(min_length=1)
    pipeline: Literal["hotspot", "blockage"]
    model_path: str
    ingest_dir: str
    alert_threshold: float = Field(default=0.2, gt=0)
    notify: list[str] = Field(default_factory=list)


class AOIPatch(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    name: str | None = Field(default=None, min_length=1)
    pipeline: Literal["hotspot", "blockage"] | None = None
    model_path: str | None = None
    ingest_dir: str | None = None
    alert_threshold: float | None = Field(default=None, gt=0)
    notify: list[str] | None = None


def create_app(service: MonitorService, static_dir: str | Path | None = None, api_base: str = "") -> FastAPI:
    app = FastAPI(title="riverwatch monitor", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _validation_to_400(request, exc: RequestValidationError):
        detail = [
            {"loc": list(e.get("loc", ())), "msg": e.get("msg", ""), "type": e.get("type", "")}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.exception_handler(UnknownIdError)
    async def _unknown_to_404(request, exc: UnknownIdError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(DuplicateIdError)
    async def _duplicate_to_409(request, exc: DuplicateIdError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.get("/api/aois")
    def list_aois() -> list[dict]:
        return [a.to_dict() for a in service.list_aois()]

    @app.post("/api/aois", status_code=201)
    def create_aoi(body: AOICreate) -> dict:
        try:
            aoi = AOI(
                aoi_id=body.aoi_id,
                name=body.name,
                pipeline=body.pipeline,
                model_path=body.model_path,
                ingest_dir=body.ingest_dir,
                alert_threshold=body.alert_threshold,
                notify=tuple(body.notify),
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        service.register_aoi(aoi)
        return aoi.to_dict()

    @app.patch("/api/aois/{aoi_id}")
    def patch_aoi(aoi_id: str, body: AOIPatch) -> dict:
        changes = body.model_dump(exclude_none=True)
        if "notify" in changes:
            changes["notify"] = tuple(changes["notify"])
        try:
            return service.update_aoi(aoi_id, **changes).to_dict()
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.delete("/api/aois/{aoi_id}", status_code=204)
    def delete_aoi(aoi_id: str) -> Response:
        service.delete_aoi(aoi_id)
        return Response(status_code=204)

    @app.get("/api/aois/{aoi_id}/timeline")
    def timeline(aoi_id: str) -> list[dict]:
        return [
            {
                "scene_id": o.scene_id,
                "acquired_at": o.acquired_at.isoformat(),
                "waste_area_m2": o.waste_area_m2,
                "waste_fraction": o.waste_fraction,
            }
            for o in service.timeline(aoi_id)
        ]

    @app.get("/api/aois/{aoi_id}/latest")
    def latest(aoi_id: str) -> dict:
        obs = service.latest_observation(aoi_id)
        if obs is None:
            raise HTTPException(status_code=404, detail=f"no observations for AOI {aoi_id!r}")
        report = json.loads(Path(obs.report_path).read_text(encoding="utf-8"))
        return {"observation": obs.to_dict(), "report": report}

    def _latest_artifact(aoi_id: str, name: str) -> Response:
        obs = service.latest_observation(aoi_id)
        if obs is None:
            raise HTTPException(status_code=404, detail=f"no observations for AOI {aoi_id!r}")
        path = Path(obs.report_path).parent / name
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"missing artifact {name}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/api/aois/{aoi_id}/latest/overlay.png")
    def latest_overlay(aoi_id: str) -> Response:
        return _latest_artifact(aoi_id, "overlay.png")

    @app.get("/api/aois/{aoi_id}/latest/heatmap.png")
    def latest_heatmap(aoi_id: str) -> Response:
        return _latest_artifact(aoi_id, "heatmap.png")

    @app.get("/api/alerts")
    def list_alerts(acknowledged: bool | None = None) -> list[dict]:
        return [a.to_dict() for a in service.alerts(acknowledged)]

    @app.post("/api/alerts/{alert_id}/ack")
    def ack_alert(alert_id: str) -> dict:
        return service.ack_alert(alert_id).to_dict()

    @app.post("/api/poll")
    def poll() -> dict:
        return service.poll_once()

    @app.get("/config.json")
    def config() -> dict:
        return {"api_base": api_base}

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="dashboard")

    return app
