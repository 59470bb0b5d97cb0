"""HTTP face of a run: the human re-annotation queue and run telemetry.

The service never mutates state itself; every write goes through
`Pipeline.apply_human_label` under one lock, so concurrent conflicting
submissions resolve to exactly one applied label. Reads return plain
snapshots without locking.
"""

from __future__ import annotations

import threading
from typing import Literal

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import ConflictError, VeriloopError
from .pipeline import Pipeline


class LabelSubmission(BaseModel):
    label: Literal["fake", "real"]
    annotator: str = "anonymous"


def create_app(
    runs: dict[str, Pipeline],
    auto_advance: bool = False,
    lock: threading.Lock | None = None,
    auth_token: str | None = None,
) -> FastAPI:
    """No auth by default (local tool); pass auth_token to require
    `Authorization: Bearer <token>` on every request."""
    app = FastAPI(title="veriloop annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    write_lock = lock if lock is not None else threading.Lock()

    if auth_token is not None:
        from fastapi import Request

        @app.middleware("http")
        async def check_token(request: Request, call_next):
            if request.method != "OPTIONS" and request.headers.get("Authorization") != f"Bearer {auth_token}":
                return JSONResponse(status_code=401, content={"error": "missing or invalid token"})
            return await call_next(request)

    def _get_run(run_id: str) -> Pipeline | None:
        return runs.get(run_id)

    @app.get("/runs/{run_id}/status")
    def run_status(run_id: str):
        pipe = _get_run(run_id)
        if pipe is None:
            return JSONResponse(status_code=404, content={"error": f"unknown run {run_id!r}"})
        return pipe.status_summary()

    @app.get("/runs/{run_id}/tasks")
    def run_tasks(run_id: str):
        pipe = _get_run(run_id)
        if pipe is None:
            return JSONResponse(status_code=404, content={"error": f"unknown run {run_id!r}"})
        if pipe.status != "awaiting_human":
            return []
        return pipe.human_queue

    @app.post("/runs/{run_id}/tasks/{record_id}/label")
    def submit_label(run_id: str, record_id: str, submission: LabelSubmission):
        pipe = _get_run(run_id)
        if pipe is None:
            return JSONResponse(status_code=404, content={"error": f"unknown run {run_id!r}"})
        with write_lock:
            try:
                result = pipe.apply_human_label(record_id, submission.label, submission.annotator)
            except ConflictError as exc:
                return JSONResponse(status_code=409, content={"error": str(exc)})
            except VeriloopError as exc:
                return JSONResponse(status_code=404, content={"error": str(exc)})
        if auto_advance and result["status"] == "sampling":
            threading.Thread(target=_advance, args=(pipe, write_lock), daemon=True).start()
        return result

    return app


def _advance(pipe: Pipeline, lock: threading.Lock) -> None:
    """Run rounds until the pipeline blocks on humans again or finishes."""
    with lock:
        try:
            pipe.run()
        except VeriloopError:
            pass


def serve(pipe: Pipeline, run_id: str = "run1", host: str = "127.0.0.1", port: int = 8008) -> None:
    import uvicorn

    lock = threading.Lock()
    token = (pipe.config.get("service") or {}).get("token")
    app = create_app({run_id: pipe}, auto_advance=True, lock=lock, auth_token=token)
    threading.Thread(target=_advance, args=(pipe, lock), daemon=True).start()
    uvicorn.run(app, host=host, port=port)
