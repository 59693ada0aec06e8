"""HTTP/WebSocket gateway: exposes sessions to UIs and scripts.

One gateway hosts many sessions keyed by opaque UUIDs. Mutating routes take
the session's writer lock; GET routes never change state. Progress and
preview/commit notifications are broadcast per session over the events
WebSocket.
"""

from __future__ import annotations

import asyncio
import base64
import io as _io
import json
import queue
import tempfile
import threading
import uuid
import zipfile
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.requests import Request
from fastapi.responses import JSONResponse, Response

from . import io as sfio
from .backend import CONDITION_KINDS, Condition, GenerationRequest
from .errors import (
    NoPendingPreview,
    NothingToUndo,
    PendingPreviewExists,
    SceneFuseError,
    TransportError,
)
from .geometry import Pose
from .session import SceneSession, SessionConfig, _pose_from_dict


class ApiError(Exception):
    def __init__(self, code: str, message: str, http_status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.http_status = http_status

    @classmethod
    def from_exception(cls, exc: Exception) -> "ApiError":
        if isinstance(exc, ApiError):
            return exc
        if isinstance(exc, (NoPendingPreview, NothingToUndo, PendingPreviewExists)):
            return cls(exc.code, exc.message, 409)
        if isinstance(exc, TransportError):
            return cls(exc.code, exc.message, 502)
        if isinstance(exc, SceneFuseError):
            return cls(exc.code, exc.message, 400)
        return cls("internal", str(exc), 500)


class SessionHandle:
    def __init__(self, session: SceneSession):
        self.session = session
        self.lock = threading.Lock()
        self.subscribers: list[queue.Queue] = []
        self.sub_lock = threading.Lock()

    def broadcast(self, event_type: str, payload):
        event = {"type": event_type, "payload": payload}
        with self.sub_lock:
            for q in list(self.subscribers):
                q.put(event)

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self.sub_lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue):
        with self.sub_lock:
            if q in self.subscribers:
                self.subscribers.remove(q)


def _parse_pose(doc) -> Pose:
    try:
        if isinstance(doc, dict) and "matrix" in doc:
            return Pose.from_matrix(np.array(doc["matrix"], dtype=np.float64))
        return _pose_from_dict(doc)
    except Exception as exc:
        raise ApiError("bad_pose", f"malformed pose: {exc}") from exc


def _parse_conditions(items) -> list:
    conditions = []
    for item in items or []:
        kind = item.get("kind")
        if kind not in CONDITION_KINDS:
            raise ApiError("bad_condition", f"unknown condition kind {kind!r}")
        try:
            image = sfio.decode_png_bytes(base64.b64decode(item["image_png"]))
        except Exception as exc:
            raise ApiError("bad_condition", f"undecodable condition image: {exc}") from exc
        conditions.append(Condition(kind, image))
    return conditions


def _parse_request(doc) -> GenerationRequest:
    box = doc.get("selection_box")
    try:
        return GenerationRequest(
            prompt=str(doc.get("prompt", "")),
            seed=int(doc.get("seed", 0)),
            selection_box=tuple(int(v) for v in box) if box else None,
            conditions=_parse_conditions(doc.get("conditions")),
        )
    except ApiError:
        raise
    except SceneFuseError as exc:
        raise ApiError(exc.code, exc.message) from exc
    except (TypeError, ValueError) as exc:
        raise ApiError("bad_request", str(exc)) from exc


def create_app(data_dir=None, default_backend=None) -> FastAPI:
    """Build the gateway application. Sessions persist under data_dir."""
    from contextlib import asynccontextmanager

    root = Path(data_dir) if data_dir else Path(tempfile.mkdtemp(prefix="scenefuse-"))
    root.mkdir(parents=True, exist_ok=True)
    handles: dict[str, SessionHandle] = {}

    @asynccontextmanager
    async def lifespan(_app):
        yield
        # graceful shutdown: flush every session to disk
        for handle in handles.values():
            with handle.lock:
                handle.session.persist()

    app = FastAPI(title="scenefuse gateway", lifespan=lifespan)
    app.state.sessions = handles
    app.state.data_dir = root

    def get_handle(session_id: str) -> SessionHandle:
        handle = handles.get(session_id)
        if handle is None:
            raise ApiError("not_found", f"no session {session_id}", 404)
        return handle

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.http_status,
                            content={"code": exc.code, "message": exc.message})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        try:
            cfg_doc = dict(body.get("config") or {})
            if default_backend is not None and "backend" not in cfg_doc:
                cfg_doc["backend"] = default_backend
            config = SessionConfig.from_dict(cfg_doc)
            first_doc = body.get("first") or {}
            first = _parse_request(first_doc)
            first_pose = _parse_pose(body["first_pose"]) if body.get("first_pose") else None
            session_id = str(uuid.uuid4())
            session = SceneSession.new(config, first, root / session_id,
                                       first_pose=first_pose)
        except (ApiError, SceneFuseError) as exc:
            raise ApiError.from_exception(exc)
        except KeyError as exc:
            raise ApiError("bad_config", f"missing config field {exc}")
        handles[session_id] = SessionHandle(session)
        return {"id": session_id, "summary": session.summary()}

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str):
        return get_handle(session_id).session.summary()

    @app.post("/sessions/{session_id}/render")
    def render(session_id: str, body: dict):
        handle = get_handle(session_id)
        pose = _parse_pose(body.get("pose"))
        image, mask, _, _ = handle.session.render_at(pose)
        png = sfio.encode_png_bytes(image)
        coverage = float(mask.mean())
        return Response(content=png, media_type="image/png",
                        headers={"X-Mask-Coverage": f"{coverage:.6f}"})

    @app.post("/sessions/{session_id}/propose")
    def propose(session_id: str, body: dict):
        handle = get_handle(session_id)
        pose = _parse_pose(body.get("pose"))
        request = _parse_request(body)
        with handle.lock:
            handle.broadcast("progress", {"stage": "propose_started",
                                          "step": len(handle.session.steps)})
            try:
                preview = handle.session.propose_step(pose, request)
            except SceneFuseError as exc:
                handle.broadcast("progress", {"stage": "propose_failed", "code": exc.code})
                raise ApiError.from_exception(exc)
        preview_id = str(uuid.uuid4())
        handle.preview_id = preview_id
        payload = {
            "preview_id": preview_id,
            "image_png_b64": base64.b64encode(sfio.encode_png_bytes(preview.record.image)).decode(),
            "diagnostics": preview.diagnostics,
        }
        handle.broadcast("preview_ready", {"preview_id": preview_id,
                                           "diagnostics": preview.diagnostics})
        return payload

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str):
        handle = get_handle(session_id)
        with handle.lock:
            try:
                record = handle.session.commit_step()
            except SceneFuseError as exc:
                raise ApiError.from_exception(exc)
        summary = handle.session.summary()
        handle.broadcast("committed", {"step": record.index, "summary": summary})
        return summary

    @app.post("/sessions/{session_id}/reject")
    def reject(session_id: str):
        handle = get_handle(session_id)
        with handle.lock:
            try:
                handle.session.reject_step()
            except SceneFuseError as exc:
                raise ApiError.from_exception(exc)
        return handle.session.summary()

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        handle = get_handle(session_id)
        with handle.lock:
            try:
                handle.session.undo()
            except SceneFuseError as exc:
                raise ApiError.from_exception(exc)
        return handle.session.summary()

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, what: str = "ply"):
        handle = get_handle(session_id)
        if what not in ("ply", "frames", "trajectory"):
            raise ApiError("bad_request", f"unknown export kind {what!r}")
        with tempfile.TemporaryDirectory() as tmp:
            try:
                paths = handle.session.export(what, tmp)
            except SceneFuseError as exc:
                raise ApiError.from_exception(exc)
            buf = _io.BytesIO()
            with zipfile.ZipFile(buf, "w") as zf:
                for p in paths:
                    zf.write(p, arcname=Path(p).name)
        return Response(content=buf.getvalue(), media_type="application/zip",
                        headers={"Content-Disposition":
                                 f'attachment; filename="{what}.zip"'})

    @app.websocket("/sessions/{session_id}/events")
    async def events(ws: WebSocket, session_id: str):
        handle = handles.get(session_id)
        if handle is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        q = handle.subscribe()
        try:
            while True:
                try:
                    event = await asyncio.to_thread(q.get, True, 0.25)
                except queue.Empty:
                    # surface client disconnects promptly
                    try:
                        await asyncio.wait_for(ws.receive_text(), timeout=0.001)
                    except asyncio.TimeoutError:
                        continue
                    except Exception:
                        break
                    continue
                await ws.send_text(json.dumps(event))
        except WebSocketDisconnect:
            pass
        finally:
            handle.unsubscribe(q)

    return app


def serve(host: str = "127.0.0.1", port: int = 8080, data_dir=None,
          default_backend=None):
    """Run the gateway under uvicorn (blocking)."""
    import uvicorn

    app = create_app(data_dir=data_dir, default_backend=default_backend)
    uvicorn.run(app, host=host, port=port, log_level="info")
