"""HTTP + WebSocket synthesis service.

Endpoints:
  POST /session       raw PNG/JPEG body -> session id for the source image
  POST /synthesize    JSON {session_id, pose} -> PNG bytes (+ timing headers)
  GET  /stats         pose bounds and model info, for scaling UI controls
  WS   /stream        pose messages in, frames out; when the client outruns
                      inference, pending poses coalesce to the newest one

The checkpoint is immutable after load; inference is single-flight per model
instance (a global lock), and every frame corresponds to one requested pose,
delivered in request order.
"""

from __future__ import annotations

import asyncio
import base64
import io
import time
import uuid
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel

from .pose import Pose6D, normalize_pose
from .renderer import SynthesisNetwork


class PoseModel(BaseModel):
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def to_pose(self) -> Pose6D:
        return Pose6D(self.x, self.y, self.z, self.yaw, self.pitch, self.roll)


class SessionResponse(BaseModel):
    session_id: str
    height: int
    width: int
    resized: bool


class StatsResponse(BaseModel):
    p_min: list[float]
    p_max: list[float]
    height: int
    width: int
    variant: str
    encoder1: str
    embedding_variant: str
    backbone_source: str


class SynthesizeRequest(BaseModel):
    session_id: str
    pose: PoseModel


class ErrorResponse(BaseModel):
    detail: str


@dataclass
class _Session:
    image: np.ndarray
    created: float


def _encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray((np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)).save(
        buf, format="PNG"
    )
    return buf.getvalue()


def _decode_image(data: bytes, size: tuple[int, int]) -> tuple[np.ndarray, bool]:
    with Image.open(io.BytesIO(data)) as im:
        im = im.convert("RGB")
        resized = im.size != (size[1], size[0])
        if resized:
            im = im.resize((size[1], size[0]), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32) / 255.0, resized


def create_app(
    model: SynthesisNetwork,
    max_sessions: int = 64,
    frontend_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="viewsynth", version="0.1.0")
    sessions: dict[str, _Session] = {}
    infer_lock = asyncio.Lock()
    resolution = (model.cfg.height, model.cfg.width)

    async def _infer(image: np.ndarray, pose: Pose6D) -> tuple[np.ndarray, float]:
        loop = asyncio.get_running_loop()
        async with infer_lock:
            t0 = time.perf_counter()
            out = await loop.run_in_executor(None, model.synthesize, image, pose)
            return out, (time.perf_counter() - t0) * 1000.0

    @app.post("/session", response_model=SessionResponse)
    async def create_session(request: Request):
        data = await request.body()
        if not data:
            return JSONResponse(status_code=400, content={"detail": "empty image body"})
        try:
            image, resized = _decode_image(data, resolution)
        except Exception:
            return JSONResponse(status_code=400, content={"detail": "undecodable image"})
        if len(sessions) >= max_sessions:
            oldest = min(sessions, key=lambda k: sessions[k].created)
            del sessions[oldest]
        sid = uuid.uuid4().hex
        sessions[sid] = _Session(image=image, created=time.time())
        return SessionResponse(
            session_id=sid, height=resolution[0], width=resolution[1], resized=resized
        )

    @app.get("/stats", response_model=StatsResponse)
    async def stats():
        s = model.stats
        return StatsResponse(
            p_min=[float(v) for v in s.p_min],
            p_max=[float(v) for v in s.p_max],
            height=resolution[0],
            width=resolution[1],
            variant=model.cfg.variant.value,
            encoder1=model.cfg.encoder1.value,
            embedding_variant=model.cfg.embedding.variant.value,
            backbone_source=model.backbone_source,
        )

    @app.post(
        "/synthesize",
        responses={200: {"content": {"image/png": {}}}, 404: {"model": ErrorResponse}},
    )
    async def synthesize(req: SynthesizeRequest):
        session = sessions.get(req.session_id)
        if session is None:
            return JSONResponse(
                status_code=404, content={"detail": f"unknown session {req.session_id}"}
            )
        pose = req.pose.to_pose()
        out_of_range = normalize_pose(pose, model.stats).out_of_range
        out, ms = await _infer(session.image, pose)
        return Response(
            content=_encode_png(out),
            media_type="image/png",
            headers={
                "X-Inference-Ms": f"{ms:.2f}",
                "X-Model-Variant": model.cfg.variant.value,
                "X-Pose-Out-Of-Range": "1" if out_of_range else "0",
            },
        )

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        latest: dict | None = None
        wakeup = asyncio.Event()
        closed = False

        async def worker():
            nonlocal latest
            while True:
                await wakeup.wait()
                wakeup.clear()
                msg, latest = latest, None  # newest-pose-wins coalescing
                if msg is None:
                    continue
                session = sessions.get(msg.get("session_id", ""))
                if session is None:
                    await ws.send_json(
                        {"type": "error", "message": f"unknown session {msg.get('session_id')}"}
                    )
                    continue
                try:
                    pose = PoseModel(**msg.get("pose", {})).to_pose()
                except Exception as exc:
                    await ws.send_json({"type": "error", "message": f"bad pose: {exc}"})
                    continue
                out_of_range = normalize_pose(pose, model.stats).out_of_range
                out, ms = await _infer(session.image, pose)
                await ws.send_json(
                    {
                        "type": "frame",
                        "seq": msg.get("seq"),
                        "pose": pose.to_dict(),
                        "inference_ms": ms,
                        "out_of_range": out_of_range,
                        "image_b64": base64.b64encode(_encode_png(out)).decode("ascii"),
                    }
                )

        task = asyncio.create_task(worker())
        try:
            while True:
                latest = await ws.receive_json()
                wakeup.set()
        except WebSocketDisconnect:
            closed = True
        finally:
            task.cancel()
            if not closed:
                await ws.close()

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="viewer")

    return app


def serve(
    model: SynthesisNetwork,
    host: str = "127.0.0.1",
    port: int = 8000,
    frontend_dir: str | None = None,
) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(
        create_app(model, frontend_dir=frontend_dir),
        host=host,
        port=port,
        log_level="warning",
    )
