"""Operator console service: a WebSocket JSON protocol over the closed-loop
session engine. One operator at a time; the browser UI only displays state and
submits fixations, all decoding and navigation stays server-side.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .errors import NoTargetError, ParameterError
from .session import SessionEngine
from .signal import StimulusClass

CLIENT_TYPES = {"fixate", "start", "pause", "resume", "reset"}


@dataclass
class ConsoleProtocol:
    """Transport-agnostic message handling: feed client envelopes in, collect
    server envelopes out. Used by the WebSocket endpoint and by tests."""

    engine_factory: object
    engine: SessionEngine = None
    paused: bool = False
    _server_seq: int = 0
    _last_client_seq: int = -1
    outbox: list = field(default_factory=list)

    def __post_init__(self):
        if self.engine is None:
            self.engine = self.engine_factory()

    def _send(self, msg_type: str, payload: dict) -> None:
        self._server_seq += 1
        self.outbox.append({"type": msg_type, "seq": self._server_seq,
                            "payload": payload})

    def _error(self, code: str, message: str) -> None:
        self._send("error", {"code": code, "message": message})

    def scene_payload(self) -> dict:
        engine = self.engine
        dets = [
            {
                "id": d.object_id,
                "class_name": d.class_name,
                "bbox": {"cx": d.bbox.center_x_px, "cy": d.bbox.center_y_px,
                         "w": d.bbox.width_px, "h": d.bbox.height_px},
                "freq_hz": d.stimulus.freq_hz if d.stimulus else None,
            }
            for d in engine.detections
        ]
        return {
            "state": type(engine.state).__name__,
            "pose": {"x": engine.pose.x, "y": engine.pose.y,
                     "heading": engine.pose.heading},
            "detections": dets,
            "mode": engine.mode,
            "experiment": engine.session.experiment,
            "trial": len(engine.session.trials),
        }

    def push_scene(self) -> None:
        self._send("scene_update", self.scene_payload())

    def handle_raw(self, raw: str) -> None:
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            self._error("bad_json", "message is not valid JSON")
            return
        self.handle(msg)

    def handle(self, msg) -> None:
        if not isinstance(msg, dict) or "type" not in msg:
            self._error("bad_envelope", "expected {type, seq, payload}")
            return
        seq = msg.get("seq")
        if not isinstance(seq, int) or seq <= self._last_client_seq:
            self._error("stale_seq", f"seq must increase past {self._last_client_seq}")
            return
        self._last_client_seq = seq
        msg_type = msg["type"]
        payload = msg.get("payload") or {}
        if msg_type not in CLIENT_TYPES:
            self._error("unknown_type", f"unknown message type {msg_type!r}")
            return
        getattr(self, f"_on_{msg_type}")(payload)

    def _on_start(self, payload: dict) -> None:
        self.engine = self.engine_factory()
        self.paused = False
        self.push_scene()

    def _on_pause(self, payload: dict) -> None:
        self.paused = True

    def _on_resume(self, payload: dict) -> None:
        self.paused = False
        self.push_scene()

    def _on_reset(self, payload: dict) -> None:
        self._on_start(payload)

    def _on_fixate(self, payload: dict) -> None:
        if self.paused:
            self._error("paused", "session is paused; resume first")
            return
        try:
            cls = StimulusClass.from_freq(float(payload.get("freq_hz", -1)))
        except (ParameterError, TypeError, ValueError):
            self._error("no such stimulus",
                        f"no stimulus at {payload.get('freq_hz')!r} Hz")
            return
        try:
            record = self.engine.submit_fixation(cls)
        except (NoTargetError, ParameterError) as exc:
            self._error("no such stimulus", str(exc))
            return
        self._send("decode_result", {
            "true_class": record.fixated.freq_hz,
            "predicted_class": record.decoded.freq_hz,
            "probs": [float(p) for p in record.probabilities],
            "latency_ms": record.latency_s * 1000.0,
            "command": record.command,
        })
        session = self.engine.session
        self._send("session_summary", {
            "accuracy": session.accuracy,
            "itr_bpm": session.itr_bpm,
            "confusion": session.confusion().to_lists(),
        })
        self.push_scene()


def build_app(engine_factory) -> FastAPI:
    app = FastAPI(title="ssvepnav operator console")
    busy = asyncio.Lock()

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        if busy.locked():
            await websocket.close(code=1013)  # one operator at a time
            return
        async with busy:
            await websocket.accept()
            proto = ConsoleProtocol(engine_factory=engine_factory)
            proto.push_scene()
            try:
                while True:
                    for out in proto.outbox:
                        await websocket.send_text(json.dumps(out))
                    proto.outbox.clear()
                    raw = await websocket.receive_text()
                    proto.handle_raw(raw)
            except WebSocketDisconnect:
                pass

    return app


def serve_console(bind_address: str, port: int, engine_factory) -> None:
    """Blocking service entry point."""
    import uvicorn

    uvicorn.run(build_app(engine_factory), host=bind_address, port=port,
                log_level="warning")
