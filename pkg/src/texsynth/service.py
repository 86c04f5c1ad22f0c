"""Live streaming synthesis service.

A deterministic per-client engine (:class:`SessionCore`) is wrapped by a
FastAPI app exposing a websocket wire protocol plus small HTTP endpoints.
Every 10 ms tick the engine turns the latest 1 ms of (resampled, filtered)
client action into one predicted spectrum and one 100-sample audio block.

Wire protocol (JSON text frames unless noted):
  client -> server: {"t": "action", "force": f, "speed": f, "ts": int}
                    {"t": "select", "material": str}
                    {"t": "tick"}            (manual tick mode only)
  server -> client: {"t": "materials", "materials": [str, ...]}
                    {"t": "spectrum", "bins": [101 floats], "tick": int}
                    {"t": "error", "message": str}
                    binary audio: 8-byte LE uint64 tick, then 100 float32 LE
                    samples at 10 kHz.
"""

from __future__ import annotations

import asyncio
import json
import struct
import time
from collections import deque

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import dsp
from .dataset import ACTION_LEN, ActionWindow
from .errors import DomainError, TexsynthError, UnknownMaterialError
from .neural import ModelParams, forward
from .reconstruct import init_stitch_state, stitch_streaming
from .texture_repr import TextureCode, encode_texture

TICK_SECONDS = 0.01
BLOCK = 100
# enough history for the half-kernel of the zero-phase low-pass plus the
# 1 ms action window; the future half is right-edge replicated
RING_LEN = (dsp.LOWPASS_TAPS - 1) // 2 + ACTION_LEN

AUDIO_HEADER = struct.Struct("<Q")


def encode_audio(tick: int, block: np.ndarray) -> bytes:
    return AUDIO_HEADER.pack(tick) + block.astype("<f4").tobytes()


def decode_audio(payload: bytes) -> tuple[int, np.ndarray]:
    tick = AUDIO_HEADER.unpack_from(payload)[0]
    samples = np.frombuffer(payload, dtype="<f4", offset=AUDIO_HEADER.size)
    return tick, samples.astype(np.float64)


class SessionCore:
    """Single client's synthesis state; every method is deterministic.

    Incoming actions are zero-order-held at tick granularity: each tick
    extends the 10 kHz force/speed rings with the most recently accepted
    action, applies the same 20 Hz low-pass used at training time (future
    side edge-replicated to stay causal), and feeds the last 1 ms to the
    model.
    """

    def __init__(self, model: ModelParams, seed: int = 0,
                 material_id: str | None = None):
        self.model = model
        self.code: TextureCode | None = None
        self.material_id: str | None = None
        self.seed = seed
        self.stitch = init_stitch_state(seed=seed)
        self.kernel = dsp.lowpass_kernel()
        self.ring_force = np.zeros(RING_LEN)
        self.ring_speed = np.zeros(RING_LEN)
        self.latest_force = 0.0
        self.latest_speed = 0.0
        self.tick_index = 0
        if material_id is None and model.mode == "embedding" and model.material_ids:
            material_id = model.material_ids[0]
        if material_id is not None:
            self.select(material_id)

    def select(self, material_id: str) -> None:
        if self.model.mode == "descriptor":
            # descriptor codes come from images, not ids; the live service
            # needs a per-material lookup, i.e. an embedding-mode model
            raise DomainError("live sessions need an embedding-mode or "
                              "action-only model")
        if self.model.mode == "action_only":
            if self.model.material_ids and material_id not in self.model.material_ids:
                raise UnknownMaterialError(f"unknown material {material_id!r}")
            self.code = None
        else:
            self.code = encode_texture(material_id, self.model.mode, self.model)
        self.material_id = material_id

    def push_action(self, force: float, speed: float) -> None:
        if not (np.isfinite(force) and np.isfinite(speed)):
            raise TexsynthError("force and speed must be finite")
        if force < 0.0 or speed < 0.0:
            raise TexsynthError("force and speed must be non-negative")
        self.latest_force = float(force)
        self.latest_speed = float(speed)

    def handle_message(self, msg) -> dict | None:
        """Apply one client message; returns an error dict or None."""
        try:
            if not isinstance(msg, dict):
                raise TexsynthError("message must be a JSON object")
            kind = msg.get("t")
            if kind == "action":
                self.push_action(float(msg["force"]), float(msg["speed"]))
                int(msg.get("ts", 0))
                return None
            if kind == "select":
                self.select(str(msg["material"]))
                return None
            raise TexsynthError(f"unknown message type {kind!r}")
        except (TexsynthError, KeyError, TypeError, ValueError) as exc:
            return {"t": "error", "message": str(exc)}

    def _filtered_window(self, ring: np.ndarray) -> np.ndarray:
        ext = np.concatenate([ring, np.full((self.kernel.shape[0] - 1) // 2,
                                            ring[-1])])
        # sensors are non-negative; clamp filter undershoot
        return np.maximum(np.convolve(ext, self.kernel, mode="valid"), 0.0)

    def tick(self) -> tuple[dict, bytes]:
        """Advance one 10 ms step: returns (spectrum message, audio bytes)."""
        hold_f = np.full(BLOCK, self.latest_force)
        hold_s = np.full(BLOCK, self.latest_speed)
        self.ring_force = np.concatenate([self.ring_force[BLOCK:], hold_f])
        self.ring_speed = np.concatenate([self.ring_speed[BLOCK:], hold_s])
        action = ActionWindow(self._filtered_window(self.ring_force),
                              self._filtered_window(self.ring_speed))
        frame = forward(action, self.code, self.model)
        block, self.stitch = stitch_streaming(frame, self.stitch)
        tick = self.tick_index
        self.tick_index += 1
        spectrum = {"t": "spectrum", "bins": [float(v) for v in frame.mags],
                    "tick": tick}
        return spectrum, encode_audio(tick, block)


class SessionQueue:
    """Bounded outgoing queue: over the limit, the oldest audio payload is
    dropped first; spectrum and error messages are never dropped."""

    def __init__(self, limit: int):
        self.limit = max(1, limit)
        self.items: deque = deque()
        self.dropped_audio = 0
        self._ready = asyncio.Event()

    def push(self, kind: str, payload) -> None:
        if len(self.items) >= self.limit:
            for i, (k, _) in enumerate(self.items):
                if k == "audio":
                    del self.items[i]
                    self.dropped_audio += 1
                    break
        self.items.append((kind, payload))
        self._ready.set()

    async def pop(self):
        while not self.items:
            self._ready.clear()
            await self._ready.wait()
        return self.items.popleft()


def build_app(model: ModelParams, settings: dict | None = None):
    """FastAPI app serving the wire protocol, material list and health."""
    from .config import DEFAULTS

    cfg = dict(DEFAULTS)
    if settings:
        cfg.update(settings)
    if model.mode == "descriptor":
        raise DomainError("the service needs an embedding-mode or "
                          "action-only model")
    app = FastAPI()
    app.state.model = model
    app.state.config = cfg
    app.state.tick_lateness = []
    app.state.dropped_audio = 0

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "mode": model.mode}

    @app.get("/materials")
    def materials():
        return {"materials": list(model.material_ids)}

    async def _run_session(ws, seed: int, material: str | None):
        core = SessionCore(model, seed=seed, material_id=material)
        queue = SessionQueue(int(cfg["service.queue_limit"]))
        manual = cfg["service.tick_mode"] == "manual"

        def do_tick(scheduled: float | None = None):
            spectrum, audio = core.tick()
            if scheduled is not None:
                app.state.tick_lateness.append(time.monotonic() - scheduled)
            queue.push("spectrum", spectrum)
            queue.push("audio", audio)

        async def ticker():
            start = time.monotonic()
            n = 1
            while True:
                target = start + n * TICK_SECONDS
                delay = target - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                do_tick(scheduled=target)
                n += 1

        async def sender():
            while True:
                kind, payload = await queue.pop()
                if kind == "audio":
                    await ws.send_bytes(payload)
                else:
                    await ws.send_json(payload)

        queue.push("spectrum", {"t": "materials",
                                "materials": list(model.material_ids),
                                "active": core.material_id or ""})
        tasks = [asyncio.create_task(sender())]
        if not manual:
            tasks.append(asyncio.create_task(ticker()))
        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                raw = message.get("text")
                if raw is None:
                    queue.push("error", {"t": "error",
                                         "message": "binary frames not accepted"})
                    continue
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    queue.push("error", {"t": "error", "message": "invalid JSON"})
                    continue
                if manual and isinstance(msg, dict) and msg.get("t") == "tick":
                    do_tick()
                    continue
                err = core.handle_message(msg)
                if err is not None:
                    queue.push("error", err)
        finally:
            app.state.dropped_audio += queue.dropped_audio
            for task in tasks:
                task.cancel()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        params = ws.query_params
        try:
            seed = int(params.get("seed", "0"))
        except ValueError:
            seed = 0
        material = params.get("material")
        try:
            await _run_session(ws, seed, material)
        except WebSocketDisconnect:
            pass
        except UnknownMaterialError as exc:
            await ws.send_json({"t": "error", "message": str(exc)})
            await ws.close()

    static_dir = cfg.get("service.static_dir")
    if static_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def run_service(model: ModelParams, settings: dict | None = None) -> None:
    """Blocking entry point used by the CLI."""
    import uvicorn

    app = build_app(model, settings)
    cfg = app.state.config
    uvicorn.run(app, host=str(cfg["service.host"]), port=int(cfg["service.port"]),
                log_level="warning")
