"""Streaming session service: live camera actions in, generated chunks out.

Wire protocol (newline-free JSON per websocket message):
  client -> server: {"type": "start", "scene_id": int, "seed": int}
                    {"type": "action", "kind": str, "magnitude": float}
  server -> client: {"type": "chunk", "index": int, "width": int, "height": int,
                     "frames": [base64 RGB8 per frame],
                     "pose_echo": [[16 floats] per frame], "latency_ms": float}
                    {"type": "error", "message": str}

Actions latch: if none is queued at a chunk boundary the previous one repeats
(hold-to-continue). The default action is "static".
"""

from __future__ import annotations

import asyncio
import base64
import json
import math
import time

import numpy as np
import torch

from .camera import Camera, so3_exp
from .distill import load_stage_checkpoint
from .flow import FewStepSchedule
from .rollout import RolloutSession
from .scenes import generate_scene, render_trajectory, sample_trajectory

ACTIONS = ("forward", "back", "left", "right", "pan_left", "pan_right",
           "tilt_up", "tilt_down", "static")


def apply_action(cam: Camera, kind: str, magnitude: float) -> Camera:
    """One per-frame SE(3) step of the camera along/about its own axes."""
    if kind not in ACTIONS:
        raise ValueError(f"unknown action {kind!r}")
    R = cam.T_cw[:3, :3]
    t = cam.T_cw[:3, 3]
    center = -R.T @ t
    fwd, right, down = R[2], R[0], R[1]
    if kind == "static":
        pass
    elif kind == "forward":
        center = center + magnitude * fwd
    elif kind == "back":
        center = center - magnitude * fwd
    elif kind == "right":
        center = center + magnitude * right
    elif kind == "left":
        center = center - magnitude * right
    else:
        angle = math.radians(magnitude)
        axis = {"pan_left": -down, "pan_right": down,
                "tilt_up": -right, "tilt_down": right}[kind]
        R = R @ so3_exp(axis * angle)
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = -R @ center
    return Camera(K=cam.K.copy(), T_cw=T)


def initial_camera(scene_seed: int) -> Camera:
    """Starting pose: first frame of the scene's orbit trajectory."""
    scene = generate_scene(scene_seed)
    return sample_trajectory("orbit", 4, scene_seed, scene).cameras[0]


def chunk_cameras(cam: Camera, kind: str, magnitude: float, n: int):
    """Advance the camera n frames under one latched action; returns
    (per-frame cameras, final camera)."""
    cams = []
    for _ in range(n):
        cam = apply_action(cam, kind, magnitude)
        cams.append(cam)
    return cams, cam


def encode_chunk_message(index: int, frames: torch.Tensor, cams,
                         latency_ms: float) -> str:
    rgb8 = (frames.clamp(0, 1) * 255).round().to(torch.uint8).numpy()
    return json.dumps({
        "type": "chunk",
        "index": index,
        "width": int(frames.shape[2]),
        "height": int(frames.shape[1]),
        "frames": [base64.b64encode(f.tobytes()).decode("ascii") for f in rgb8],
        "pose_echo": [c.T_cw.reshape(-1).tolist() for c in cams],
        "latency_ms": latency_ms,
    })


def decode_chunk_frames(msg: dict) -> np.ndarray:
    """Inverse of encode_chunk_message's frame packing (used by test clients)."""
    h, w = msg["height"], msg["width"]
    return np.stack([
        np.frombuffer(base64.b64decode(f), dtype=np.uint8).reshape(h, w, 3)
        for f in msg["frames"]])


class SessionState:
    def __init__(self, model, scene_id: int, seed: int, schedule, scene_seed: int):
        self.rollout = RolloutSession(model, scene_id, schedule=schedule, seed=seed)
        self.action = ("static", 0.0)
        self.queue: asyncio.Queue = asyncio.Queue()
        # observed context chunk: renders along the scene's own trajectory.
        # It anchors the world frame (the model only sees relative cameras)
        # and is streamed to the client as chunk 0.
        scene = generate_scene(scene_seed)
        L = model.cfg.chunk_len
        traj = sample_trajectory("orbit", L, scene_seed, scene)
        frames = render_trajectory(scene, traj, model.cfg.height, model.cfg.width)
        self.context_cams = traj.cameras
        self.context_frames = torch.from_numpy(frames)
        self.camera = traj.cameras[-1]
        self.rollout.prime(self.context_frames, self.context_cams)

    def next_action(self):
        # drain to the most recent queued action; otherwise latch the last one
        while not self.queue.empty():
            self.action = self.queue.get_nowait()
        return self.action


async def _handle(ws, model, schedule, scene_seed_base: int, sessions: set,
                  max_sessions: int):
    if len(sessions) >= max_sessions:
        await ws.send(json.dumps({"type": "error", "message": "session limit reached"}))
        return
    token = object()
    sessions.add(token)
    state: SessionState | None = None
    stream_task = None

    async def stream():
        await ws.send(encode_chunk_message(0, state.context_frames,
                                           state.context_cams, 0.0))
        index = 1
        while True:
            kind, mag = state.next_action()
            cams, state.camera = chunk_cameras(state.camera, kind, mag,
                                               model.cfg.chunk_len)
            t0 = time.perf_counter()
            chunk = await asyncio.to_thread(state.rollout.step_chunk, cams)
            ms = (time.perf_counter() - t0) * 1e3
            await ws.send(encode_chunk_message(index, chunk, cams, ms))
            index += 1

    try:
        async for raw in ws:
            try:
                msg = json.loads(raw)
                mtype = msg.get("type")
                if mtype == "start":
                    if state is not None:
                        raise ValueError("session already started")
                    sid = int(msg["scene_id"])
                    if not 0 <= sid < model.cfg.n_scenes:
                        raise ValueError(f"scene_id out of range: {sid}")
                    state = SessionState(model, sid, int(msg.get("seed", 0)),
                                         schedule, scene_seed_base + sid)
                    stream_task = asyncio.create_task(stream())
                elif mtype == "action":
                    if state is None:
                        raise ValueError("send start first")
                    kind = msg.get("kind")
                    if kind not in ACTIONS:
                        raise ValueError(f"unknown action kind {kind!r}")
                    await state.queue.put((kind, float(msg.get("magnitude", 0.1))))
                else:
                    raise ValueError(f"unknown message type {mtype!r}")
            except (ValueError, KeyError, TypeError) as exc:
                await ws.send(json.dumps({"type": "error", "message": str(exc)}))
    finally:
        if stream_task is not None:
            stream_task.cancel()
        sessions.discard(token)


async def serve(addr: str, ckpt_path: str, chunk_steps: int = 4,
                max_sessions: int = 4, scene_seed_base: int = 0,
                ready_event: asyncio.Event | None = None):
    """Run the websocket endpoint until cancelled."""
    import websockets
    model, meta, _ = load_stage_checkpoint(ckpt_path)
    model.eval()
    if chunk_steps == 4:
        schedule = FewStepSchedule()
    else:
        ts = tuple(np.linspace(1.0, 1.0 / chunk_steps, chunk_steps).tolist())
        schedule = FewStepSchedule(ts)
    host, port = addr.rsplit(":", 1)
    sessions: set = set()

    async def handler(ws):
        await _handle(ws, model, schedule, scene_seed_base, sessions, max_sessions)

    async with websockets.serve(handler, host, int(port)):
        if ready_event is not None:
            ready_event.set()
        await asyncio.Future()
