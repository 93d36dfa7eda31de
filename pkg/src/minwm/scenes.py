"""Procedural scenes, camera trajectories, pose-noise injection and dataset shards."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .camera import Camera, cameras_from_json, cameras_to_json, se3_compose, so3_exp
from .container import read_container, write_container

TRAJECTORY_KINDS = ("static", "orbit", "dolly", "truck", "pan")


@dataclass
class Primitive:
    shape: str          # "sphere" | "box"
    center: tuple
    size: float         # radius / half-extent
    color: tuple


@dataclass
class SceneSpec:
    seed: int
    primitives: list[Primitive]
    ground_cell: float = 1.0
    ground_colors: tuple = ((0.85, 0.85, 0.85), (0.25, 0.25, 0.3))
    background: tuple = (0.55, 0.7, 0.9)


@dataclass
class Trajectory:
    cameras: list[Camera]
    kind: str

    def __len__(self):
        return len(self.cameras)


@dataclass
class DatasetShard:
    frames: np.ndarray          # [N, H, W, 3] float32 in [0, 1]
    trajectory: Trajectory
    scene_id: int
    pose_sigma: tuple = (0.0, 0.0)


def generate_scene(seed: int) -> SceneSpec:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    prims = []
    for _ in range(n):
        shape = "sphere" if rng.random() < 0.5 else "box"
        size = float(rng.uniform(0.35, 0.9))
        center = (float(rng.uniform(-1.8, 1.8)), size + float(rng.uniform(0.0, 0.8)),
                  float(rng.uniform(-1.8, 1.8)))
        color = tuple(float(c) for c in rng.uniform(0.15, 1.0, size=3))
        prims.append(Primitive(shape, center, size, color))
    g1 = tuple(float(c) for c in rng.uniform(0.6, 1.0, size=3))
    g2 = tuple(float(c) for c in rng.uniform(0.05, 0.4, size=3))
    bg = tuple(float(c) for c in rng.uniform(0.3, 0.9, size=3))
    return SceneSpec(seed=seed, primitives=prims, ground_colors=(g1, g2), background=bg)


def _scene_arrays(scene: SceneSpec):
    spheres = [p.center + (p.size,) + p.color for p in scene.primitives if p.shape == "sphere"]
    boxes = [p.center + (p.size,) + p.color for p in scene.primitives if p.shape == "box"]
    plane = (scene.ground_cell,) + scene.ground_colors[0] + scene.ground_colors[1]
    return (np.array(spheres, dtype=np.float64).reshape(-1, 7),
            np.array(boxes, dtype=np.float64).reshape(-1, 7),
            np.array(plane, dtype=np.float64),
            np.array(scene.background, dtype=np.float64))


def camera_center(cam: Camera) -> np.ndarray:
    R, t = cam.T_cw[:3, :3], cam.T_cw[:3, 3]
    return -R.T @ t


def _inside_primitive(scene: SceneSpec, point: np.ndarray) -> bool:
    for p in scene.primitives:
        delta = point - np.asarray(p.center)
        if p.shape == "sphere" and np.linalg.norm(delta) < p.size:
            return True
        if p.shape == "box" and np.abs(delta).max() < p.size:
            return True
    return False


def render(scene: SceneSpec, cam: Camera, H: int, W: int) -> np.ndarray:
    """Pinhole ray-cast render, float32 [H, W, 3] in [0, 1]."""
    if H < 8 or W < 8:
        raise ValueError("resolution must be at least 8x8")
    origin = camera_center(cam)
    if _inside_primitive(scene, origin):
        raise ValueError("camera center lies inside a primitive")
    jj, ii = np.meshgrid(np.arange(W), np.arange(H))
    u = 2.0 * (jj + 0.5) / W - 1.0          # normalized image coords
    v = 2.0 * (ii + 0.5) / H - 1.0
    Kinv = np.linalg.inv(cam.K)
    pix = np.stack([u, v, np.ones_like(u)], axis=-1)
    dirs_cam = pix @ Kinv.T
    dirs = dirs_cam @ cam.T_cw[:3, :3]       # R^T applied from the right
    spheres, boxes, plane, bg = _scene_arrays(scene)
    img = raster.render_rays(origin, dirs, spheres, boxes, plane, bg)
    return np.clip(img, 0.0, 1.0)


def project_point(cam: Camera, point) -> tuple[float, float]:
    """Analytic pinhole projection to normalized image coordinates."""
    p = cam.T_cw @ np.append(np.asarray(point, dtype=np.float64), 1.0)
    q = cam.K @ p[:3]
    return q[0] / q[2], q[1] / q[2]


def sample_trajectory(kind: str, length: int, seed: int, scene: SceneSpec,
                      sweep: float | None = None) -> Trajectory:
    """Smooth collision-free camera path of one of the supported kinds."""
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    if length < 1:
        raise ValueError("trajectory length must be >= 1")
    rng = np.random.default_rng(seed)
    radius = float(rng.uniform(4.0, 5.5))
    height = float(rng.uniform(1.2, 2.5))
    phi0 = float(rng.uniform(0.0, 2 * math.pi))
    target = np.array([0.0, 0.8, 0.0])
    eye0 = np.array([radius * math.cos(phi0), height, radius * math.sin(phi0)])

    cams = []
    if kind == "static":
        cam = Camera.look_at(eye0, target)
        cams = [cam] * length
    elif kind == "orbit":
        if sweep is None:
            sweep = min(2 * math.pi, length * math.radians(6.0))
        for a in np.linspace(0.0, sweep, length):
            eye = np.array([radius * math.cos(phi0 + a), height,
                            radius * math.sin(phi0 + a)])
            cams.append(Camera.look_at(eye, target))
    elif kind == "dolly":
        step = float(rng.uniform(0.05, 0.12))
        fwd = (target - eye0) / np.linalg.norm(target - eye0)
        for i in range(length):
            cams.append(Camera.look_at(eye0 + i * step * fwd, target))
    elif kind == "truck":
        step = float(rng.uniform(0.05, 0.12))
        fwd = (target - eye0) / np.linalg.norm(target - eye0)
        right = np.cross(fwd, [0.0, 1.0, 0.0])
        right /= np.linalg.norm(right)
        for i in range(length):
            eye = eye0 + (i - length / 2) * step * right
            cams.append(Camera.look_at(eye, eye + fwd * 5.0))
    elif kind == "pan":
        yaw_step = math.radians(float(rng.uniform(1.5, 5.0)))
        fwd0 = (target - eye0) / np.linalg.norm(target - eye0)
        for i in range(length):
            R = so3_exp(np.array([0.0, 1.0, 0.0]) * (i * yaw_step))
            cams.append(Camera.look_at(eye0, eye0 + R @ fwd0))
    for cam in cams:
        if _inside_primitive(scene, camera_center(cam)):
            raise ValueError("trajectory collides with scene geometry")
    return Trajectory(cameras=cams, kind=kind)


def perturb_poses(traj: Trajectory, sigma_rot_deg: float, sigma_trans: float,
                  seed: int) -> Trajectory:
    """Compose each pose with an independent rigid perturbation of fixed scale."""
    if sigma_rot_deg < 0 or sigma_trans < 0:
        raise ValueError("perturbation scales must be non-negative")
    if sigma_rot_deg == 0 and sigma_trans == 0:
        return Trajectory(cameras=list(traj.cameras), kind=traj.kind)
    rng = np.random.default_rng(seed)
    out = []
    for cam in traj.cameras:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        delta = np.eye(4)
        delta[:3, :3] = so3_exp(axis * math.radians(sigma_rot_deg))
        delta[:3, 3] = direction * sigma_trans
        out.append(Camera(cam.K.copy(), se3_compose(delta, cam.T_cw)))
    return Trajectory(cameras=out, kind=traj.kind)


@dataclass
class DataConfig:
    n_scenes: int = 64
    frames_per_clip: int = 20
    height: int = 32
    width: int = 32
    trajectory_kinds: tuple = ("orbit", "dolly", "truck", "pan")
    clips_per_scene: int = 1
    pose_sigma_rot_deg: float = 0.0
    pose_sigma_trans: float = 0.0
    seed: int = 0


def render_trajectory(scene: SceneSpec, traj: Trajectory, H: int, W: int) -> np.ndarray:
    return np.stack([render(scene, cam, H, W) for cam in traj.cameras])


def _sample_trajectory_retry(kind: str, length: int, seed: int,
                             scene: SceneSpec) -> Trajectory:
    """Resample the trajectory seed until the path clears the scene geometry."""
    while True:
        try:
            return sample_trajectory(kind, length, seed, scene)
        except ValueError:
            seed += 7777


def build_dataset(cfg: DataConfig, out_dir: str) -> list[str]:
    """Render shards along clean trajectories; labels optionally carry pose noise.

    Each scene yields `clips_per_scene` clips cycling through the trajectory
    kinds (clip c of scene s uses kind (s + c) mod len(kinds)), so multi-clip
    configs cover every motion kind per scene rather than one path per scene.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for scene_id in range(cfg.n_scenes):
        scene = generate_scene(cfg.seed * 100003 + scene_id)
        for clip in range(max(1, cfg.clips_per_scene)):
            kind = cfg.trajectory_kinds[(scene_id + clip) % len(cfg.trajectory_kinds)]
            traj = _sample_trajectory_retry(
                kind, cfg.frames_per_clip,
                seed=cfg.seed * 7919 + scene_id + clip * 1000003, scene=scene)
            frames = render_trajectory(scene, traj, cfg.height, cfg.width)
            labels = perturb_poses(traj, cfg.pose_sigma_rot_deg, cfg.pose_sigma_trans,
                                   seed=cfg.seed * 104729 + scene_id * 31 + clip)
            name = (f"shard_{scene_id:04d}.mwm" if cfg.clips_per_scene <= 1
                    else f"shard_{scene_id:04d}_{clip:02d}.mwm")
            path = os.path.join(out_dir, name)
            shard = DatasetShard(frames=frames, trajectory=labels, scene_id=scene_id,
                                 pose_sigma=(cfg.pose_sigma_rot_deg,
                                             cfg.pose_sigma_trans))
            save_shard(path, shard)
            paths.append(path)
    return paths


def save_shard(path: str, shard: DatasetShard) -> None:
    write_container(path, {"frames": shard.frames})
    with open(path + ".cameras.json", "w") as f:
        f.write(cameras_to_json(shard.trajectory.cameras))
    with open(path + ".meta.json", "w") as f:
        json.dump({"scene_id": shard.scene_id, "kind": shard.trajectory.kind,
                   "sigma_rot_deg": shard.pose_sigma[0],
                   "sigma_trans": shard.pose_sigma[1]}, f)


def load_shard(path: str) -> DatasetShard:
    arrays, _ = read_container(path)
    with open(path + ".cameras.json") as f:
        cams = cameras_from_json(f.read())
    with open(path + ".meta.json") as f:
        meta = json.load(f)
    traj = Trajectory(cameras=cams, kind=meta["kind"])
    return DatasetShard(frames=arrays["frames"], trajectory=traj,
                        scene_id=meta["scene_id"],
                        pose_sigma=(meta["sigma_rot_deg"], meta["sigma_trans"]))
