"""Linear-interpolant probability path, losses, PF-ODE solver and few-step sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .container import read_container, write_container


@dataclass
class FewStepSchedule:
    """Ordered timestep set for few-step distillation/sampling plus the CD step gap."""
    timesteps: tuple = (1.0, 0.75, 0.5, 0.25)
    delta_t: float = 1.0 / 50.0

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timesteps)
        if any(not (0.0 < t <= 1.0) for t in ts):
            raise ValueError("schedule timesteps must lie in (0, 1]")
        if list(ts) != sorted(ts, reverse=True) or len(set(ts)) != len(ts):
            raise ValueError("schedule timesteps must be strictly descending")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if min(ts) - self.delta_t < 0:
            raise ValueError("t - delta_t must stay non-negative for all t in the schedule")
        self.timesteps = ts

    def __len__(self):
        return len(self.timesteps)


def forward_process(x0: torch.Tensor, eps: torch.Tensor, t: float | torch.Tensor) -> torch.Tensor:
    """x_t = (1 - t) * x0 + t * eps."""
    t = torch.as_tensor(t, dtype=x0.dtype)
    if (t < 0).any() or (t > 1).any():
        raise ValueError("t must lie in [0, 1]")
    if x0.shape != eps.shape:
        raise ValueError("x0 and eps must have equal shapes")
    while t.dim() < x0.dim():
        t = t[..., None]
    return (1.0 - t) * x0 + t * eps


def velocity_target(x0: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    return eps - x0


def x0_from_velocity(x_t: torch.Tensor, v: torch.Tensor, t: float | torch.Tensor) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=x_t.dtype)
    while t.dim() < x_t.dim():
        t = t[..., None]
    return x_t - t * v


def velocity_from_x0(x_t: torch.Tensor, x0: torch.Tensor, t: float | torch.Tensor) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=x_t.dtype)
    while t.dim() < x_t.dim():
        t = t[..., None]
    return (x_t - x0) / t


def score_from_velocity(x_t: torch.Tensor, v: torch.Tensor, t: float) -> torch.Tensor:
    """Marginal score of the linear path: s(x,t) = -(x + (1-t) v) / t."""
    return -(x_t + (1.0 - t) * v) / t


def ode_step(x_t: torch.Tensor, v: torch.Tensor, t: float, t_next: float) -> torch.Tensor:
    """Euler step x_{t'} = x_t + (t' - t) v, integrating toward t' < t."""
    if t_next >= t:
        raise ValueError("ode_step requires t_next < t")
    return x_t + (t_next - t) * v


@dataclass
class OdeTrajectory:
    states: list            # [(t, x)] descending from t=1 to t=0
    cameras: list = None
    scene_id: int = 0
    prefix_ref: str = ""    # provenance of the clean conditioning prefix

    def state_at(self, t: float):
        for ts, x in self.states:
            if abs(ts - t) < 1e-9:
                return x
        raise KeyError(f"no recorded state at t={t}")


def solve_pf_ode(velocity_fn, noise: torch.Tensor, n_steps: int,
                 record_at: FewStepSchedule | None = None) -> OdeTrajectory:
    """Euler-integrate the PF-ODE from t=1 to t=0 on a uniform grid.

    Records the state at the grid point nearest each schedule timestep plus
    both endpoints; recorded states are bitwise solver states.
    """
    sched = record_at.timesteps if record_at is not None else ()
    if n_steps < max(1, len(sched)):
        raise ValueError("n_steps must be at least the schedule length")
    grid = np.linspace(1.0, 0.0, n_steps + 1)
    record_idx = {int(np.argmin(np.abs(grid - t))) for t in sched}
    record_idx |= {0, n_steps}
    x = noise
    states = []
    for i, t in enumerate(grid[:-1]):
        if i in record_idx:
            states.append((float(t), x.clone()))
        v = velocity_fn(x, float(t))
        x = ode_step(x, v, float(t), float(grid[i + 1]))
    states.append((0.0, x.clone()))
    return OdeTrajectory(states=states)


def few_step_sample(predict_x0_fn, noise: torch.Tensor, schedule: FewStepSchedule,
                    generator: torch.Generator | None = None) -> torch.Tensor:
    """Alternate predict-x0 / re-noise over the schedule; returns the t=0 sample.

    Re-noising draws fresh noise from `generator`, so the sampler is a pure
    function of (starting noise, generator state).
    """
    ts = schedule.timesteps
    x = noise
    x0_hat = None
    for i, t in enumerate(ts):
        x0_hat = predict_x0_fn(x, t)
        if i + 1 < len(ts):
            eps = torch.randn(x.shape, generator=generator, dtype=x.dtype)
            x = forward_process(x0_hat, eps, ts[i + 1])
    return x0_hat


def denoising_loss(model, batch: dict, mask_spec: str = "bidirectional",
                   t: torch.Tensor | None = None, noise: torch.Tensor | None = None,
                   generator: torch.Generator | None = None) -> torch.Tensor:
    """Velocity-matching MSE over the noisy chunks of one clip.

    `batch` carries frames [N, H, W, 3], cameras (one per frame) and scene_id.
    With mask_spec == "teacher_forcing" the clean copy is prepended at t=0 and
    only the noisy half contributes to the loss; in bidirectional mode every
    chunk is noisy.
    """
    frames = batch["frames"]
    cameras = batch["cameras"]
    scene_id = batch["scene_id"]
    chunk_len = model.cfg.chunk_len
    n_frames = frames.shape[0]
    n_chunks = n_frames // chunk_len
    if t is None:
        t = torch.rand(n_chunks, generator=generator).clamp_min(1e-3)
    if noise is None:
        noise = torch.randn(frames.shape, generator=generator)
    t_per_frame = t.repeat_interleave(chunk_len).reshape(-1, 1, 1, 1)
    x_t = forward_process(frames, noise, t_per_frame)
    target = velocity_target(frames, noise)
    if mask_spec == "teacher_forcing":
        full = torch.cat([frames, x_t])
        full_t = torch.cat([torch.zeros_like(t), t])
        full_cams = list(cameras) + list(cameras)
        pred = model(full, full_t, full_cams, scene_id, mask_mode="teacher_forcing")
        pred = pred[n_frames:]
    elif mask_spec == "bidirectional":
        pred = model(x_t, t, cameras, scene_id, mask_mode="bidirectional")
    else:
        raise ValueError(f"unknown mask_spec {mask_spec!r}")
    return ((pred - target) ** 2).mean()


def save_trajectory(path, traj: OdeTrajectory, meta: dict | None = None) -> None:
    arrays = {"ts": np.array([t for t, _ in traj.states], dtype=np.float32)}
    for i, (_, x) in enumerate(traj.states):
        arrays[f"state_{i:03d}"] = x.detach().numpy()
    m = {"scene_id": str(traj.scene_id), "prefix_ref": traj.prefix_ref}
    m.update(meta or {})
    write_container(path, arrays, meta=m)


def load_trajectory(path) -> tuple[OdeTrajectory, dict]:
    arrays, meta = read_container(path)
    ts = arrays.pop("ts")
    states = [(float(t), torch.from_numpy(arrays[f"state_{i:03d}"].copy()))
              for i, t in enumerate(ts)]
    return OdeTrajectory(states=states, scene_id=int(meta.get("scene_id", "0")),
                         prefix_ref=meta.get("prefix_ref", "")), meta
