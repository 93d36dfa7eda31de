"""Training stages: bidirectional pretraining, teacher-forcing AR conversion,
causal ODE/consistency distillation, and asymmetric DMD post-training.

Also houses the 1-D Gaussian oracle versions of the distillation objectives,
which let the equivalence and gradient claims be checked against closed forms.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field, replace

import torch

from .autodiff import ParamSet, adam_step, load_checkpoint, save_checkpoint
from .backbone import ModelConfig, WorldModel
from .camera import Camera
from .flow import (FewStepSchedule, denoising_loss, forward_process, ode_step,
                   save_trajectory, score_from_velocity, solve_pf_ode,
                   velocity_target, x0_from_velocity)
from .gaussian import flow_map, score, velocity
from .rollout import rollout

STAGES = ("bidir", "ar_teacher", "ode_distill", "causal_cd", "dmd")
# checkpoint tag each stage writes (2a and 2b both produce the few-step init)
STAGE_TAGS = {"bidir": "bidir", "ar_teacher": "ar_teacher",
              "ode_distill": "fewstep_init", "causal_cd": "fewstep_init",
              "dmd": "dmd"}


@dataclass
class StageConfig:
    stage: str
    steps: int
    batch_size: int = 16
    lr: float = 1e-4
    ema_decay: float = 0.995
    schedule: FewStepSchedule = field(default_factory=FewStepSchedule)
    weight_fn: str = "const"        # w(t)
    distance: str = "l2"            # d(.,.)
    dmd_fake_updates_per_gen_update: int = 5
    ode_solver_steps: int = 50
    window_chunks: int = 0          # random chunk-window crop per sample; 0 = full clip
    log_every: int = 25

    def validate(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.steps < 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ValueError("steps must be >= 0, batch_size and lr positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")
        if self.weight_fn not in ("const", "snr"):
            raise ValueError(f"unknown weight_fn {self.weight_fn!r}")
        if self.distance not in ("l2", "pseudo_huber"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.dmd_fake_updates_per_gen_update <= 0:
            raise ValueError("dmd_fake_updates_per_gen_update must be positive")
        if self.window_chunks < 0:
            raise ValueError("window_chunks must be >= 0")
        return self


def _weight(t: float, kind: str) -> float:
    if kind == "const":
        return 1.0
    # signal-to-noise ratio of the linear path, clamped for stability
    return min(((1.0 - t) / max(t, 1e-3)) ** 2, 100.0)


def _distance(a: torch.Tensor, b: torch.Tensor, kind: str) -> torch.Tensor:
    if kind == "l2":
        return ((a - b) ** 2).mean()
    c = 0.01
    return (torch.sqrt((a - b) ** 2 + c * c) - c).mean()


@dataclass
class ScorePair:
    """Frozen s_real and online s_fake for asymmetric DMD."""
    real: WorldModel
    fake: WorldModel

    def __post_init__(self):
        for p in self.real.parameters():
            p.requires_grad_(False)
        self._real_ref = {k: v.detach().clone()
                          for k, v in self.real.state_dict().items()}

    def assert_real_frozen(self):
        for k, v in self.real.state_dict().items():
            if not torch.equal(v, self._real_ref[k]):
                raise AssertionError(f"s_real parameter {k} changed during stage 3")


class MetricsLog:
    """Append-only JSONL of (step, loss, grad_norm, wall_clock_s) rows."""

    def __init__(self, path=None):
        self.path = path
        self.rows = []
        self._t0 = time.perf_counter()
        if path:
            open(path, "w").close()

    def log(self, step: int, loss: float, grad_norm: float, **extra):
        row = {"step": step, "loss": loss, "grad_norm": grad_norm,
               "wall_clock_s": time.perf_counter() - self._t0}
        row.update(extra)
        self.rows.append(row)
        if self.path:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(row) + "\n")


def save_stage_checkpoint(path, model: WorldModel, stage: str,
                          ema_shadow=None, extra_meta=None):
    meta = {"model_cfg": model.cfg.to_json()}
    meta.update(extra_meta or {})
    save_checkpoint(path, model, stage, ema_shadow=ema_shadow, extra_meta=meta)


def load_stage_checkpoint(path, expect_stage: str | None = None):
    """Returns (model, meta, ema_shadow or None); validates the stage tag."""
    state, ema, meta = load_checkpoint(path)
    stage = meta.get("stage")
    if expect_stage is not None and stage != expect_stage:
        raise ValueError(f"checkpoint {path} is tagged {stage!r}, "
                         f"expected {expect_stage!r}")
    model = WorldModel(ModelConfig.from_json(meta["model_cfg"]))
    model.load_state_dict(state)
    return model, meta, ema


def _clip_batch(shard) -> dict:
    frames = torch.from_numpy(shard.frames.copy()) \
        if not torch.is_tensor(shard.frames) else shard.frames
    return {"frames": frames, "cameras": shard.trajectory.cameras,
            "scene_id": shard.scene_id}


def _window_batch(batch: dict, chunk_len: int, window_chunks: int,
                  gen: torch.Generator) -> dict:
    """Random contiguous chunk-window crop; cheaper steps, same objective."""
    n_chunks = batch["frames"].shape[0] // chunk_len
    if window_chunks <= 0 or window_chunks >= n_chunks:
        return batch
    start = int(torch.randint(n_chunks - window_chunks + 1, (1,),
                              generator=gen)) * chunk_len
    stop = start + window_chunks * chunk_len
    return {"frames": batch["frames"][start:stop],
            "cameras": batch["cameras"][start:stop],
            "scene_id": batch["scene_id"]}


def _grad_step(model: torch.nn.Module, loss: torch.Tensor, params: ParamSet,
               opt_state: dict, lr: float) -> float:
    model.zero_grad(set_to_none=True)
    loss.backward()
    grads = {k: p.grad for k, p in params.params.items() if p.grad is not None}
    norm = torch.sqrt(sum((g ** 2).sum() for g in grads.values())).item()
    adam_step(params, grads, opt_state, lr)
    return norm


def _train_denoiser(model: WorldModel, shards, cfg: StageConfig, mask_spec: str,
                    seed: int, log: MetricsLog | None):
    """Shared loop for the bidirectional and teacher-forcing stages."""
    cfg.validate()
    if not shards:
        raise ValueError("empty dataset")
    log = log or MetricsLog()
    gen = torch.Generator().manual_seed(seed)
    params = ParamSet.from_module(model)
    params.init_ema()
    opt_state: dict = {}
    for step in range(cfg.steps):
        idx = torch.randint(len(shards), (cfg.batch_size,), generator=gen)
        loss = sum(denoising_loss(model,
                                  _window_batch(_clip_batch(shards[i]),
                                                model.cfg.chunk_len,
                                                cfg.window_chunks, gen),
                                  mask_spec, generator=gen)
                   for i in idx) / cfg.batch_size
        norm = _grad_step(model, loss, params, opt_state, cfg.lr)
        params.ema_update(cfg.ema_decay)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            log.log(step, float(loss.detach()), norm)
    return model, params.ema_shadow


def train_bidirectional(shards, model_cfg: ModelConfig, cfg: StageConfig,
                        seed: int = 0, log: MetricsLog | None = None,
                        init_model: WorldModel | None = None):
    """Camera-conditioned velocity pretraining with full bidirectional attention."""
    model = init_model if init_model is not None else WorldModel(model_cfg)
    return _train_denoiser(model, shards, cfg, "bidirectional", seed, log)


def train_ar_teacher_forcing(bidir_ckpt_path, shards, cfg: StageConfig,
                             seed: int = 0, log: MetricsLog | None = None):
    """Stage 1: convert the bidirectional model to chunkwise-causal via the
    clean+noisy teacher-forcing layout; loss touches noisy chunks only."""
    model, _, _ = load_stage_checkpoint(bidir_ckpt_path, "bidir")
    return _train_denoiser(model, shards, cfg, "teacher_forcing", seed, log)


def _prefix_cache(model: WorldModel, frames: torch.Tensor, cameras, scene_id: int,
                  n_prefix_chunks: int):
    """KV cache holding the clean ground-truth chunks < i."""
    L = model.cfg.chunk_len
    cache = model.new_cache()
    for j in range(n_prefix_chunks):
        sl = slice(j * L, (j + 1) * L)
        model.commit_chunk(frames[sl], torch.zeros(1), cameras[sl], scene_id, cache)
    return cache


def collect_ode_pairs(ar_ckpt_path, shards, cfg: StageConfig, out_dir,
                      seed: int = 0) -> list:
    """Stage 2a data pass: solve each chunk's PF-ODE on the real-data clean
    prefix, recording the schedule states. One shard file per (clip, chunk)."""
    import os
    cfg.validate()
    model, _, _ = load_stage_checkpoint(ar_ckpt_path, "ar_teacher")
    model.eval()
    os.makedirs(out_dir, exist_ok=True)
    gen = torch.Generator().manual_seed(seed)
    L = model.cfg.chunk_len
    paths = []
    with torch.no_grad():
        for ci, shard in enumerate(shards):
            batch = _clip_batch(shard)
            frames, cams, sid = batch["frames"], batch["cameras"], batch["scene_id"]
            n_chunks = frames.shape[0] // L
            for i in range(n_chunks):
                cache = _prefix_cache(model, frames, cams, sid, i)
                chunk_cams = cams[i * L:(i + 1) * L]

                def vel(x, t):
                    return model.forward_with_cache(x, torch.tensor(float(t)),
                                                    chunk_cams, sid, cache)

                noise = torch.randn((L, model.cfg.height, model.cfg.width, 3),
                                    generator=gen)
                traj = solve_pf_ode(vel, noise, cfg.ode_solver_steps,
                                    record_at=cfg.schedule)
                traj.scene_id = sid
                traj.prefix_ref = f"clip{ci:04d}"
                path = os.path.join(out_dir, f"clip{ci:04d}_chunk{i}.mwm")
                save_trajectory(path, traj, meta={"clip_index": str(ci),
                                                  "chunk_index": str(i)})
                paths.append(path)
    return paths


def _student_predict_x0(model: WorldModel, x_t, t, chunk_cams, sid, cache):
    v = model.forward_with_cache(x_t, torch.tensor(float(t)), chunk_cams, sid, cache)
    return x0_from_velocity(x_t, v, t)


def train_ode_regression(ar_ckpt_path, shards, traj_paths, cfg: StageConfig,
                         seed: int = 0, log: MetricsLog | None = None):
    """Stage 2a: regress the student's x0 prediction at t in S onto the stored
    PF-ODE endpoint, conditioned on the clip's ground-truth prefix."""
    from .flow import load_trajectory
    cfg.validate()
    if not traj_paths:
        raise ValueError("no ODE trajectory shards given")
    model, _, _ = load_stage_checkpoint(ar_ckpt_path, "ar_teacher")
    log = log or MetricsLog()
    gen = torch.Generator().manual_seed(seed)
    params = ParamSet.from_module(model)
    params.init_ema()
    opt_state: dict = {}
    L = model.cfg.chunk_len
    trajs = []
    for p in traj_paths:
        traj, meta = load_trajectory(p)
        trajs.append((traj, int(meta["clip_index"]), int(meta["chunk_index"])))
    for step in range(cfg.steps):
        loss = 0.0
        for _ in range(cfg.batch_size):
            traj, ci, i = trajs[int(torch.randint(len(trajs), (1,), generator=gen))]
            # recorded states sit on the solver grid points nearest each
            # schedule timestep; those are the only t the student trains at
            noisy_states = [(ts, x) for ts, x in traj.states if ts > 0.0]
            t, x_t = noisy_states[int(torch.randint(len(noisy_states), (1,),
                                                    generator=gen))]
            batch = _clip_batch(shards[ci])
            frames, cams, sid = batch["frames"], batch["cameras"], batch["scene_id"]
            cache = _prefix_cache(model, frames, cams, sid, i)
            chunk_cams = cams[i * L:(i + 1) * L]
            x0 = traj.state_at(0.0)
            x0_hat = _student_predict_x0(model, x_t, t, chunk_cams, sid, cache)
            loss = loss + ((x0_hat - x0) ** 2).mean()
        loss = loss / cfg.batch_size
        norm = _grad_step(model, loss, params, opt_state, cfg.lr)
        params.ema_update(cfg.ema_decay)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            log.log(step, float(loss.detach()), norm)
    return model, params.ema_shadow


def train_causal_cd(ar_ckpt_path, shards, cfg: StageConfig, seed: int = 0,
                    log: MetricsLog | None = None):
    """Stage 2b: causal consistency distillation. Student at (x_t, t) chases the
    EMA target net at (x_hat_{t-dt}, t-dt) where x_hat comes from one teacher
    Euler step; below the smallest schedule point the target is anchored to the
    teacher's one-step denoise."""
    cfg.validate()
    if not shards:
        raise ValueError("empty dataset")
    model, _, _ = load_stage_checkpoint(ar_ckpt_path, "ar_teacher")
    teacher, _, _ = load_stage_checkpoint(ar_ckpt_path, "ar_teacher")
    teacher.eval()
    for p in teacher.parameters():
        p.requires_grad_(False)
    target_net, _, _ = load_stage_checkpoint(ar_ckpt_path, "ar_teacher")
    target_net.eval()
    for p in target_net.parameters():
        p.requires_grad_(False)
    log = log or MetricsLog()
    gen = torch.Generator().manual_seed(seed)
    params = ParamSet.from_module(model)
    params.init_ema()
    opt_state: dict = {}
    L = model.cfg.chunk_len
    dt = cfg.schedule.delta_t
    t_min = min(cfg.schedule.timesteps)
    for step in range(cfg.steps):
        loss = 0.0
        for _ in range(cfg.batch_size):
            shard = shards[int(torch.randint(len(shards), (1,), generator=gen))]
            batch = _clip_batch(shard)
            frames, cams, sid = batch["frames"], batch["cameras"], batch["scene_id"]
            n_chunks = frames.shape[0] // L
            i = int(torch.randint(n_chunks, (1,), generator=gen))
            # uniform t with t - dt >= 0; out-of-range draws are resampled
            t = float(torch.rand(1, generator=gen))
            while t - dt < 0 or t <= 0:
                t = float(torch.rand(1, generator=gen))
            cache = _prefix_cache(model, frames, cams, sid, i)
            chunk_cams = cams[i * L:(i + 1) * L]
            chunk = frames[i * L:(i + 1) * L]
            eps = torch.randn(chunk.shape, generator=gen)
            x_t = forward_process(chunk, eps, t)
            with torch.no_grad():
                v_teacher = teacher.forward_with_cache(
                    x_t, torch.tensor(t), chunk_cams, sid, cache)
                if t <= t_min:
                    # boundary anchor: one-step teacher denoise all the way down
                    tgt = x0_from_velocity(x_t, v_teacher, t)
                else:
                    x_prev = ode_step(x_t, v_teacher, t, t - dt)
                    tgt = _student_predict_x0(target_net, x_prev, t - dt,
                                              chunk_cams, sid, cache)
            pred = _student_predict_x0(model, x_t, t, chunk_cams, sid, cache)
            loss = loss + _weight(t, cfg.weight_fn) * _distance(pred, tgt, cfg.distance)
        loss = loss / cfg.batch_size
        norm = _grad_step(model, loss, params, opt_state, cfg.lr)
        params.ema_update(cfg.ema_decay)
        with torch.no_grad():
            for (k, p_t), p_s in zip(target_net.state_dict().items(),
                                     model.state_dict().values()):
                p_t.mul_(cfg.ema_decay).add_(p_s, alpha=1.0 - cfg.ema_decay)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            log.log(step, float(loss.detach()), norm)
    return model, params.ema_shadow


def conditioning_only(shards) -> list:
    """Strip clips down to (cameras, scene_id): the only data stage 3 may see.

    Self-rollout purity is enforced structurally — train_asymmetric_dmd takes
    this list and never receives ground-truth frames at all.
    """
    return [(s.trajectory.cameras, s.scene_id) for s in shards]


def train_asymmetric_dmd(fewstep_ckpt_path, bidir_ckpt_path, conditions,
                         cfg: StageConfig, seed: int = 0,
                         log: MetricsLog | None = None):
    """Stage 3: distribution matching on student self-rollouts.

    Per cycle: (1) student rolls out a full clip on its own prefix, (2) s_fake
    takes k denoising updates on the rollouts, (3) the generator takes one
    update along the s_real - s_fake score difference.
    """
    cfg.validate()
    if not conditions:
        raise ValueError("no conditioning trajectories given")
    student, _, _ = load_stage_checkpoint(fewstep_ckpt_path, "fewstep_init")
    real, _, _ = load_stage_checkpoint(bidir_ckpt_path, "bidir")
    fake, _, _ = load_stage_checkpoint(bidir_ckpt_path, "bidir")
    pair = ScorePair(real=real, fake=fake)
    pair.real.eval()
    log = log or MetricsLog()
    gen = torch.Generator().manual_seed(seed)
    s_params = ParamSet.from_module(student)
    s_params.init_ema()
    f_params = ParamSet.from_module(pair.fake)
    s_opt: dict = {}
    f_opt: dict = {}
    L = student.cfg.chunk_len
    for step in range(cfg.steps):
        cams, sid = conditions[int(torch.randint(len(conditions), (1,), generator=gen))]
        n_chunks = len(cams) // L
        frames, _ = rollout(student, cams, sid, n_chunks, mode="fewstep",
                            schedule=cfg.schedule,
                            seed=int(torch.randint(2 ** 31, (1,), generator=gen)),
                            grad=True)
        n_frames = frames.shape[0]
        # (2) k denoising updates keep s_fake tracking the student distribution
        for _ in range(cfg.dmd_fake_updates_per_gen_update):
            f_loss = denoising_loss(pair.fake,
                                    {"frames": frames.detach(), "cameras": cams,
                                     "scene_id": sid}, "bidirectional",
                                    generator=gen)
            _grad_step(pair.fake, f_loss, f_params, f_opt, cfg.lr)
        # (3) one generator update along the score difference
        t = float(torch.rand(1, generator=gen) * 0.96 + 0.02)
        eps = torch.randn(frames.shape, generator=gen)
        x_t = forward_process(frames, eps, t)
        ts = torch.full((n_chunks,), t)
        with torch.no_grad():
            v_real = pair.real(x_t, ts, cams, sid, mask_mode="bidirectional")
            v_fake = pair.fake(x_t, ts, cams, sid, mask_mode="bidirectional")
            s_real = score_from_velocity(x_t, v_real, t)
            s_fake = score_from_velocity(x_t, v_fake, t)
            # direction-preserving normalizer against the teacher's x0 estimate
            x0_real = x0_from_velocity(x_t, v_real, t)
            norm_c = (frames - x0_real).abs().mean().clamp_min(1e-3)
        g_loss = ((s_fake - s_real) / norm_c * x_t).mean()
        norm = _grad_step(student, g_loss, s_params, s_opt, cfg.lr)
        s_params.ema_update(cfg.ema_decay)
        pair.assert_real_frozen()
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            log.log(step, float(g_loss.detach()), norm, fake_loss=float(f_loss.detach()))
    return student, s_params.ema_shadow


# ---------------------------------------------------------------------------
# 1-D Gaussian oracle versions: same objectives against closed-form teachers.
# ---------------------------------------------------------------------------


class GaussianStudent(torch.nn.Module):
    """Tiny (x, t) -> x0 map used to check CD == ODE regression at oracle scale."""

    def __init__(self, hidden: int = 128, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.net = torch.nn.Sequential(
            torch.nn.Linear(2, hidden), torch.nn.Tanh(),
            torch.nn.Linear(hidden, hidden), torch.nn.Tanh(),
            torch.nn.Linear(hidden, 1))

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        inp = torch.stack([x, t.expand_as(x)], dim=-1)
        return self.net(inp).squeeze(-1)


# both oracle trainers anchor to the one-step teacher denoise below this many
# delta_t; sharing the anchor makes their fixed points coincide exactly
_ANCHOR_MULT = 3


def _gaussian_x_uniform(n, mu, sigma, t, gen, span: float = 3.5):
    """Uniform x over +-span marginal stds: equal loss weight across the
    evaluation grid instead of Gaussian-density weighting (which starves the
    grid edges of training signal)."""
    from .gaussian import marginal_stats
    m, var = marginal_stats(mu, sigma, t)
    return m + span * var ** 0.5 * (2.0 * torch.rand(n, generator=gen) - 1.0)


def gaussian_euler_endpoint(x: torch.Tensor, mu: float, sigma: float, t: float,
                            dt: float, anchor_mult: int = _ANCHOR_MULT) -> torch.Tensor:
    """Euler-integrate the analytic PF-ODE from (x, t) to 0 at step dt.

    This is what a recorded trajectory endpoint is at this resolution, and it
    is bitwise the fixed point of the discrete CD recursion with the same
    anchor, so CD and ODE regression chase one common target map.
    """
    while t > anchor_mult * dt:
        x = x - dt * velocity(x, mu, sigma, t)
        t = t - dt
    return x - t * velocity(x, mu, sigma, t)


def _cosine_lr(opt, step, steps, lr):
    import math
    for g in opt.param_groups:
        g["lr"] = lr * 0.5 * (1.0 + math.cos(math.pi * step / steps)) + 1e-6


def train_gaussian_ode_regression(mu: float, sigma: float,
                                  schedule: FewStepSchedule | None = None,
                                  steps: int = 6000, batch: int = 512,
                                  lr: float = 3e-3, seed: int = 0) -> GaussianStudent:
    """Stage 2a on the analytic teacher: regress x0 onto solved PF-ODE endpoints,
    with t drawn from the few-step schedule only."""
    schedule = schedule or FewStepSchedule()
    dt = schedule.delta_t
    gen = torch.Generator().manual_seed(seed)
    student = GaussianStudent(seed=seed)
    opt = torch.optim.Adam(student.parameters(), lr=lr)
    for step in range(steps):
        _cosine_lr(opt, step, steps, lr)
        t = schedule.timesteps[int(torch.randint(len(schedule), (1,), generator=gen))]
        x_t = _gaussian_x_uniform(batch, mu, sigma, t, gen)
        with torch.no_grad():
            target = gaussian_euler_endpoint(x_t, mu, sigma, t, dt)
        loss = ((student(x_t, torch.tensor(t)) - target) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    return student


def train_gaussian_causal_cd(mu: float, sigma: float,
                             schedule: FewStepSchedule | None = None,
                             steps: int = 20000, batch: int = 512,
                             lr: float = 3e-3, ema_decay: float = 0.95,
                             seed: int = 0) -> GaussianStudent:
    """Stage 2b on the analytic teacher: one exact Euler step supplies the
    consistency target; near t=0 the anchor is the teacher's one-step denoise."""
    schedule = schedule or FewStepSchedule()
    dt = schedule.delta_t
    gen = torch.Generator().manual_seed(seed)
    student = GaussianStudent(seed=seed)
    target_net = copy.deepcopy(student)
    for p in target_net.parameters():
        p.requires_grad_(False)
    opt = torch.optim.Adam(student.parameters(), lr=lr)
    for step in range(steps):
        _cosine_lr(opt, step, steps, lr)
        # consistency bootstrapping needs full-support t, not just S
        t = float(torch.rand(1, generator=gen))
        while t - dt < 0:
            t = float(torch.rand(1, generator=gen))
        x_t = _gaussian_x_uniform(batch, mu, sigma, t, gen)
        with torch.no_grad():
            v = velocity(x_t, mu, sigma, t)
            if t <= _ANCHOR_MULT * dt:
                target = x_t - t * v     # one-step denoise anchor
            else:
                target = target_net(x_t - dt * v, torch.tensor(t - dt))
        loss = ((student(x_t, torch.tensor(t)) - target) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        with torch.no_grad():
            for p_t, p_s in zip(target_net.parameters(), student.parameters()):
                p_t.mul_(ema_decay).add_(p_s, alpha=1.0 - ema_decay)
    return student


def gaussian_dmd_gradient(theta: float, mu: float, sigma: float,
                          sigma_gen: float, t: float, n_samples: int,
                          seed: int = 0) -> float:
    """Monte-Carlo DMD gradient d/d theta for the mean-shift generator
    x = theta + sigma_gen * z, against exact data/generator scores."""
    gen = torch.Generator().manual_seed(seed)
    th = torch.tensor(theta, requires_grad=True)
    z = torch.randn(n_samples, generator=gen)
    x = th + sigma_gen * z
    eps = torch.randn(n_samples, generator=gen)
    x_t = forward_process(x, eps, t)
    with torch.no_grad():
        s_real = score(x_t, mu, sigma, t)
        s_fake = score(x_t, float(th), sigma_gen, t)
    loss = ((s_fake - s_real) * x_t).mean()
    loss.backward()
    return float(th.grad)
