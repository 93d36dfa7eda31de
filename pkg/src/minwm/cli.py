"""Command-line entry point: dataset generation, the four training stages,
evaluation, latency benchmarking, serving and ablations."""

from __future__ import annotations

import argparse
import asyncio
import dataclasses
import json
import os
import sys

import torch

from .config import RunConfig, desk_preset
from .distill import (MetricsLog, StageConfig, collect_ode_pairs,
                      conditioning_only, load_stage_checkpoint,
                      save_stage_checkpoint, train_ar_teacher_forcing,
                      train_asymmetric_dmd, train_bidirectional, train_causal_cd,
                      train_ode_regression)
from .eval import eval_controllability, run_ablation
from .rollout import benchmark_latency
from .scenes import build_dataset, load_shard, sample_trajectory, generate_scene


class CliError(Exception):
    pass


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = desk_preset()
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.data.seed = args.seed
    return cfg.validate()


def _out(cfg: RunConfig, *parts) -> str:
    return os.path.join(cfg.out_dir, *parts)


def _guard_output(path: str, args) -> bool:
    """Returns True if the step should be skipped (resume hit); raises unless
    an existing output is covered by --resume/--force."""
    if not os.path.exists(path):
        return False
    if args.force:
        return False
    if args.resume:
        return True
    raise CliError(f"output {path} exists; pass --resume to keep it or --force "
                   "to overwrite")


def _load_shards(cfg: RunConfig):
    data_dir = _out(cfg, "data")
    if not os.path.isdir(data_dir):
        raise CliError(f"no dataset under {data_dir}; run gen-data first")
    paths = sorted(p for p in os.listdir(data_dir) if p.endswith(".mwm"))
    return [load_shard(os.path.join(data_dir, p)) for p in paths]


def _ckpt(cfg: RunConfig, stage: str) -> str:
    return _out(cfg, f"ckpt_{stage}.mwm")


def _require_ckpt(path: str) -> str:
    if not os.path.exists(path):
        raise CliError(f"missing checkpoint {path}")
    return path


def _log(cfg: RunConfig, name: str) -> MetricsLog:
    os.makedirs(_out(cfg, "logs"), exist_ok=True)
    return MetricsLog(_out(cfg, "logs", f"{name}.jsonl"))


def cmd_gen_data(cfg: RunConfig, args):
    data_dir = _out(cfg, "data")
    if _guard_output(data_dir, args):
        return
    paths = build_dataset(cfg.data, data_dir)
    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.save(_out(cfg, "config.json"))
    print(f"wrote {len(paths)} shards to {data_dir}")


def cmd_train_bidir(cfg: RunConfig, args):
    out = _ckpt(cfg, "bidir")
    if _guard_output(out, args):
        return
    torch.manual_seed(cfg.seed)
    model, ema = train_bidirectional(_load_shards(cfg), cfg.model,
                                     cfg.stages["bidir"], seed=cfg.seed,
                                     log=_log(cfg, "bidir"))
    save_stage_checkpoint(out, model, "bidir", ema)
    print(f"wrote {out}")


def cmd_train_ar(cfg: RunConfig, args):
    out = _ckpt(cfg, "ar_teacher")
    if _guard_output(out, args):
        return
    model, ema = train_ar_teacher_forcing(_require_ckpt(_ckpt(cfg, "bidir")),
                                          _load_shards(cfg),
                                          cfg.stages["ar_teacher"], seed=cfg.seed,
                                          log=_log(cfg, "ar_teacher"))
    save_stage_checkpoint(out, model, "ar_teacher", ema)
    print(f"wrote {out}")


def cmd_collect_ode(cfg: RunConfig, args):
    out_dir = _out(cfg, "ode_shards")
    if _guard_output(out_dir, args):
        return
    paths = collect_ode_pairs(_require_ckpt(_ckpt(cfg, "ar_teacher")),
                              _load_shards(cfg), cfg.stages["ode_distill"],
                              out_dir, seed=cfg.seed)
    print(f"wrote {len(paths)} trajectory shards to {out_dir}")


def cmd_distill_ode(cfg: RunConfig, args):
    out = _ckpt(cfg, "fewstep_init")
    if _guard_output(out, args):
        return
    shard_dir = _out(cfg, "ode_shards")
    if not os.path.isdir(shard_dir):
        raise CliError(f"no ODE shards under {shard_dir}; run collect-ode first")
    traj_paths = sorted(os.path.join(shard_dir, p) for p in os.listdir(shard_dir)
                        if p.endswith(".mwm"))
    model, ema = train_ode_regression(_require_ckpt(_ckpt(cfg, "ar_teacher")),
                                      _load_shards(cfg), traj_paths,
                                      cfg.stages["ode_distill"], seed=cfg.seed,
                                      log=_log(cfg, "ode_distill"))
    save_stage_checkpoint(out, model, "fewstep_init", ema)
    print(f"wrote {out}")


def cmd_distill_cd(cfg: RunConfig, args):
    out = _ckpt(cfg, "fewstep_init")
    if _guard_output(out, args):
        return
    model, ema = train_causal_cd(_require_ckpt(_ckpt(cfg, "ar_teacher")),
                                 _load_shards(cfg), cfg.stages["causal_cd"],
                                 seed=cfg.seed, log=_log(cfg, "causal_cd"))
    save_stage_checkpoint(out, model, "fewstep_init", ema)
    print(f"wrote {out}")


def cmd_distill_dmd(cfg: RunConfig, args):
    out = _ckpt(cfg, "dmd")
    if _guard_output(out, args):
        return
    conds = conditioning_only(_load_shards(cfg))
    model, ema = train_asymmetric_dmd(_require_ckpt(_ckpt(cfg, "fewstep_init")),
                                      _require_ckpt(_ckpt(cfg, "bidir")), conds,
                                      cfg.stages["dmd"], seed=cfg.seed,
                                      log=_log(cfg, "dmd"))
    save_stage_checkpoint(out, model, "dmd", ema)
    print(f"wrote {out}")


def cmd_eval(cfg: RunConfig, args):
    path = args.ckpt or _ckpt(cfg, "dmd")
    model, meta, _ = load_stage_checkpoint(_require_ckpt(path))
    stage = meta.get("stage")
    if stage in ("fewstep_init", "dmd"):
        mode = "fewstep"
    elif stage == "bidir":
        mode = "bidir"
    else:
        mode = "multistep"
    report = eval_controllability(model, cfg.n_eval_trajectories, cfg.seed,
                                  mode=mode, n_steps=cfg.rollout_steps)
    out = _out(cfg, f"eval_{meta.get('stage', 'unknown')}.json")
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(json.dumps(report.to_dict()))


def cmd_bench_latency(cfg: RunConfig, args):
    bidir, _, _ = load_stage_checkpoint(_require_ckpt(_ckpt(cfg, "bidir")))
    ar, _, _ = load_stage_checkpoint(_require_ckpt(_ckpt(cfg, "ar_teacher")))
    few_path = _ckpt(cfg, "dmd")
    if not os.path.exists(few_path):
        few_path = _ckpt(cfg, "fewstep_init")
    few, _, _ = load_stage_checkpoint(_require_ckpt(few_path))
    n_chunks = args.n_chunks
    scene = generate_scene(cfg.seed)
    cams = sample_trajectory("orbit", n_chunks * cfg.model.chunk_len, cfg.seed,
                             scene).cameras
    report = benchmark_latency(bidir, ar, few, cams, 0, n_chunks=n_chunks,
                               n_steps=cfg.rollout_steps, seed=cfg.seed)
    out = _out(cfg, "latency.json")
    with open(out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(json.dumps(report.to_dict()))


def cmd_serve(cfg: RunConfig, args):
    from .server import serve
    ckpt = args.ckpt or _ckpt(cfg, "dmd")
    asyncio.run(serve(args.addr, _require_ckpt(ckpt), chunk_steps=args.chunk_steps,
                      max_sessions=args.max_sessions,
                      scene_seed_base=cfg.data.seed * 100003))


def ablation_train_fn(base: RunConfig, kind: str, value, seed: int):
    """One grid point: rebuild data, train bidir, then the AR conversion.

    The grid has to reach the teacher-forcing stage: camera following (and
    therefore the controllability gap) only becomes measurable once the model
    is chunkwise-causal, so a bidir-only sweep would flatten every kind.
    """
    import tempfile
    cfg = RunConfig.from_json(base.to_json())
    cfg.seed = seed
    bidir = cfg.stages["bidir"]
    ar = cfg.stages["ar_teacher"]
    if kind == "pose_noise":
        cfg.data.pose_sigma_trans = float(value)
        cfg.data.pose_sigma_rot_deg = float(value) * 50.0
    elif kind == "train_steps":
        bidir = dataclasses.replace(bidir, steps=max(1, int(bidir.steps * float(value))))
        ar = dataclasses.replace(ar, steps=max(1, int(ar.steps * float(value))))
    elif kind == "batch_size":
        bidir = dataclasses.replace(bidir, batch_size=int(value))
        ar = dataclasses.replace(ar, batch_size=int(value))
    with tempfile.TemporaryDirectory() as tmp:
        shards = [load_shard(p) for p in build_dataset(cfg.data, tmp)]
        model, _ = train_bidirectional(shards, cfg.model, bidir, seed=seed)
        bidir_ckpt = os.path.join(tmp, "ckpt_bidir.mwm")
        save_stage_checkpoint(bidir_ckpt, model, "bidir")
        model, _ = train_ar_teacher_forcing(bidir_ckpt, shards, ar, seed=seed)
    return model


def cmd_ablate(cfg: RunConfig, args):
    grid = [float(v) for v in args.grid.split(",")]
    if args.kind == "batch_size":
        grid = [int(v) for v in grid]
    csv_path = _out(cfg, f"ablation_{args.kind}.csv")
    if _guard_output(csv_path, args):
        return
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = run_ablation(args.kind, grid, cfg, ablation_train_fn, csv_path,
                        seed=cfg.seed)
    for row in rows:
        print(json.dumps(row))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-bidir": cmd_train_bidir,
    "train-ar": cmd_train_ar,
    "collect-ode": cmd_collect_ode,
    "distill-ode": cmd_distill_ode,
    "distill-cd": cmd_distill_cd,
    "distill-dmd": cmd_distill_dmd,
    "eval": cmd_eval,
    "bench-latency": cmd_bench_latency,
    "serve": cmd_serve,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minwm",
                                description="desk-scale real-time world model pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="RunConfig JSON path")
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--resume", action="store_true",
                        help="skip steps whose outputs already exist")
        sp.add_argument("--force", action="store_true",
                        help="overwrite existing outputs")
        if name in ("eval", "serve"):
            sp.add_argument("--ckpt", default=None)
        if name == "bench-latency":
            sp.add_argument("--n-chunks", type=int, default=5)
        if name == "serve":
            sp.add_argument("--addr", default="127.0.0.1:8765")
            sp.add_argument("--chunk-steps", type=int, default=4)
            sp.add_argument("--max-sessions", type=int, default=4)
        if name == "ablate":
            sp.add_argument("--kind", required=True,
                            choices=("pose_noise", "train_steps", "batch_size"))
            sp.add_argument("--grid", required=True,
                            help="comma-separated grid values")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](cfg, args)
    except (CliError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
