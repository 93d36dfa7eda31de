import json
import os

import pytest

from minwm.cli import main
from minwm.config import RunConfig, desk_preset


@pytest.fixture()
def micro_config(tmp_path):
    """A config small enough that the full pipeline runs in seconds."""
    cfg = desk_preset(out_dir=str(tmp_path / "run"))
    cfg.data.n_scenes = 2
    cfg.data.frames_per_clip = 8
    cfg.data.height = cfg.data.width = 16
    cfg.model.n_scenes = 2
    cfg.model.height = cfg.model.width = 16
    cfg.model.blocks = 1
    cfg.model.dim = 32
    cfg.model.heads = 2
    cfg.model.patch = 8
    cfg.model.chunk_len = 4
    for st in cfg.stages.values():
        st.steps = 2
        st.batch_size = 2
        st.ode_solver_steps = 5
    cfg.rollout_steps = 5
    cfg.n_eval_trajectories = 1
    path = str(tmp_path / "config.json")
    cfg.save(path)
    return path, cfg


def run(args):
    return main(args)


def test_config_roundtrip(tmp_path):
    cfg = desk_preset(out_dir=str(tmp_path))
    again = RunConfig.from_json(cfg.to_json())
    assert again.model == cfg.model
    assert again.data == cfg.data
    assert again.stages["bidir"].steps == cfg.stages["bidir"].steps


def test_config_validation():
    cfg = desk_preset()
    cfg.data.height = 64
    with pytest.raises(ValueError):
        cfg.validate()


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0


def test_eval_without_checkpoint_errors(micro_config, capsys):
    path, _ = micro_config
    assert run(["gen-data", "--config", path]) == 0
    assert run(["eval", "--config", path]) == 1
    assert "missing checkpoint" in capsys.readouterr().err


def test_full_pipeline_order_and_gating(micro_config):
    path, cfg = micro_config
    for cmd in ("gen-data", "train-bidir", "train-ar", "collect-ode",
                "distill-ode", "distill-dmd"):
        assert run([cmd, "--config", path]) == 0, cmd
    from minwm.distill import load_stage_checkpoint
    _, meta, _ = load_stage_checkpoint(os.path.join(cfg.out_dir, "ckpt_dmd.mwm"))
    assert meta["stage"] == "dmd"
    # overwrite protection: second run without --resume/--force fails
    assert run(["train-bidir", "--config", path]) == 1
    assert run(["train-bidir", "--config", path, "--resume"]) == 0
    # distill-cd writes the same fewstep_init slot; needs --force now
    assert run(["distill-cd", "--config", path]) == 1
    assert run(["distill-cd", "--config", path, "--force"]) == 0
    assert run(["eval", "--config", path]) == 0
    assert run(["bench-latency", "--config", path]) == 0
    report = json.load(open(os.path.join(cfg.out_dir, "latency.json")))
    assert set(report) >= {"bidir", "ar_multistep", "ar_fewstep"}


def test_seed_determinism(micro_config, tmp_path):
    path, cfg = micro_config
    logs = []
    for sub in ("a", "b"):
        out = str(tmp_path / sub)
        assert run(["gen-data", "--config", path, "--out-dir", out,
                    "--seed", "7"]) == 0
        assert run(["train-bidir", "--config", path, "--out-dir", out,
                    "--seed", "7"]) == 0
        logs.append(open(os.path.join(out, "logs", "bidir.jsonl")).read())
    rows_a = [json.loads(l) for l in logs[0].splitlines()]
    rows_b = [json.loads(l) for l in logs[1].splitlines()]
    assert [r["loss"] for r in rows_a] == [r["loss"] for r in rows_b]


def test_ablation_csv(micro_config):
    path, cfg = micro_config
    assert run(["gen-data", "--config", path]) == 0
    assert run(["ablate", "--config", path, "--kind", "pose_noise",
                "--grid", "0,0.2"]) == 0
    import csv
    with open(os.path.join(cfg.out_dir, "ablation_pose_noise.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["grid_value"] for r in rows] == ["0.0", "0.2"]
    assert all({"pose_following_error", "controllability_gap", "psnr",
                "wall_clock_s"} <= set(r) for r in rows)
