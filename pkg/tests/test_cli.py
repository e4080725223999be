import json
import math
import os

import numpy as np
import pytest

from amp2d.character import make_pointmass
from amp2d.cli import main
from amp2d.clipgen import oscillate_clip
from amp2d.motion import finite_difference_velocities, load_clip, save_clip
from amp2d.rl import load_checkpoint_arrays


@pytest.fixture()
def clip_path(tmp_path):
    path = tmp_path / "clip.json"
    save_clip(oscillate_clip(make_pointmass(), duration=2.0, amplitude=0.8), path)
    return str(path)


def run(args):
    return main([str(a) for a in args])


TRAIN_FAST = ["--samples-per-iter", "128", "--minibatch-size", "64",
              "--hidden", "16,16", "--horizon-s", "1.0",
              "--max-iterations", "1", "--workers", "1",
              "--checkpoint-every", "0"]


class TestGenClip:
    def test_oscillate_amplitude_zero_constant(self, tmp_path):
        out = tmp_path / "flat.json"
        assert run(["gen-clip", "oscillate", "--amplitude", 0, "--out", out]) == 0
        clip = finite_difference_velocities(load_clip(out))
        for f in clip.frames:
            assert np.all(f.joint_velocities == 0.0)
            assert np.all(f.root_linear_velocity == 0.0)

    def test_gait_frames_and_span(self, tmp_path):
        out = tmp_path / "gait.json"
        assert run(["gen-clip", "gait", "--duration", 2.0, "--rate", 30.0,
                    "--speed", 1.0, "--out", out]) == 0
        clip = load_clip(out)
        assert len(clip.frames) == 60
        span = clip.frames[-1].root_position[0] - clip.frames[0].root_position[0]
        assert span == pytest.approx(2.0, abs=0.05)

    def test_round_trip_loads(self, tmp_path):
        out = tmp_path / "reach.json"
        assert run(["gen-clip", "reach", "--character", "walker5",
                    "--out", out]) == 0
        clip = load_clip(out)
        assert clip.n_joints == 4

    def test_unknown_kind_fails(self, tmp_path):
        assert run(["gen-clip", "wiggle", "--out", tmp_path / "x.json"]) == 2


class TestTrain:
    def test_missing_dataset_exit_2(self, tmp_path, capsys):
        code = run(["train", "--dataset", "/nope/missing.json",
                    "--out-dir", tmp_path / "run", *TRAIN_FAST])
        assert code == 2
        assert "missing.json" in capsys.readouterr().err

    def test_smoke_run_writes_outputs(self, tmp_path, clip_path):
        out = tmp_path / "run"
        code = run(["train", "--task", "imitate", "--dataset", clip_path,
                    "--out-dir", out, "--quiet", *TRAIN_FAST])
        assert code == 0
        assert (out / "training.csv").exists()
        assert (out / "timing.csv").exists()
        assert (out / "final.npz").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved"]["w_task"] == 0.0  # imitate forces w_G = 0
        assert manifest["seed"] == 0
        assert manifest["code_version"]

    def test_byte_identical_reruns(self, tmp_path, clip_path):
        csvs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run(["train", "--dataset", clip_path, "--out-dir", out,
                        "--quiet", "--seed", "3", *TRAIN_FAST]) == 0
            csvs.append((out / "training.csv").read_bytes())
        assert csvs[0] == csvs[1]

    def test_config_file_env_and_flag_precedence(self, tmp_path, clip_path,
                                                 monkeypatch):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"dataset = {clip_path}\nsigma = 0.4\nseed = 1\n")
        monkeypatch.setenv("AMP2D_SIGMA", "0.3")
        out = tmp_path / "run"
        assert run(["train", "--config", cfg, "--out-dir", out, "--quiet",
                    "--seed", "7", *TRAIN_FAST]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["sigma"] == 0.3   # env beats file
        assert manifest["config"]["seed"] == 7      # flag beats file


class TestEval:
    def test_imitate_mode_requires_clip(self, tmp_path):
        assert run(["eval", tmp_path / "x.npz", "--mode", "imitate"]) == 2

    def test_eval_report_and_bounds(self, tmp_path, clip_path):
        out = tmp_path / "run"
        assert run(["train", "--dataset", clip_path, "--out-dir", out,
                    "--quiet", *TRAIN_FAST]) == 0
        code = run(["eval", out / "final.npz", "--episodes", "2",
                    "--out-dir", out, "--clip", clip_path, "--mode", "imitate"])
        assert code == 0
        report = json.loads((out / "eval_report.json").read_text())
        assert 0.0 <= report["task_return_mean"] <= 1.0
        assert report["episodes"] == 2

    def test_checkpoint_mismatch_exit_3(self, tmp_path, clip_path):
        out = tmp_path / "run"
        assert run(["train", "--dataset", clip_path, "--out-dir", out,
                    "--quiet", *TRAIN_FAST]) == 0
        # corrupt the recorded dataset statistics: rebuild no longer matches
        data = load_checkpoint_arrays(str(out / "final.npz"))
        data["phi_mean"] = data["phi_mean"] + 1.0
        np.savez(out / "broken.npz", **data)
        assert run(["eval", out / "broken.npz", "--episodes", "1"]) == 3

    def test_default_episodes_flag_is_32(self):
        from amp2d.cli import build_parser
        parser = build_parser()
        args = parser.parse_args(["eval", "x.npz"])
        assert args.episodes == 32


class TestCheck:
    def test_check_gae_passes(self, capsys):
        assert run(["check", "gae"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_check_unknown_scope(self):
        assert run(["check", "nonsense"]) == 2


class TestAblate:
    def test_unknown_name_rejected(self, tmp_path, clip_path):
        assert run(["ablate", "no-everything", "--dataset", clip_path,
                    "--out-dir", tmp_path / "x", *TRAIN_FAST]) == 2

    def test_no_gp_sets_weight_zero(self, tmp_path, clip_path):
        out = tmp_path / "ng"
        assert run(["ablate", "no-gp", "--dataset", clip_path,
                    "--out-dir", out, "--quiet", *TRAIN_FAST]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved"]["w_gp"] == 0.0
        assert manifest["ablation"] == "no-gp"

    def test_no_vel_shrinks_disc_input(self, tmp_path, clip_path):
        outs = {}
        for name, args in (("full", ["train"]), ("novel", ["ablate", "no-vel"])):
            out = tmp_path / name
            assert run([*args, "--dataset", clip_path, "--out-dir", out,
                        "--quiet", *TRAIN_FAST]) == 0
            data = load_checkpoint_arrays(str(out / "final.npz"))
            outs[name] = int(data["disc/spec"][0])
        character = make_pointmass()
        velocity_block = 3 + character.n_joints
        assert outs["full"] - outs["novel"] == 2 * velocity_block

    def test_out_dir_tagged(self, tmp_path, clip_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert run(["ablate", "no-gp", "--dataset", clip_path, "--quiet",
                    *TRAIN_FAST]) == 0
        assert os.path.isdir("runs/out-no-gp")


class TestHelp:
    def test_every_config_key_has_a_flag(self, capsys):
        from amp2d.cli import build_parser
        from amp2d.config import TrainerConfig
        from dataclasses import fields
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["train", "--help"])
        text = capsys.readouterr().out
        for f in fields(TrainerConfig):
            assert "--" + f.name.replace("_", "-") in text
        assert "AMP default" in text and "impl default" in text
