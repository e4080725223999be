import numpy as np
import pytest

from amp2d.checks import check_dtw, dtw_brute
from amp2d.clipgen import oscillate_clip
from amp2d.evaluate import (clip_pose_sequence, dtw_align, evaluate,
                            joint_position_frame, normalized_task_return,
                            pose_error)


def frame(root, joints):
    return np.concatenate(([root], joints), axis=0).astype(float)


class TestPoseError:
    def test_identical_frames(self, rng):
        f = rng.normal(size=(5, 2))
        assert pose_error(f, f) == 0.0

    def test_single_joint_offset(self):
        a = frame([0, 0], [[1, 0], [0, 1], [-1, 0], [0, -1]])
        b = a.copy()
        b[1] += [1.0, 0.0]  # one of N=4 joints shifted by (1, 0)
        assert pose_error(a, b) == pytest.approx(0.25, abs=1e-15)

    def test_global_translation_invariance(self, rng):
        a = rng.normal(size=(6, 2))
        b = rng.normal(size=(6, 2))
        err = pose_error(a, b)
        assert pose_error(a + 3.7, b - 1.2) == pytest.approx(err, abs=1e-12)

    def test_pseudometric_properties(self, rng):
        a = rng.normal(size=(4, 2))
        b = rng.normal(size=(4, 2))
        assert pose_error(a, b) >= 0.0
        assert pose_error(a, b) == pytest.approx(pose_error(b, a), abs=1e-15)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            pose_error(rng.normal(size=(4, 2)), rng.normal(size=(5, 2)))


class TestDtw:
    def test_identical_sequences_diagonal(self, rng):
        seq = rng.normal(size=(7, 4, 2))
        path, err = dtw_align(seq, seq)
        assert err == 0.0
        assert path == [(i, i) for i in range(7)]

    def test_double_speed_stretch_zero_error(self, rng):
        seq = rng.normal(size=(6, 4, 2))
        stretched = np.repeat(seq, 2, axis=0)
        _, err = dtw_align(seq, stretched)
        assert err == pytest.approx(0.0, abs=1e-15)

    def test_exhaustive_enumeration_oracle(self):
        for result in check_dtw(seed=0, cases=200):
            assert result.passed, result.line()

    def test_aligned_error_below_framewise(self, rng):
        for _ in range(20):
            a = rng.normal(size=(6, 3, 2))
            b = rng.normal(size=(6, 3, 2))
            framewise = np.mean([pose_error(a[i], b[i]) for i in range(6)])
            _, aligned = dtw_align(a, b)
            assert aligned <= framewise + 1e-12

    def test_symmetry(self, rng):
        a = rng.normal(size=(5, 3, 2))
        b = rng.normal(size=(8, 3, 2))
        _, e1 = dtw_align(a, b)
        _, e2 = dtw_align(b, a)
        assert e1 == pytest.approx(e2, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dtw_align(np.zeros((0, 3, 2)), np.zeros((2, 3, 2)))


class TestNormalizedReturn:
    def test_full_horizon_unit_reward(self):
        assert normalized_task_return(np.ones(600), 600) == 1.0

    def test_early_termination_costs_return(self):
        assert normalized_task_return(np.ones(300), 600) == 0.5

    def test_zero(self):
        assert normalized_task_return(np.zeros(600), 600) == 0.0


class TestJointFrames:
    def test_pointmass_frame_layout(self, pointmass):
        f = joint_position_frame(pointmass, pointmass.rest_pose)
        assert f.shape == (1 + 1 + 1, 2)  # root + 1 pivot + 1 end effector
        np.testing.assert_allclose(f[0], [0.0, 0.1], atol=1e-15)
        np.testing.assert_allclose(f[2], [0.0, 0.45], atol=1e-12)

    def test_loopable_reference_tiling(self, pointmass):
        clip = oscillate_clip(pointmass, duration=1.0)
        seq = clip_pose_sequence(pointmass, clip, min_frames=100)
        assert seq.shape[0] == 100


@pytest.fixture(scope="module")
def random_checkpoint(tmp_path_factory):
    from amp2d.character import make_pointmass
    from amp2d.motion import save_clip
    from amp2d.config import TrainerConfig
    from amp2d.rl import Trainer

    tmp = tmp_path_factory.mktemp("ckpt")
    character = make_pointmass()
    clip = oscillate_clip(character, duration=2.0, amplitude=0.8)
    clip_path = tmp / "clip.json"
    save_clip(clip, clip_path)
    cfg = TrainerConfig(task="imitate", dataset=str(clip_path),
                        hidden="32,32", horizon_s=2.0, max_iterations=0,
                        total_samples=0, out_dir=str(tmp), workers=1)
    trainer = Trainer(cfg)
    return trainer.train(log=lambda *a: None)


class TestEvaluate:
    def test_report_deterministic(self, random_checkpoint):
        r1 = evaluate(random_checkpoint, episodes=2, seed=5)
        r2 = evaluate(random_checkpoint, episodes=2, seed=5)
        assert r1.dtw_error_mean == r2.dtw_error_mean
        assert r1.task_return_mean == r2.task_return_mean

    def test_report_fields_sane(self, random_checkpoint, tmp_path):
        report = evaluate(random_checkpoint, episodes=2, seed=0)
        assert report.mode == "imitate"
        assert report.episodes == 2
        assert report.dtw_error_mean > 0.0
        assert 0.0 <= report.task_return_mean <= 1.0
        jpath, cpath = report.write(str(tmp_path))
        assert (tmp_path / "eval_report.json").exists()
        assert (tmp_path / "eval_report.csv").exists()

    def test_default_episode_count_is_32(self):
        import inspect
        assert inspect.signature(evaluate).parameters["episodes"].default == 32
