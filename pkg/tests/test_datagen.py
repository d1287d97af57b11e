"""
Tests for procedural motion data, windowing and augmentation.
"""

import json
import math
import os
import shutil
import tempfile
import unittest

import numpy as np
import pytest

from global_motion_tools.datagen import (
    GenerationConfig,
    GeneratorSpec,
    MotionKind,
    MotionSample,
    build_dataset,
    flip,
    generate,
    load_dataset,
    perturb_local,
    perturb_quaternions,
    resample,
    save_dataset,
    specs_from_config,
    window,
)
from global_motion_tools.errors import ConfigError, InvalidInputError
from global_motion_tools.rigid_motion import PoseTrajectory, motions_to_arrays, rebase, trajectory_motions
from global_motion_tools.rot3 import random_quaternions

from tests.utils import NUM_JOINTS, max_abs, random_sample, read_bytes, write_config


def spec(kind: str, **kwargs) -> GeneratorSpec:
    return GeneratorSpec(kind=MotionKind(kind), **kwargs)


class TestGenerate(unittest.TestCase):
    """Trajectory families."""

    def test_frame_count(self) -> None:
        """floor(duration * fps) + 1 frames."""
        self.assertEqual(spec("idle", duration=6.4, fps=10.0).num_frames, 65)
        self.assertEqual(len(generate(spec("idle", duration=2.0, fps=30.0))), 61)

    def test_idle_stays_at_the_identity(self) -> None:
        seq = generate(spec("idle", duration=2.0))
        self.assertLess(max_abs(seq.trajectory.rotations(), np.tile(np.eye(3), (21, 1, 1))), 1e-15)
        self.assertLess(max_abs(seq.trajectory.translations()), 1e-15)
        self.assertEqual(seq.local.shape, (21, NUM_JOINTS, 4))

    def test_straight_walk_motion(self) -> None:
        """1 m/s at 10 fps moves 0.1 m forward per frame without turning."""
        seq = generate(spec("straight-walk", duration=2.0, speed=1.0, fps=10.0))
        dA, dT = motions_to_arrays(trajectory_motions(seq.trajectory))
        self.assertLess(max_abs(dA), 1e-15)
        self.assertLess(max_abs(dT, np.tile([0.1, 0.0, 0.0], (20, 1))), 1e-12)

    def test_circle_closes(self) -> None:
        """One full period returns to the starting pose with constant body-frame motions."""
        rate = 2.0 * math.pi / 4.0
        seq = generate(spec("circle-walk", duration=4.0, speed=1.0, turn_rate=rate, fps=10.0))
        first, last = seq.trajectory[0], seq.trajectory[-1]
        self.assertLess(max_abs(last.T, first.T), 1e-6)
        self.assertLess(max_abs(last.R, first.R), 1e-6)
        dA, dT = motions_to_arrays(trajectory_motions(seq.trajectory))
        self.assertLess(max_abs(dA, np.tile([0.0, 0.0, rate / 10.0], (40, 1))), 1e-12)
        self.assertLess(max_abs(dT, np.tile(dT[0], (40, 1))), 1e-12)

    def test_hop_leaves_the_ground(self) -> None:
        seq = generate(spec("hop", duration=2.0, hop_height=0.2))
        heights = seq.trajectory.translations()[:, 2]
        self.assertGreater(heights.max(), 0.1)
        self.assertGreaterEqual(heights.min(), 0.0)

    def test_figure_eight_heading_is_continuous(self) -> None:
        seq = generate(spec("figure-8", duration=6.0, speed=1.0, turn_rate=0.5))
        dA, _ = motions_to_arrays(trajectory_motions(seq.trajectory))
        self.assertLess(float(np.max(np.abs(dA[:, 2]))), 0.5)

    def test_generation_is_deterministic(self) -> None:
        a = generate(spec("straight-walk", seed=4))
        b = generate(spec("straight-walk", seed=4))
        np.testing.assert_array_equal(a.local, b.local)
        np.testing.assert_array_equal(a.beta, b.beta)

    def test_invalid_specs_raise(self) -> None:
        with self.assertRaises(InvalidInputError):
            GeneratorSpec(kind="moonwalk")
        with self.assertRaises(InvalidInputError):
            GeneratorSpec(duration=0.0)
        with self.assertRaises(InvalidInputError):
            spec("circle-walk", turn_rate=0.0)


class TestWindowing(unittest.TestCase):
    """resample and window."""

    def setUp(self) -> None:
        self.seq = generate(spec("circle-walk", duration=6.4, speed=1.2, turn_rate=0.4, fps=10.0, seed=2))

    def test_single_full_window(self) -> None:
        """65 frames with T = 64 at stride 1 give exactly one window."""
        samples = window(self.seq, 65, stride=1)
        self.assertEqual(len(samples), 1)
        self.assertEqual(samples[0].num_motions, 64)

    def test_window_count(self) -> None:
        self.assertEqual(len(window(self.seq, 10, stride=8)), 7)
        self.assertEqual([s.window_offset for s in window(self.seq, 33, stride=16)], [0, 16, 32])

    def test_short_sequence_gives_nothing(self) -> None:
        with self.assertLogs("global_motion_tools.datagen", level="WARNING"):
            self.assertEqual(window(self.seq, 66), [])

    def test_windows_start_at_the_identity(self) -> None:
        """Each window is rebased and keeps the motions of its slice."""
        source_dA, source_dT = motions_to_arrays(trajectory_motions(self.seq.trajectory))
        for sample in window(self.seq, 9, stride=7):
            self.assertTrue(np.array_equal(sample.gt_poses[0].R, np.eye(3)))
            self.assertTrue(np.array_equal(sample.gt_poses[0].T, np.zeros(3)))
            dA, dT = sample.motion_arrays()
            offset = sample.window_offset
            self.assertLess(max_abs(dA, source_dA[offset:offset + 8]), 1e-12)
            self.assertLess(max_abs(dT, source_dT[offset:offset + 8]), 1e-12)

    def test_resample_keeps_every_third_frame(self) -> None:
        seq = generate(spec("straight-walk", duration=2.0, fps=30.0))
        low = resample(seq, 10.0)
        self.assertEqual(len(low), 21)
        self.assertEqual(low.fps, 10.0)
        np.testing.assert_array_equal(low.local, seq.local[::3])
        np.testing.assert_array_equal(low.trajectory.translations(), seq.trajectory.translations()[::3])

    def test_resample_needs_an_integer_factor(self) -> None:
        seq = generate(spec("straight-walk", duration=1.0, fps=30.0))
        with self.assertRaises(InvalidInputError):
            resample(seq, 20.0)


class TestFlip(unittest.TestCase):
    """Temporal reversal."""

    def setUp(self) -> None:
        self.rng = np.random.default_rng(40)
        self.sample = random_sample(self.rng, motions=8)

    def test_flip_twice_is_the_identity(self) -> None:
        twice = flip(flip(self.sample))
        self.assertFalse(twice.flipped)
        np.testing.assert_array_equal(twice.local, self.sample.local)
        for a, b in zip(twice.motion_arrays(), self.sample.motion_arrays()):
            self.assertLess(max_abs(a, b), 1e-12)

    def test_flip_matches_reversed_poses(self) -> None:
        """Flipped poses equal the reversed window, rebased to its new first pose."""
        flipped = flip(self.sample)
        oracle = rebase(PoseTrajectory(self.sample.gt_poses.poses[::-1], fps=self.sample.fps))
        self.assertTrue(flipped.flipped)
        self.assertLess(max_abs(flipped.gt_poses.rotations(), oracle.rotations()), 1e-12)
        self.assertLess(max_abs(flipped.gt_poses.translations(), oracle.translations()), 1e-12)
        np.testing.assert_array_equal(flipped.local, self.sample.local[::-1])

    def test_idle_flip_is_unchanged(self) -> None:
        seq = generate(spec("idle", duration=1.0))
        sample = window(seq, len(seq))[0]
        flipped = flip(sample)
        np.testing.assert_array_equal(flipped.local, sample.local)
        self.assertLess(max_abs(flipped.motion_arrays()[0]), 1e-15)
        self.assertLess(max_abs(flipped.motion_arrays()[1]), 1e-15)


class TestPerturbation(unittest.TestCase):
    """Local pose noise."""

    def setUp(self) -> None:
        self.rng = np.random.default_rng(41)
        self.sample = random_sample(self.rng, motions=5)

    def test_zero_noise_copies(self) -> None:
        out = perturb_quaternions(self.sample.local, 0.0)
        np.testing.assert_array_equal(out, self.sample.local)
        self.assertIsNot(out, self.sample.local)

    def test_ground_truth_is_untouched(self) -> None:
        dA, dT = self.sample.motion_arrays()
        noisy = perturb_local(self.sample, 0.1, seed=3)
        self.assertFalse(np.array_equal(noisy.local, self.sample.local))
        self.assertIs(noisy.gt_poses, self.sample.gt_poses)
        np.testing.assert_array_equal(noisy.beta, self.sample.beta)
        np.testing.assert_array_equal(noisy.motion_arrays()[0], dA)
        np.testing.assert_array_equal(noisy.motion_arrays()[1], dT)

    def test_mean_angle_matches_noise_level(self) -> None:
        """With per-component std s the mean rotation angle is s * sqrt(8 / pi)."""
        noise_std = 0.01
        local = random_quaternions(200 * NUM_JOINTS, self.rng).reshape(200, NUM_JOINTS, 4)
        noisy = perturb_quaternions(local, noise_std, seed=[7, 1])
        dots = np.clip(np.abs(np.sum(local * noisy, axis=-1)), 0.0, 1.0)
        angles = 2.0 * np.arccos(dots)
        expected = noise_std * math.sqrt(8.0 / math.pi)
        self.assertAlmostEqual(float(np.mean(angles)) / expected, 1.0, delta=0.03)

    def test_noise_is_seeded(self) -> None:
        a = perturb_quaternions(self.sample.local, 0.05, seed=[1, 2, 3])
        b = perturb_quaternions(self.sample.local, 0.05, seed=[1, 2, 3])
        c = perturb_quaternions(self.sample.local, 0.05, seed=[1, 2, 4])
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))

    def test_negative_noise_raises(self) -> None:
        with self.assertRaises(InvalidInputError):
            perturb_quaternions(self.sample.local, -0.1)


class TestDatasetFiles(unittest.TestCase):
    """Dataset assembly and the JSON-lines format."""

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp()
        self.config = GenerationConfig(sequences=3, duration=2.4, window=8, stride=8, seed=5)

    def tearDown(self) -> None:
        shutil.rmtree(self.temp_dir)

    def test_specs_cycle_through_kinds(self) -> None:
        kinds = [s.kind.value for s in specs_from_config(self.config)]
        self.assertEqual(kinds, ["straight-walk", "circle-walk", "turn-in-place"])
        self.assertEqual(specs_from_config(self.config)[2].speed, 0.0)

    def test_build_dataset(self) -> None:
        """25 frames at 10 fps give three 9-frame windows per sequence."""
        samples = build_dataset(self.config)
        self.assertEqual(len(samples), 9)
        self.assertTrue(all(s.num_motions == 8 and s.fps == 10.0 for s in samples))
        self.assertEqual(sorted({s.source_id for s in samples}), [0, 1, 2])

    def test_save_load_is_byte_stable(self) -> None:
        """Loading and saving again rewrites the same bytes."""
        first = os.path.join(self.temp_dir, "a.jsonl")
        second = os.path.join(self.temp_dir, "b.jsonl")
        samples = build_dataset(self.config)
        self.assertEqual(save_dataset(samples, first), 9)
        loaded = load_dataset(first)
        save_dataset(loaded, second)
        self.assertEqual(read_bytes(first), read_bytes(second))
        self.assertEqual(loaded[4].window_offset, samples[4].window_offset)
        np.testing.assert_array_equal(loaded[4].local, samples[4].local)

    def test_same_seed_same_file(self) -> None:
        first = os.path.join(self.temp_dir, "a.jsonl")
        second = os.path.join(self.temp_dir, "b.jsonl")
        save_dataset(build_dataset(self.config), first)
        save_dataset(build_dataset(GenerationConfig(sequences=3, duration=2.4, window=8, stride=8, seed=5)), second)
        self.assertEqual(read_bytes(first), read_bytes(second))

    def test_malformed_lines_raise(self) -> None:
        path = os.path.join(self.temp_dir, "bad.jsonl")
        with open(path, "w") as f:
            f.write("{not json}\n")
        with self.assertRaises(InvalidInputError):
            load_dataset(path)
        with open(path, "w") as f:
            f.write(json.dumps({"version": 1, "fps": 10.0}) + "\n")
        with self.assertRaises(InvalidInputError):
            load_dataset(path)

    def test_sample_needs_two_frames(self) -> None:
        sample = random_sample(np.random.default_rng(0), motions=3)
        data = sample.to_dict()
        data["frames"] = data["frames"][:1]
        with self.assertRaises(InvalidInputError):
            MotionSample.from_dict(data)

    def test_config_file(self) -> None:
        path = write_config(
            os.path.join(self.temp_dir, "gen.cfg"),
            {"kinds": "hop,idle", "sequences": 2, "window": 16, "seed": 3},
        )
        config = GenerationConfig.from_file(path)
        self.assertEqual(config.kinds, ("hop", "idle"))
        self.assertEqual((config.sequences, config.window, config.seed), (2, 16, 3))

    def test_config_unknown_key_raises(self) -> None:
        path = write_config(os.path.join(self.temp_dir, "gen.cfg"), {"sequences": 2, "windw": 16})
        with self.assertRaises(ConfigError):
            GenerationConfig.from_file(path)


@pytest.mark.parametrize("kind", [k.value for k in MotionKind])
def test_every_kind_produces_valid_windows(kind: str) -> None:
    """Every trajectory family yields finite, unit-quaternion windows."""
    seq = resample(generate(spec(kind, duration=2.4, fps=30.0, turn_rate=0.6)), 10.0)
    samples = window(seq, 9, stride=8)
    assert len(samples) == 3
    for sample in samples:
        assert np.all(np.isfinite(sample.local))
        np.testing.assert_allclose(np.linalg.norm(sample.local, axis=-1), 1.0, atol=1e-12)


def test_walk_fixture_has_windows(walk_samples) -> None:
    assert len(walk_samples) == 9
    assert walk_samples[0].local.shape == (9, NUM_JOINTS, 4)
