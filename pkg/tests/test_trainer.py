"""
Tests for the optimizer, batch sampling and the training loop.
"""

import csv
import os
import shutil
import tempfile
import unittest
from collections import OrderedDict

import numpy as np
import pytest

from global_motion_tools.body import default_skeleton
from global_motion_tools.errors import InvalidInputError, NumericFailureError, ShapeMismatchError
from global_motion_tools.net import init_params, load_checkpoint, save_checkpoint
from global_motion_tools.net.checkpoint import checkpoint_bytes
from global_motion_tools.trainer import (
    TRAIN_LOG_COLUMNS,
    AdamState,
    TrainConfig,
    TrainingLog,
    adam_update,
    compute_losses,
    draw_batch,
    evaluate,
    stack_batch,
    train,
    train_step,
)

from tests.utils import NUM_JOINTS, random_sample, tiny_dataset, write_config


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(lr=1e-3, batch=2, steps=4, seed=3, eval_every=0, layers=1, hidden=8, proj_dim=8)
    values.update(overrides)
    return TrainConfig(**values)


class TestAdam(unittest.TestCase):
    """The optimizer update."""

    def test_matches_scalar_reference(self) -> None:
        """Three steps agree with the textbook recurrences."""
        grads_seq = [0.5, -1.5, 0.25]
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        x, m, v = 2.0, 0.0, 0.0
        expected = []
        for t, g in enumerate(grads_seq, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x = x - lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
            expected.append(x)

        tensors = OrderedDict(w=np.array([2.0]))
        state = AdamState.zeros_like(tensors)
        for g, want in zip(grads_seq, expected):
            tensors, state = adam_update(tensors, {"w": np.array([g])}, state, lr)
            self.assertAlmostEqual(float(tensors["w"][0]), want, delta=1e-12)
        self.assertEqual(state.step, 3)

    def test_first_step_moves_by_lr(self) -> None:
        """The bias-corrected first step is lr * sign(g), up to eps."""
        tensors = OrderedDict(w=np.array([0.0, 0.0]))
        out, _ = adam_update(tensors, {"w": np.array([3.0, -0.2])}, AdamState.zeros_like(tensors), 0.1)
        np.testing.assert_allclose(out["w"], [-0.1, 0.1], atol=1e-7)

    def test_zero_lr_leaves_params(self) -> None:
        tensors = OrderedDict(w=np.array([1.0, 2.0]))
        out, state = adam_update(tensors, {"w": np.array([1.0, 1.0])}, AdamState.zeros_like(tensors), 0.0)
        np.testing.assert_array_equal(out["w"], tensors["w"])
        self.assertEqual(state.step, 1)

    def test_inputs_are_not_modified(self) -> None:
        tensors = OrderedDict(w=np.array([1.0]))
        state = AdamState.zeros_like(tensors)
        adam_update(tensors, {"w": np.array([4.0])}, state, 0.5)
        np.testing.assert_array_equal(tensors["w"], [1.0])
        np.testing.assert_array_equal(state.m["w"], [0.0])
        self.assertEqual(state.step, 0)

    def test_missing_gradient_counts_as_zero(self) -> None:
        tensors = OrderedDict(w=np.array([1.0]))
        out, _ = adam_update(tensors, {}, AdamState.zeros_like(tensors), 0.5)
        np.testing.assert_array_equal(out["w"], [1.0])


class TestTrainConfig(unittest.TestCase):
    """Validation and config files."""

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self) -> None:
        shutil.rmtree(self.temp_dir)

    def test_learning_rate_must_be_positive(self) -> None:
        for lr in (0.0, -1e-3):
            with self.assertRaises(InvalidInputError):
                TrainConfig(lr=lr)

    def test_other_invalid_values(self) -> None:
        with self.assertRaises(InvalidInputError):
            TrainConfig(flip_prob=1.5)
        with self.assertRaises(InvalidInputError):
            TrainConfig(orientation_loss="euler")
        with self.assertRaises(InvalidInputError):
            TrainConfig(w_smooth=-1.0)

    def test_from_file(self) -> None:
        path = write_config(
            os.path.join(self.temp_dir, "train.cfg"),
            {"lr": "0.002", "batch": 4, "flip_aug": "false", "orientation_loss": "angular"},
        )
        config = TrainConfig.from_file(path)
        self.assertEqual(config.lr, 0.002)
        self.assertEqual(config.batch, 4)
        self.assertFalse(config.flip_aug)
        self.assertEqual(config.loss_weights().w_smooth, 1e-2)
        self.assertEqual(TrainConfig.from_dict(config.to_dict()).to_dict(), config.to_dict())


class TestBatches(unittest.TestCase):
    """Seeded batch sampling."""

    @classmethod
    def setUpClass(cls) -> None:
        cls.samples = tiny_dataset(sequences=3, window=8, stride=8, seed=1)
        cls.skel = default_skeleton()

    def test_same_step_same_batch(self) -> None:
        config = tiny_train_config(batch=4)
        a = draw_batch(self.samples, config, 5)
        b = draw_batch(self.samples, config, 5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.local, y.local)
            self.assertEqual(x.flipped, y.flipped)

    def test_flip_augmentation_reverses_some_windows(self) -> None:
        """Flipping draws the same windows and reverses some of them."""
        on = tiny_train_config(batch=8, flip_aug=True)
        off = tiny_train_config(batch=8, flip_aug=False)
        flipped = 0
        for step in range(1, 6):
            with_flip = draw_batch(self.samples, on, step)
            without = draw_batch(self.samples, off, step)
            for x, y in zip(with_flip, without):
                self.assertEqual((x.source_id, x.window_offset), (y.source_id, y.window_offset))
                self.assertFalse(y.flipped)
                flipped += int(x.flipped)
        self.assertGreater(flipped, 0)
        self.assertLess(flipped, 40)

    def test_local_noise_leaves_targets(self) -> None:
        config = tiny_train_config(batch=3, flip_aug=False, local_noise_std=0.05)
        clean = draw_batch(self.samples, tiny_train_config(batch=3, flip_aug=False), 2)
        noisy = draw_batch(self.samples, config, 2)
        for x, y in zip(noisy, clean):
            self.assertFalse(np.array_equal(x.local, y.local))
            np.testing.assert_array_equal(x.motion_arrays()[1], y.motion_arrays()[1])

    def test_empty_dataset_raises(self) -> None:
        with self.assertRaises(InvalidInputError):
            draw_batch([], tiny_train_config(), 1)

    def test_stack_batch_shapes(self) -> None:
        """Inputs drop the last frame; targets and vertices have one row per motion."""
        local, gt_dA, gt_dT, points = stack_batch(self.samples[:3], self.skel)
        self.assertEqual(local.shape, (3, 8, NUM_JOINTS, 4))
        self.assertEqual(gt_dA.shape, (3, 8, 3))
        self.assertEqual(gt_dT.shape, (3, 8, 3))
        self.assertEqual(points.shape, (3, 8, self.skel.num_vertices, 3))
        np.testing.assert_array_equal(local[1], self.samples[1].local[:-1])

    def test_stack_batch_rejects_mixed_lengths(self) -> None:
        rng = np.random.default_rng(2)
        with self.assertRaises(ShapeMismatchError):
            stack_batch([random_sample(rng, motions=4), random_sample(rng, motions=5)], self.skel)
        with self.assertRaises(InvalidInputError):
            stack_batch([], self.skel)


class TestTraining(unittest.TestCase):
    """Steps, runs and resumption."""

    @classmethod
    def setUpClass(cls) -> None:
        cls.samples = tiny_dataset(sequences=3, window=8, stride=8, seed=2)
        cls.skel = default_skeleton()

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self) -> None:
        shutil.rmtree(self.temp_dir)

    def test_train_step_reports_every_term(self) -> None:
        config = tiny_train_config()
        params = init_params(config.network_config(NUM_JOINTS), seed=0)
        batch = draw_batch(self.samples, config, 1)
        new_params, adam, losses = train_step(params, AdamState.zeros_like(params.tensors), batch, config, self.skel)
        self.assertEqual(set(losses), {"L_total", "L_ori", "L_trans", "L_vertex", "L_smooth"})
        self.assertEqual(adam.step, 1)
        self.assertFalse(np.array_equal(new_params["head.b"], params["head.b"]))
        _, total = compute_losses(params, batch, config, self.skel)
        self.assertAlmostEqual(total, losses["L_total"], delta=1e-9 * abs(total))

    def test_diverged_loss_raises(self) -> None:
        """A non-finite loss stops training."""
        config = tiny_train_config()
        params = init_params(config.network_config(NUM_JOINTS), seed=0)
        params = params.replace({"head.b": np.full(6, 1e200)})
        batch = draw_batch(self.samples, config, 1)
        with np.errstate(all="ignore"):
            with self.assertRaises(NumericFailureError):
                train_step(params, AdamState.zeros_like(params.tensors), batch, config, self.skel)

    def test_runs_are_deterministic(self) -> None:
        """The same seed, config and data give byte-identical checkpoints."""
        config = tiny_train_config()
        first = train(self.samples, config, self.skel)
        second = train(self.samples, config, self.skel)
        self.assertEqual(first.step, 4)
        self.assertEqual(checkpoint_bytes(first), checkpoint_bytes(second))
        self.assertEqual(first.metadata["train_config"], config.to_dict())

    def test_seed_changes_the_run(self) -> None:
        a = train(self.samples, tiny_train_config(steps=2), self.skel)
        b = train(self.samples, tiny_train_config(steps=2, seed=4), self.skel)
        self.assertNotEqual(checkpoint_bytes(a), checkpoint_bytes(b))

    def test_resumed_run_matches_uninterrupted_run(self) -> None:
        """Stopping at step 2, saving and resuming gives the same final checkpoint."""
        config = tiny_train_config()
        full = train(self.samples, config, self.skel)

        path = os.path.join(self.temp_dir, "partial.ckpt")
        partial = train(self.samples, config, self.skel, stop_at=2)
        self.assertEqual(partial.step, 2)
        save_checkpoint(path, partial)
        resumed = train(self.samples, config, self.skel, resume=load_checkpoint(path))
        self.assertEqual(checkpoint_bytes(resumed), checkpoint_bytes(full))

    def test_resume_must_match_the_config(self) -> None:
        partial = train(self.samples, tiny_train_config(), self.skel, stop_at=1)
        with self.assertRaises(InvalidInputError):
            train(self.samples, tiny_train_config(seed=9), self.skel, resume=partial)
        with self.assertRaises(InvalidInputError):
            train(self.samples, tiny_train_config(hidden=4), self.skel, resume=partial)

    def test_training_log(self) -> None:
        """One row per step; metric columns only at evaluation steps."""
        path = os.path.join(self.temp_dir, "log.csv")
        log = TrainingLog(path)
        train(self.samples, tiny_train_config(steps=3, eval_every=2), self.skel, log=log)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(tuple(rows[0]), TRAIN_LOG_COLUMNS)
        self.assertEqual([row[0] for row in rows[1:]], ["1", "2", "3"])
        ome = TRAIN_LOG_COLUMNS.index("OME")
        self.assertEqual(rows[1][ome], "")
        self.assertGreaterEqual(float(rows[2][ome]), 0.0)
        self.assertNotEqual(rows[3][ome], "")
        self.assertEqual(log.losses().shape, (3,))

    def test_appending_keeps_the_header_once(self) -> None:
        path = os.path.join(self.temp_dir, "log.csv")
        TrainingLog(path).record(1, {"L_total": 1.0})
        TrainingLog(path, append=True).record(2, {"L_total": 0.5})
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(len(rows), 3)
        self.assertEqual(rows[2][0], "2")

    def test_empty_datasets_raise(self) -> None:
        params = init_params(tiny_train_config().network_config(NUM_JOINTS))
        with self.assertRaises(InvalidInputError):
            evaluate(params, [], self.skel)
        with self.assertRaises(InvalidInputError):
            train([], tiny_train_config(), self.skel)


@pytest.mark.parametrize("kind", ["chordal", "angular", "axis-angle"])
def test_every_orientation_loss_trains(walk_samples, skel, kind: str) -> None:
    """Each orientation distance gives finite losses through a short run."""
    log = TrainingLog()
    train(walk_samples, tiny_train_config(steps=2, orientation_loss=kind), skel, log=log)
    assert np.all(np.isfinite(log.losses()))
    assert np.all(np.isfinite(log.losses("L_ori")))
