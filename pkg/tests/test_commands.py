"""
End-to-end tests of the gmr-tools command line.
"""

import csv
import json
import logging
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

import pytest

from global_motion_tools.commands import (
    EXIT_INPUT,
    EXIT_NUMERIC,
    EXIT_OK,
    InferenceConfig,
    RunManifest,
    build_parser,
    cmd_report,
    main,
    read_local_sequences,
)
from global_motion_tools.datagen import load_dataset
from global_motion_tools.errors import InvalidInputError, NumericFailureError
from global_motion_tools.logger import PACKAGE_LOGGER
from global_motion_tools.net.checkpoint import load_checkpoint

from tests.utils import read_bytes, write_config

pytestmark = pytest.mark.integration

GENERATION = {
    "kinds": "straight-walk,circle-walk",
    "sequences": 2,
    "duration": 2.4,
    "window": 8,
    "stride": 8,
    "seed": 5,
}

TRAINING = {
    "lr": 0.001,
    "batch": 2,
    "steps": 4,
    "seed": 1,
    "eval_every": 2,
    "layers": 1,
    "hidden": 8,
    "proj_dim": 8,
}


class CommandTestCase(unittest.TestCase):
    """Temporary directory plus a generated dataset and config files."""

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp()
        self.gen_config = write_config(self.path("generate.env"), GENERATION)
        self.train_config = write_config(self.path("train.env"), TRAINING)
        self.dataset = self.path("train.jsonl")
        self.assertEqual(main(["generate", "--config", self.gen_config, "--out", self.dataset]), EXIT_OK)

    def tearDown(self) -> None:
        shutil.rmtree(self.temp_dir)

    def path(self, name: str) -> str:
        return os.path.join(self.temp_dir, name)

    def train(self, out: str, *extra: str) -> int:
        argv = ["train", "--config", self.train_config, "--dataset", self.dataset, "--out", out]
        return main(argv + list(extra))


class TestGenerate(CommandTestCase):

    def test_repeated_runs_are_byte_identical(self) -> None:
        """The same config writes the same dataset."""
        again = self.path("again.jsonl")
        self.assertEqual(main(["generate", "--config", self.gen_config, "--out", again]), EXIT_OK)
        self.assertEqual(read_bytes(again), read_bytes(self.dataset))
        self.assertEqual(len(load_dataset(again)), 6)

    def test_manifest(self) -> None:
        """Every run leaves a manifest with its config hash and seed."""
        with open(f"{self.dataset}.manifest.json") as f:
            manifest = json.load(f)
        self.assertEqual(manifest["command"], "generate")
        self.assertEqual(manifest["seed"], 5)
        self.assertEqual(manifest["outputs"], [self.dataset])
        self.assertEqual(len(manifest["config_hash"]), 64)
        self.assertEqual(set(manifest), {"command", "config", "config_hash", "seed", "inputs", "outputs", "version"})

    def test_seed_override(self) -> None:
        """--seed replaces the config's seed and changes the data."""
        other = self.path("other.jsonl")
        self.assertEqual(main(["generate", "--config", self.gen_config, "--seed", "6", "--out", other]), EXIT_OK)
        with open(f"{other}.manifest.json") as f:
            self.assertEqual(json.load(f)["seed"], 6)
        self.assertNotEqual(read_bytes(other), read_bytes(self.dataset))

    def test_malformed_config_exits_with_input_error(self) -> None:
        """Unknown keys and unreadable values give exit code 2 and no manifest."""
        bad = write_config(self.path("bad.env"), {"sequences": "many"})
        out = self.path("bad.jsonl")
        self.assertEqual(main(["generate", "--config", bad, "--out", out]), EXIT_INPUT)
        unknown = write_config(self.path("unknown.env"), {"bogus": 1})
        self.assertEqual(main(["generate", "--config", unknown, "--out", out]), EXIT_INPUT)
        self.assertFalse(os.path.exists(f"{out}.manifest.json"))

    def test_window_longer_than_data(self) -> None:
        config = write_config(self.path("long.env"), {**GENERATION, "window": 500})
        self.assertEqual(main(["generate", "--config", config, "--out", self.path("x.jsonl")]), EXIT_INPUT)

    def test_log_file(self) -> None:
        """--log-file collects the run's log lines."""
        log_path = self.path("run.log")
        package = logging.getLogger(PACKAGE_LOGGER)
        before, level = list(package.handlers), package.level
        try:
            argv = ["--log-file", log_path, "generate", "--config", self.gen_config, "--out", self.path("x.jsonl")]
            self.assertEqual(main(argv), EXIT_OK)
        finally:
            for handler in list(package.handlers):
                if handler not in before:
                    package.removeHandler(handler)
                    handler.close()
            package.setLevel(level)
        with open(log_path, encoding="utf-8") as f:
            self.assertIn("global_motion_tools.", f.read())

    def test_missing_out_is_a_usage_error(self) -> None:
        with self.assertRaises(SystemExit) as ctx:
            build_parser().parse_args(["generate"])
        self.assertEqual(ctx.exception.code, 2)


class TestTrainAndInfer(CommandTestCase):

    def test_train_writes_checkpoint_and_log(self) -> None:
        """A run writes the checkpoint, a row per step and a manifest."""
        out = self.path("model.ckpt")
        self.assertEqual(self.train(out), EXIT_OK)
        ckpt = load_checkpoint(out)
        self.assertEqual(ckpt.step, 4)
        self.assertTrue(ckpt.has_optimizer_state)
        with open(self.path("model.log.csv"), newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([row["step"] for row in rows], ["1", "2", "3", "4"])
        self.assertEqual(rows[0]["OME"], "")
        self.assertNotEqual(rows[1]["OME"], "")
        self.assertTrue(os.path.exists(f"{out}.manifest.json"))

    def test_resume_matches_an_uninterrupted_run(self) -> None:
        """Stopping at step 2 and resuming gives the same checkpoint bytes."""
        full, half, resumed = self.path("full.ckpt"), self.path("half.ckpt"), self.path("resumed.ckpt")
        self.assertEqual(self.train(full), EXIT_OK)
        self.assertEqual(self.train(half, "--stop-at", "2"), EXIT_OK)
        self.assertEqual(load_checkpoint(half).step, 2)
        self.assertEqual(self.train(resumed, "--resume", half), EXIT_OK)
        self.assertEqual(read_bytes(resumed), read_bytes(full))

    def test_resume_with_another_seed_fails(self) -> None:
        half = self.path("half.ckpt")
        self.assertEqual(self.train(half, "--stop-at", "1"), EXIT_OK)
        self.assertEqual(self.train(self.path("x.ckpt"), "--resume", half, "--seed", "9"), EXIT_INPUT)

    def test_divergence_exits_with_numeric_error(self) -> None:
        with patch("global_motion_tools.commands.train", side_effect=NumericFailureError("loss is nan")):
            self.assertEqual(self.train(self.path("x.ckpt")), EXIT_NUMERIC)

    def test_missing_dataset(self) -> None:
        argv = ["train", "--dataset", self.path("missing.jsonl"), "--out", self.path("x.ckpt")]
        self.assertEqual(main(argv), EXIT_INPUT)

    def test_infer_keeps_every_frame(self) -> None:
        """One trajectory per input sequence, as long as its input, starting at the identity."""
        model, out = self.path("model.ckpt"), self.path("traj.jsonl")
        self.assertEqual(self.train(model), EXIT_OK)
        argv = ["infer", "--checkpoint", model, "--input", self.dataset, "--out", out]
        self.assertEqual(main(argv), EXIT_OK)
        sequences = read_local_sequences(self.dataset)
        with open(out) as f:
            records = [json.loads(line) for line in f]
        self.assertEqual(len(records), len(sequences))
        for seq, record in zip(sequences, records):
            self.assertEqual(len(record["poses"]), seq.local.shape[0])
            self.assertEqual(len(record["dT"]), seq.local.shape[0] - 1)
            self.assertEqual(record["poses"][0]["T"], [0.0, 0.0, 0.0])
            self.assertEqual(record["window_offset"], seq.window_offset)

    def test_infer_rejects_malformed_input(self) -> None:
        model, bad = self.path("model.ckpt"), self.path("bad.jsonl")
        self.assertEqual(self.train(model), EXIT_OK)
        with open(bad, "w") as f:
            f.write('{"frames": [{"rot": []}]}\n')
        argv = ["infer", "--checkpoint", model, "--input", bad, "--out", self.path("traj.jsonl")]
        self.assertEqual(main(argv), EXIT_INPUT)
        with self.assertRaises(InvalidInputError):
            read_local_sequences(bad)


class TestEvaluateAndReport(CommandTestCase):

    def setUp(self) -> None:
        super().setUp()
        self.model = self.path("model.ckpt")
        self.assertEqual(self.train(self.model), EXIT_OK)

    def test_pipeline(self) -> None:
        """evaluate, camera-sim and report chain into one table."""
        gmr_json, zero_json = self.path("gmr.json"), self.path("zero.json")
        camera_json, table = self.path("camera.json"), self.path("table.json")
        argv = ["evaluate", "--dataset", self.dataset, "--checkpoint", self.model, "--out", gmr_json]
        self.assertEqual(main(argv), EXIT_OK)
        self.assertEqual(main(["evaluate", "--dataset", self.dataset, "--predictor", "zero", "--out", zero_json]), 0)
        argv = ["camera-sim", "--dataset", self.dataset, "--checkpoint", self.model, "--camera", "circular"]
        self.assertEqual(main(argv + ["--out", camera_json]), EXIT_OK)
        self.assertEqual(main(["report", gmr_json, zero_json, camera_json, "--out", table]), EXIT_OK)

        with open(table) as f:
            data = json.load(f)
        labels = [report["label"] for report in data["reports"]]
        self.assertEqual(labels[:2], ["gmr", "zero"])
        self.assertEqual(len(labels), 6)
        self.assertEqual(data["aggregate"]["label"], "mean")
        with open(self.path("table.csv")) as f:
            self.assertEqual(len(f.read().splitlines()), 8)
        with open(self.path("table_curves.csv")) as f:
            header = f.readline().strip().split(",")
        self.assertEqual(header[0], "frame")
        self.assertEqual(len(header), 7)

        with open(f"{camera_json}.manifest.json") as f:
            self.assertEqual(json.load(f)["config"]["camera"]["kind"], "circular")

    def test_evaluate_with_shared_config(self) -> None:
        """One file may hold the inference options and the camera path."""
        config = write_config(self.path("eval.env"), {"local_noise_std": 0.01, "seed": 3, "kind": "linear"})
        out = self.path("baseline.json")
        argv = ["evaluate", "--dataset", self.dataset, "--predictor", "camera-frame", "--config", config]
        self.assertEqual(main(argv + ["--label", "moving", "--out", out]), EXIT_OK)
        with open(out) as f:
            self.assertEqual(json.load(f)["label"], "moving")
        with open(f"{out}.manifest.json") as f:
            manifest = json.load(f)
        self.assertEqual(manifest["config"]["camera"]["kind"], "linear")
        self.assertEqual(manifest["seed"], 3)

    def test_gmr_evaluate_needs_a_checkpoint(self) -> None:
        self.assertEqual(main(["evaluate", "--dataset", self.dataset, "--out", self.path("x.json")]), EXIT_INPUT)

    def test_empty_report_exits_with_input_error(self) -> None:
        self.assertEqual(main(["report", "--out", self.path("empty.json")]), EXIT_INPUT)
        with self.assertRaises(InvalidInputError):
            cmd_report([], self.path("empty.json"))

    def test_report_rejects_other_json(self) -> None:
        junk = self.path("junk.json")
        with open(junk, "w") as f:
            json.dump([1, 2, 3], f)
        self.assertEqual(main(["report", junk, "--out", self.path("table.json")]), EXIT_INPUT)


class TestReproducibility(unittest.TestCase):
    """The whole pipeline, run twice with the same seeds."""

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp()
        self.cwd = os.getcwd()

    def tearDown(self) -> None:
        os.chdir(self.cwd)
        shutil.rmtree(self.temp_dir)

    def run_pipeline(self, name: str) -> str:
        """generate, train, infer, evaluate and report inside a fresh directory; manifests hold relative paths."""
        run_dir = os.path.join(self.temp_dir, name)
        os.makedirs(run_dir)
        os.chdir(run_dir)
        try:
            write_config("generate.env", GENERATION)
            write_config("train.env", TRAINING)
            steps = [
                ["generate", "--config", "generate.env", "--out", "train.jsonl"],
                ["train", "--config", "train.env", "--dataset", "train.jsonl", "--out", "model.ckpt"],
                ["infer", "--checkpoint", "model.ckpt", "--input", "train.jsonl", "--out", "traj.jsonl"],
                ["evaluate", "--dataset", "train.jsonl", "--checkpoint", "model.ckpt", "--out", "gmr.json"],
                ["report", "gmr.json", "--out", "table.json"],
            ]
            for argv in steps:
                self.assertEqual(main(argv), EXIT_OK, msg=" ".join(argv))
        finally:
            os.chdir(self.cwd)
        return run_dir

    def test_repeated_pipelines_write_identical_files(self) -> None:
        first, second = self.run_pipeline("first"), self.run_pipeline("second")
        names = sorted(os.listdir(first))
        self.assertEqual(names, sorted(os.listdir(second)))
        for expected in ("model.ckpt", "model.log.csv", "traj.jsonl", "table.csv", "table.json.manifest.json"):
            self.assertIn(expected, names)
        for name in names:
            self.assertEqual(
                read_bytes(os.path.join(first, name)), read_bytes(os.path.join(second, name)), msg=name
            )


def test_manifest_hash_ignores_key_order() -> None:
    """The config hash depends on content only."""
    a = RunManifest("evaluate", {"seed": 1, "local_noise_std": 0.0}, 1)
    b = RunManifest("evaluate", {"local_noise_std": 0.0, "seed": 1}, 1)
    assert a.config_hash == b.config_hash
    assert a.config_hash != RunManifest("evaluate", {"seed": 2, "local_noise_std": 0.0}, 2).config_hash


def test_inference_config_rejects_negative_noise() -> None:
    with pytest.raises(InvalidInputError):
        InferenceConfig(local_noise_std=-0.1)
