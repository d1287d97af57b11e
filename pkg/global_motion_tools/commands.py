"""
Command-line entry points.

    generate    procedural dataset (JSON lines)
    train       checkpoint and CSV training log
    infer       accumulated trajectories of local pose sequences
    evaluate    metric report of a predictor on a dataset
    camera-sim  regressor against the camera-frame baseline under camera motion
    report      metric tables and plot-ready accumulated error curves

Every command takes --config, --seed and --out, and writes <out>.manifest.json
next to its output. Exit codes: 0 success, 2 bad input or usage, 3 numeric
failure.
"""

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np
from colorama import Fore, Style, just_fix_windows_console
from dotenv import load_dotenv

from . import __version__
from .camera import CameraKind, CameraPath
from .config import options_from_mapping, read_flat_config
from .datagen import GenerationConfig, build_dataset, load_dataset, save_dataset
from .errors import GlobalMotionError, InvalidInputError, NumericFailureError
from .factory import PREDICTOR_NAMES, create_predictor
from .logger import get_logger, setup_logging
from .net.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .objective import MetricReport, aggregate_reports, curves_to_csv, reports_to_csv
from .predictors import CameraSimReport, GmrPredictor, simulate_camera
from .rigid_motion import PoseTrajectory
from .trainer import TrainConfig, TrainingLog, train

__all__ = [
    "EXIT_OK",
    "EXIT_INPUT",
    "EXIT_NUMERIC",
    "InferenceConfig",
    "ReportConfig",
    "RunManifest",
    "LocalSequence",
    "read_local_sequences",
    "trajectory_record",
    "cmd_generate",
    "cmd_train",
    "cmd_infer",
    "cmd_evaluate",
    "cmd_camera_sim",
    "cmd_report",
    "build_parser",
    "main",
]

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

TRAJECTORY_FORMAT_VERSION = 1

C = TypeVar("C")


@dataclass
class InferenceConfig:
    """
    Options of infer, evaluate and camera-sim.

    Attributes:
        local_noise_std: Noise added to the regressor's input local poses (radians)
        seed: Seed of that noise
    """
    local_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.local_noise_std >= 0:
            raise InvalidInputError("local_noise_std must be nonnegative")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "InferenceConfig":
        return options_from_mapping(cls, read_flat_config(path))


@dataclass
class ReportConfig:
    """Options of report."""
    aggregate_label: str = "mean"

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ReportConfig":
        return options_from_mapping(cls, read_flat_config(path))


@dataclass
class RunManifest:
    """
    Provenance of one command run.

    Holds no timestamps so that repeated runs write identical manifests.
    """
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    version: str = __version__

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": self.version,
        }

    def save(self, out: Union[str, Path]) -> Path:
        path = manifest_path(out)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def manifest_path(out: Union[str, Path]) -> Path:
    return Path(f"{out}.manifest.json")


def print_status(message: str, kind: str = "info") -> None:
    """One colored status line; errors go to stderr."""
    styles = {
        "info": (Fore.CYAN, "i"),
        "success": (Fore.GREEN, "+"),
        "warning": (Fore.YELLOW, "!"),
        "error": (Fore.RED, "x"),
    }
    color, symbol = styles.get(kind, styles["info"])
    stream = sys.stderr if kind == "error" else sys.stdout
    print(f"{color}[{symbol}]{Style.RESET_ALL} {message}", file=stream)


def _config_dict(config: Any) -> Dict[str, Any]:
    if hasattr(config, "to_dict"):
        return config.to_dict()
    return json.loads(json.dumps(dataclasses.asdict(config)))


def _load_options(cls: Type[C], path: Optional[str], seed: Optional[int]) -> C:
    config = cls.from_file(path) if path else cls()  # type: ignore[attr-defined]
    if seed is not None and "seed" in {f.name for f in dataclasses.fields(config)}:
        config = dataclasses.replace(config, seed=seed)  # type: ignore[type-var]
    return config


def _load_split_config(path: Optional[str], seed: Optional[int]) -> Tuple[InferenceConfig, CameraPath]:
    """InferenceConfig and CameraPath keys may share one file."""
    data: Mapping[str, str] = read_flat_config(path) if path else {}
    inference_keys = {f.name for f in dataclasses.fields(InferenceConfig)}
    inference = options_from_mapping(InferenceConfig, {k: v for k, v in data.items() if k in inference_keys})
    camera = options_from_mapping(CameraPath, {k: v for k, v in data.items() if k not in inference_keys})
    if seed is not None:
        inference = dataclasses.replace(inference, seed=seed)
    return inference, camera


# Local pose and trajectory files

class LocalSequence(NamedTuple):
    local: np.ndarray
    fps: float
    source_id: int
    window_offset: int


def read_local_sequences(path: Union[str, Path]) -> List[LocalSequence]:
    """
    Local pose sequences from a JSON-lines file.

    Each line needs "frames" with a "quat" entry per frame; "fps", "source_id"
    and "window_offset" are optional, so dataset files qualify.

    Raises:
        InvalidInputError: On malformed lines or an empty file
    """
    sequences = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                local = np.array([frame["quat"] for frame in data["frames"]], dtype=np.float64)
                sequences.append(
                    LocalSequence(
                        local=local,
                        fps=float(data.get("fps", 10.0)),
                        source_id=int(data.get("source_id", 0)),
                        window_offset=int(data.get("window_offset", 0)),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise InvalidInputError(f"{path}:{line_no}: not a local pose sequence ({e})") from e
    if not sequences:
        raise InvalidInputError(f"{path} holds no local pose sequences")
    return sequences


def trajectory_record(seq: LocalSequence, traj: PoseTrajectory, dA: np.ndarray, dT: np.ndarray) -> dict:
    """JSON object of one inferred trajectory."""
    return {
        "version": TRAJECTORY_FORMAT_VERSION,
        "source_id": seq.source_id,
        "window_offset": seq.window_offset,
        "fps": traj.fps,
        "poses": [{"R": pose.R.reshape(-1).tolist(), "T": pose.T.tolist()} for pose in traj.poses],
        "dA": dA.tolist(),
        "dT": dT.tolist(),
    }


# Commands

def cmd_generate(config: GenerationConfig, out: Union[str, Path]) -> int:
    """
    Generate and save a dataset.

    Returns:
        Number of windows written

    Raises:
        InvalidInputError: If the configuration yields no windows
    """
    samples = build_dataset(config)
    if not samples:
        raise InvalidInputError(f"no sequence is long enough for a window of {config.window} motions")
    return save_dataset(samples, out)


def cmd_train(
    dataset: Union[str, Path],
    config: TrainConfig,
    out: Union[str, Path],
    resume: Optional[Union[str, Path]] = None,
    eval_dataset: Optional[Union[str, Path]] = None,
    log_path: Optional[Union[str, Path]] = None,
    stop_at: Optional[int] = None,
) -> Checkpoint:
    """Train (or resume) on a dataset file and save the checkpoint."""
    samples = load_dataset(dataset)
    eval_samples = load_dataset(eval_dataset) if eval_dataset else None
    start = load_checkpoint(resume) if resume else None
    log = TrainingLog(log_path, append=start is not None) if log_path else None
    ckpt = train(samples, config, resume=start, eval_samples=eval_samples, log=log, stop_at=stop_at)
    save_checkpoint(out, ckpt)
    return ckpt


def cmd_infer(
    checkpoint: Union[str, Path],
    inputs: Union[str, Path],
    out: Union[str, Path],
    config: Optional[InferenceConfig] = None,
) -> int:
    """
    Accumulate the regressor's motions for every sequence of a local pose file.

    Each output trajectory has as many poses as its input has frames and starts
    at the identity.

    Returns:
        Number of trajectories written
    """
    config = config or InferenceConfig()
    params = load_checkpoint(checkpoint).params
    predictor = GmrPredictor(params, local_noise_std=config.local_noise_std, seed=config.seed)
    sequences = read_local_sequences(inputs)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for seq in sequences:
            traj, dA, dT = predictor.infer(
                seq.local, fps=seq.fps, source_id=seq.source_id, window_offset=seq.window_offset
            )
            f.write(json.dumps(trajectory_record(seq, traj, dA, dT), sort_keys=True, separators=(",", ":")))
            f.write("\n")
    logger.info(f"Wrote {len(sequences)} trajectories to {out}")
    return len(sequences)


def cmd_evaluate(
    dataset: Union[str, Path],
    out: Union[str, Path],
    predictor: str = "gmr",
    checkpoint: Optional[Union[str, Path]] = None,
    config: Optional[InferenceConfig] = None,
    camera: Optional[CameraPath] = None,
    label: Optional[str] = None,
) -> MetricReport:
    """Score a predictor on a dataset and save the report (JSON plus one-row CSV)."""
    config = config or InferenceConfig()
    kwargs: Dict[str, Any] = {}
    if predictor == "gmr":
        kwargs = {"local_noise_std": config.local_noise_std, "seed": config.seed}
    model = create_predictor(predictor, checkpoint=checkpoint, camera_path=camera, **kwargs)
    report = model.evaluate(load_dataset(dataset), label=label or predictor)
    report.save(out)
    return report


def cmd_camera_sim(
    dataset: Union[str, Path],
    camera: CameraPath,
    checkpoint: Union[str, Path],
    out: Union[str, Path],
    config: Optional[InferenceConfig] = None,
) -> CameraSimReport:
    """Compare the regressor and the camera-frame baseline under a camera path."""
    config = config or InferenceConfig()
    params = load_checkpoint(checkpoint).params
    report = simulate_camera(
        load_dataset(dataset), camera, params, local_noise_std=config.local_noise_std, seed=config.seed
    )
    report.save(out)
    return report


def load_reports(path: Union[str, Path]) -> List[MetricReport]:
    """Reports from an evaluate output, a camera-sim output or a previous report output."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: {e}") from e
    if isinstance(data, dict) and "reports" in data:
        return [MetricReport.from_dict(item) for item in data["reports"]]
    if isinstance(data, dict):
        return [MetricReport.from_dict(data)]
    raise InvalidInputError(f"{path} is not a metric report")


def cmd_report(
    inputs: Sequence[Union[str, Path]], out: Union[str, Path], config: Optional[ReportConfig] = None
) -> List[Path]:
    """
    Collect metric files into one table.

    Writes <out> (JSON with every report and their mean), <out>.csv (one row per
    report, then the mean) and <out stem>_curves.csv (accumulated error per frame).

    Raises:
        InvalidInputError: If no inputs are given
    """
    config = config or ReportConfig()
    if not inputs:
        raise InvalidInputError("report needs at least one metric file")
    reports = [report for path in inputs for report in load_reports(path)]
    aggregate = aggregate_reports(reports, label=config.aggregate_label)

    out = Path(out)
    table = out.with_suffix(".csv")
    curves = out.with_name(f"{out.stem}_curves.csv")
    with open(out, "w", encoding="utf-8") as f:
        payload = {"reports": [r.to_dict() for r in reports], "aggregate": aggregate.to_dict()}
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(table, "w", encoding="utf-8", newline="") as f:
        f.write(reports_to_csv(reports + [aggregate]))
    with open(curves, "w", encoding="utf-8", newline="") as f:
        f.write(curves_to_csv(reports))
    logger.info(f"Reported {len(reports)} metric sets to {out}")
    return [out, table, curves]


# Argument handling

def _run_generate(args: argparse.Namespace) -> RunManifest:
    config = _load_options(GenerationConfig, args.config, args.seed)
    count = cmd_generate(config, args.out)
    print_status(f"Generated {count} windows -> {args.out}", "success")
    return RunManifest("generate", _config_dict(config), config.seed, inputs=[], outputs=[str(args.out)])


def _run_train(args: argparse.Namespace) -> RunManifest:
    config = _load_options(TrainConfig, args.config, args.seed)
    log_path = args.log or str(Path(args.out).with_suffix(".log.csv"))
    ckpt = cmd_train(args.dataset, config, args.out, args.resume, args.eval_dataset, log_path, args.stop_at)
    print_status(f"Trained to step {ckpt.step} -> {args.out}", "success")
    inputs = [str(args.dataset)] + [str(p) for p in (args.eval_dataset, args.resume) if p]
    return RunManifest("train", _config_dict(config), config.seed, inputs=inputs, outputs=[str(args.out), log_path])


def _run_infer(args: argparse.Namespace) -> RunManifest:
    config, _ = _load_split_config(args.config, args.seed)
    count = cmd_infer(args.checkpoint, args.input, args.out, config)
    print_status(f"Inferred {count} trajectories -> {args.out}", "success")
    return RunManifest(
        "infer",
        _config_dict(config),
        config.seed,
        inputs=[str(args.checkpoint), str(args.input)],
        outputs=[str(args.out)],
    )


def _run_evaluate(args: argparse.Namespace) -> RunManifest:
    config, camera = _load_split_config(args.config, args.seed)
    report = cmd_evaluate(args.dataset, args.out, args.predictor, args.checkpoint, config, camera, args.label)
    print_status(
        f"{report.label}: OME {report.ome:.3f} deg, TME {report.tme:.2f} mm, VME {report.vme:.2f} mm", "success"
    )
    inputs = [str(args.dataset)] + ([str(args.checkpoint)] if args.checkpoint else [])
    outputs = [str(args.out), str(Path(args.out).with_suffix(".csv"))]
    merged = {"predictor": args.predictor, **_config_dict(config), "camera": camera.to_dict()}
    return RunManifest("evaluate", merged, config.seed, inputs=inputs, outputs=outputs)


def _run_camera_sim(args: argparse.Namespace) -> RunManifest:
    config, camera = _load_split_config(args.config, args.seed)
    if args.camera:
        camera = dataclasses.replace(camera, kind=CameraKind(args.camera))
    report = cmd_camera_sim(args.dataset, camera, args.checkpoint, args.out, config)
    for item in report.reports():
        print_status(f"{item.label}: OME {item.ome:.3f} deg, TME {item.tme:.2f} mm, VME {item.vme:.2f} mm")
    merged = {**_config_dict(config), "camera": camera.to_dict()}
    outputs = [str(args.out), str(Path(args.out).with_suffix(".csv"))]
    return RunManifest(
        "camera-sim", merged, config.seed, inputs=[str(args.dataset), str(args.checkpoint)], outputs=outputs
    )


def _run_report(args: argparse.Namespace) -> RunManifest:
    config = _load_options(ReportConfig, args.config, args.seed)
    outputs = cmd_report(args.inputs, args.out, config)
    print_status(f"Report written -> {', '.join(str(p) for p in outputs)}", "success")
    return RunManifest(
        "report",
        _config_dict(config),
        args.seed,
        inputs=[str(p) for p in args.inputs],
        outputs=[str(p) for p in outputs],
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmr-tools", description="Global motion regression toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")
    parser.add_argument("--log-file", help="Also append log lines to this file")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    Handler = Callable[[argparse.Namespace], RunManifest]

    def add_command(name: str, handler: Handler, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="Flat key=value config file")
        cmd.add_argument("--seed", type=int, help="Override the config's seed")
        cmd.add_argument("--out", required=True, help="Output file")
        cmd.set_defaults(handler=handler)
        return cmd

    add_command("generate", _run_generate, "Generate a procedural motion dataset")

    train_cmd = add_command("train", _run_train, "Train the regressor")
    train_cmd.add_argument("--dataset", required=True, help="Training dataset")
    train_cmd.add_argument("--eval-dataset", help="Held-out dataset for the logged metrics")
    train_cmd.add_argument("--resume", help="Checkpoint to continue from")
    train_cmd.add_argument("--log", help="Training log CSV (default: <out> with .log.csv)")
    train_cmd.add_argument("--stop-at", type=int, help="Stop after this step, leaving a resumable checkpoint")

    infer_cmd = add_command("infer", _run_infer, "Infer global trajectories from local poses")
    infer_cmd.add_argument("--checkpoint", required=True)
    infer_cmd.add_argument("--input", required=True, help="JSON-lines local pose file")

    eval_cmd = add_command("evaluate", _run_evaluate, "Score a predictor on a dataset")
    eval_cmd.add_argument("--dataset", required=True)
    eval_cmd.add_argument("--checkpoint", help="Checkpoint of the gmr predictor")
    eval_cmd.add_argument("--predictor", choices=PREDICTOR_NAMES, default="gmr")
    eval_cmd.add_argument("--label", help="Report label (default: predictor name)")

    cam_cmd = add_command("camera-sim", _run_camera_sim, "Compare against the camera-frame baseline")
    cam_cmd.add_argument("--dataset", required=True)
    cam_cmd.add_argument("--checkpoint", required=True)
    cam_cmd.add_argument("--camera", choices=[k.value for k in CameraKind], help="Override the config's path kind")

    report_cmd = add_command("report", _run_report, "Tabulate metric files")
    report_cmd.add_argument("inputs", nargs="*", help="Metric JSON files")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.

    Returns:
        Process exit code
    """
    just_fix_windows_console()
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose or args.log_file:
        setup_logging(logging.DEBUG if args.verbose else None, args.log_file)

    try:
        manifest = args.handler(args)
        manifest.save(args.out)
    except NumericFailureError as e:
        logger.error(f"{args.command} failed: {e}")
        print_status(f"Numeric failure: {e}", "error")
        return EXIT_NUMERIC
    except (GlobalMotionError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print_status(str(e), "error")
        return EXIT_INPUT
    return EXIT_OK
