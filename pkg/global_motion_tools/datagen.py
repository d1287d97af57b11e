"""
Procedural motion data.

Sequences are generated with exactly known global poses, so ground-truth
motions need no capture data. The local pose is a phase-driven gait whose
amplitude follows the walking speed and whose spine twist follows the turning
rate; that coupling is what a regressor can learn to read back.

Dataset files hold one JSON object per line:

    {"version": 1, "source_id": 3, "window_offset": 16, "fps": 10.0,
     "flipped": false, "beta": [10 floats],
     "frames": [{"quat": [[w, x, y, z] x J], "R": [9 floats, row-major], "T": [3 floats]}, ...]}

Keys are sorted and floats are written as their shortest round-trip repr.
"""

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .body import NUM_BETAS, BodySkeleton, default_skeleton
from .config import options_from_mapping, read_flat_config
from .errors import InvalidInputError, ShapeMismatchError
from .logger import get_logger
from .rigid_motion import (
    GlobalPose,
    PoseTrajectory,
    accumulate,
    motions_from_arrays,
    motions_to_arrays,
    rebase,
    trajectory_motions,
)
from .rot3 import aa_to_mat, aa_to_quat, canonicalize_quat, quat_mul

__all__ = [
    "DATASET_FORMAT_VERSION",
    "MotionKind",
    "GeneratorSpec",
    "MotionSequence",
    "MotionSample",
    "GenerationConfig",
    "generate",
    "resample",
    "window",
    "flip",
    "perturb_quaternions",
    "perturb_local",
    "specs_from_config",
    "build_dataset",
    "save_dataset",
    "load_dataset",
]

logger = get_logger(__name__)

DATASET_FORMAT_VERSION = 1


class MotionKind(enum.Enum):
    """Global trajectory families."""
    STRAIGHT_WALK = "straight-walk"
    CIRCLE_WALK = "circle-walk"
    FIGURE_8 = "figure-8"
    TURN_IN_PLACE = "turn-in-place"
    HOP = "hop"
    IDLE = "idle"

    @classmethod
    def parse(cls, value: Union[str, "MotionKind"]) -> "MotionKind":
        try:
            return cls(value)
        except ValueError as e:
            choices = ", ".join(k.value for k in cls)
            raise InvalidInputError(f"unknown motion kind {value!r} (choose from {choices})") from e


@dataclass(frozen=True)
class GeneratorSpec:
    """
    Parameters of one generated sequence.

    Attributes:
        kind: Trajectory family
        duration: Length in seconds
        speed: Walking speed in m/s
        turn_rate: Yaw rate in rad/s (circle-walk, figure-8, turn-in-place)
        gait_freq: Step cycles per second
        fps: Sampling rate in Hz
        hop_height: Peak height of a hop in meters
        seed: Seed for gait jitter and body shape
    """
    kind: MotionKind = MotionKind.STRAIGHT_WALK
    duration: float = 6.4
    speed: float = 1.0
    turn_rate: float = 0.5
    gait_freq: float = 1.8
    fps: float = 10.0
    hop_height: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MotionKind.parse(self.kind))
        for name in ("duration", "speed", "turn_rate", "gait_freq", "fps", "hop_height"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if self.duration <= 0 or self.fps <= 0:
            raise InvalidInputError("duration and fps must be positive")
        if self.speed < 0 or self.gait_freq < 0 or self.hop_height < 0:
            raise InvalidInputError("speed, gait_freq and hop_height must be nonnegative")
        if self.kind in (MotionKind.CIRCLE_WALK, MotionKind.FIGURE_8) and self.turn_rate == 0:
            raise InvalidInputError(f"{self.kind.value} needs a nonzero turn_rate")

    @property
    def num_frames(self) -> int:
        return int(math.floor(self.duration * self.fps + 1e-9)) + 1


@dataclass(eq=False)
class MotionSequence:
    """
    A full generated sequence.

    Attributes:
        local: (F, J, 4) local joint quaternions
        trajectory: F global poses
        beta: (10,) shape coefficients
        source_id: Index of the generating spec
        spec: The spec it came from, if generated
    """
    local: np.ndarray
    trajectory: PoseTrajectory
    beta: np.ndarray
    source_id: int = 0
    spec: Optional[GeneratorSpec] = None

    def __post_init__(self) -> None:
        if self.local.shape[0] != len(self.trajectory):
            raise ShapeMismatchError(
                f"{self.local.shape[0]} local poses for {len(self.trajectory)} global poses"
            )

    @property
    def fps(self) -> float:
        return self.trajectory.fps

    def __len__(self) -> int:
        return len(self.trajectory)


@dataclass(eq=False)
class MotionSample:
    """
    A training window of T + 1 frames and its T motions.

    Attributes:
        local: (T + 1, J, 4) local joint quaternions
        gt_poses: T + 1 global poses, the first the identity after windowing
        beta: (10,) shape coefficients
        fps: Frame rate in Hz
        source_id: Index of the sequence the window came from
        window_offset: First frame of the window in that sequence
        flipped: Whether the window was temporally reversed
    """
    local: np.ndarray
    gt_poses: PoseTrajectory
    beta: np.ndarray
    fps: float = 10.0
    source_id: int = 0
    window_offset: int = 0
    flipped: bool = False
    _motions: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.local = np.asarray(self.local, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.local.ndim != 3 or self.local.shape[-1] != 4:
            raise ShapeMismatchError(f"local poses must be (T + 1, J, 4), got {self.local.shape}")
        if self.local.shape[0] != len(self.gt_poses):
            raise ShapeMismatchError(f"{self.local.shape[0]} local poses for {len(self.gt_poses)} global poses")
        if len(self.gt_poses) < 2:
            raise InvalidInputError("a sample needs at least two frames")
        if self.beta.shape != (NUM_BETAS,):
            raise ShapeMismatchError(f"beta must have {NUM_BETAS} coefficients, got {self.beta.shape}")

    @property
    def num_motions(self) -> int:
        return len(self.gt_poses) - 1

    @property
    def gt_motions(self):
        return motions_from_arrays(*self.motion_arrays())

    def motion_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """(T, 3) axis-angle and (T, 3) translation motions of the ground truth."""
        if self._motions is None:
            self._motions = motions_to_arrays(trajectory_motions(self.gt_poses))
        return self._motions

    def to_dict(self) -> dict:
        return {
            "version": DATASET_FORMAT_VERSION,
            "source_id": int(self.source_id),
            "window_offset": int(self.window_offset),
            "fps": float(self.fps),
            "flipped": bool(self.flipped),
            "beta": [float(b) for b in self.beta],
            "frames": [
                {
                    "quat": q.tolist(),
                    "R": pose.R.reshape(-1).tolist(),
                    "T": pose.T.tolist(),
                }
                for q, pose in zip(self.local, self.gt_poses.poses)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MotionSample":
        version = data.get("version", DATASET_FORMAT_VERSION)
        if version != DATASET_FORMAT_VERSION:
            raise InvalidInputError(f"unsupported dataset format version {version}")
        try:
            frames = data["frames"]
            fps = float(data["fps"])
            poses = [GlobalPose(np.reshape(f["R"], (3, 3)), f["T"]) for f in frames]
            return cls(
                local=np.array([f["quat"] for f in frames], dtype=np.float64),
                gt_poses=PoseTrajectory(poses, fps=fps),
                beta=np.array(data["beta"], dtype=np.float64),
                fps=fps,
                source_id=int(data.get("source_id", 0)),
                window_offset=int(data.get("window_offset", 0)),
                flipped=bool(data.get("flipped", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, InvalidInputError):
                raise
            raise InvalidInputError(f"malformed sample: {e}") from e


# Gait model

def _joint_index(skel: BodySkeleton, name: str) -> Optional[int]:
    # Index into the (J,) local pose, which excludes the root
    try:
        return skel.joint_names.index(name) - 1
    except ValueError:
        return None


def _global_path(spec: GeneratorSpec, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Heading (F,) and root translation (F, 3) for the spec's trajectory family."""
    v, w = spec.speed, spec.turn_rate
    yaw = np.zeros_like(times)
    trans = np.zeros(times.shape + (3,))
    kind = spec.kind

    if kind is MotionKind.STRAIGHT_WALK:
        trans[:, 0] = v * times
    elif kind is MotionKind.CIRCLE_WALK:
        yaw = w * times
        trans[:, 0] = v / w * np.sin(w * times)
        trans[:, 1] = v / w * (1.0 - np.cos(w * times))
    elif kind is MotionKind.FIGURE_8:
        # Lemniscate x = a sin(phi), y = (a / 2) sin(2 phi) with phi = w t; heading follows the tangent
        a = v / abs(w)
        phi = w * times
        trans[:, 0] = a * np.sin(phi)
        trans[:, 1] = 0.5 * a * np.sin(2.0 * phi)
        yaw = np.unwrap(np.arctan2(a * w * np.cos(2.0 * phi), a * w * np.cos(phi)))
    elif kind is MotionKind.TURN_IN_PLACE:
        yaw = w * times
    elif kind is MotionKind.HOP:
        trans[:, 0] = v * times
        trans[:, 2] = spec.hop_height * np.sin(math.pi * spec.gait_freq * times) ** 2
    return yaw, trans


def _local_gait(
    spec: GeneratorSpec,
    skel: BodySkeleton,
    times: np.ndarray,
    yaw_rate: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """(F, J, 3) local axis-angle pose."""
    scale = rng.uniform(0.85, 1.15)
    phase0 = rng.uniform(0.0, 2.0 * math.pi)
    aa = np.zeros((times.shape[0], skel.num_joints, 3))
    joints = {name: _joint_index(skel, name) for name in skel.joint_names}

    def set_axis(name: str, axis: int, values) -> None:
        j = joints.get(name)
        if j is not None and j >= 0:
            aa[:, j, axis] += values

    kind = spec.kind
    if kind is MotionKind.IDLE:
        set_axis("left_knee", 1, 0.05)
        set_axis("right_knee", 1, 0.05)
        set_axis("left_elbow", 1, -0.1)
        set_axis("right_elbow", 1, -0.1)
        return aa

    phase = 2.0 * math.pi * spec.gait_freq * times + phase0
    if kind is MotionKind.HOP:
        # Crouched on the ground, extended at the top of each hop
        crouch = np.cos(math.pi * spec.gait_freq * times) ** 2
        lean = min(0.3 * spec.speed, 0.4) * scale
        for side in ("left", "right"):
            set_axis(f"{side}_hip", 1, -0.5 * scale * crouch - lean)
            set_axis(f"{side}_knee", 1, 0.9 * scale * crouch)
            set_axis(f"{side}_ankle", 1, -0.4 * scale * crouch)
            set_axis(f"{side}_shoulder", 1, 0.7 * scale * (1.0 - crouch))
        set_axis("spine1", 1, 0.5 * lean)
        return aa

    if kind is MotionKind.TURN_IN_PLACE:
        stride = 0.15 * scale
    else:
        stride = min(0.4 * spec.speed, 0.7) * scale
    swing = np.sin(phase)
    set_axis("left_hip", 1, stride * swing)
    set_axis("right_hip", 1, -stride * swing)
    set_axis("left_knee", 1, 1.2 * stride * 0.5 * (1.0 - np.cos(phase)))
    set_axis("right_knee", 1, 1.2 * stride * 0.5 * (1.0 + np.cos(phase)))
    set_axis("left_ankle", 1, 0.3 * stride * swing)
    set_axis("right_ankle", 1, -0.3 * stride * swing)
    set_axis("left_shoulder", 1, -0.8 * stride * swing)
    set_axis("right_shoulder", 1, 0.8 * stride * swing)
    set_axis("left_elbow", 1, -0.2 - 0.3 * stride)
    set_axis("right_elbow", 1, -0.2 - 0.3 * stride)
    set_axis("spine2", 2, -0.1 * stride * swing)
    # Lean into turns
    set_axis("spine1", 2, np.clip(0.3 * yaw_rate, -0.6, 0.6))
    set_axis("head", 2, np.clip(0.2 * yaw_rate, -0.4, 0.4))
    return aa


def generate(spec: GeneratorSpec, skel: Optional[BodySkeleton] = None, source_id: int = 0) -> MotionSequence:
    """
    Generate one sequence.

    Args:
        spec: Generator parameters
        skel: Body model providing the joint layout (default skeleton if None)
        source_id: Identifier stored with the sequence

    Returns:
        MotionSequence with exact global poses
    """
    skel = skel or default_skeleton()
    rng = np.random.default_rng(spec.seed)
    times = np.arange(spec.num_frames) / spec.fps

    yaw, trans = _global_path(spec, times)
    yaw_rate = np.gradient(yaw, 1.0 / spec.fps) if times.shape[0] > 1 else np.zeros_like(yaw)
    rotations = aa_to_mat(np.stack([np.zeros_like(yaw), np.zeros_like(yaw), yaw], axis=-1))
    trajectory = PoseTrajectory.from_arrays(rotations, trans, fps=spec.fps)

    beta = np.clip(rng.normal(0.0, 1.0, NUM_BETAS), -2.0, 2.0)
    local = aa_to_quat(_local_gait(spec, skel, times, yaw_rate, rng))
    logger.debug(f"Generated {spec.kind.value} sequence with {spec.num_frames} frames (seed={spec.seed})")
    return MotionSequence(local=local, trajectory=trajectory, beta=beta, source_id=source_id, spec=spec)


def resample(seq: MotionSequence, fps: float) -> MotionSequence:
    """
    Decimate a sequence to a lower frame rate.

    Raises:
        InvalidInputError: If fps does not divide the sequence's rate by an integer factor
    """
    ratio = seq.fps / fps
    factor = int(round(ratio))
    if fps <= 0 or factor < 1 or abs(ratio - factor) > 1e-9:
        raise InvalidInputError(f"cannot resample {seq.fps} fps to {fps} fps by an integer factor")
    if factor == 1:
        return seq
    poses = seq.trajectory.poses[::factor]
    return MotionSequence(
        local=seq.local[::factor].copy(),
        trajectory=PoseTrajectory(poses, fps=fps, metadata=dict(seq.trajectory.metadata)),
        beta=seq.beta,
        source_id=seq.source_id,
        spec=seq.spec,
    )


def window(seq: MotionSequence, length: int, stride: int = 1) -> List[MotionSample]:
    """
    Cut overlapping windows of `length` frames (T + 1), each rebased so its first pose is the identity.

    Returns an empty list, with a warning, when the sequence is shorter than one window.
    """
    if length < 2 or stride < 1:
        raise InvalidInputError("window length must be >= 2 and stride >= 1")
    total = len(seq)
    if total < length:
        logger.warning(f"Sequence {seq.source_id} has {total} frames, shorter than the window of {length}")
        return []
    samples = []
    for offset in range(0, total - length + 1, stride):
        poses = PoseTrajectory(seq.trajectory.poses[offset:offset + length], fps=seq.fps)
        samples.append(
            MotionSample(
                local=seq.local[offset:offset + length].copy(),
                gt_poses=rebase(poses),
                beta=seq.beta.copy(),
                fps=seq.fps,
                source_id=seq.source_id,
                window_offset=offset,
            )
        )
    return samples


def flip(sample: MotionSample) -> MotionSample:
    """
    Reverse a sample in time.

    Flipped motion i is the inverse of original motion T - 1 - i:
    dR'_i = dR_{T-1-i}^T and dT'_i = -dR_{T-1-i}^T dT_{T-1-i}. Poses are
    re-accumulated from the identity.
    """
    dA, dT = sample.motion_arrays()
    rev_dA = dA[::-1]
    rev_dT = dT[::-1]
    rot_t = np.swapaxes(aa_to_mat(rev_dA), -1, -2)
    flipped_dT = -np.einsum("nij,nj->ni", rot_t, rev_dT)
    flipped_dA = -rev_dA
    poses = accumulate(GlobalPose.identity(), motions_from_arrays(flipped_dA, flipped_dT), fps=sample.fps)
    return MotionSample(
        local=sample.local[::-1].copy(),
        gt_poses=poses,
        beta=sample.beta.copy(),
        fps=sample.fps,
        source_id=sample.source_id,
        window_offset=sample.window_offset,
        flipped=not sample.flipped,
    )


def perturb_quaternions(local: np.ndarray, noise_std: float, seed: Union[int, Sequence[int]] = 0) -> np.ndarray:
    """
    Compose every joint rotation with a random rotation whose axis-angle components have std noise_std.

    Args:
        local: (..., J, 4) joint quaternions
        noise_std: Noise level in radians; 0 returns an unchanged copy
        seed: Seed of the noise

    Returns:
        Perturbed canonical quaternions of the same shape
    """
    if not noise_std >= 0:
        raise InvalidInputError(f"noise_std must be nonnegative, got {noise_std}")
    local = np.asarray(local, dtype=np.float64)
    if noise_std == 0:
        return local.copy()
    rng = np.random.default_rng(seed)
    noise = aa_to_quat(rng.normal(0.0, noise_std, local.shape[:-1] + (3,)))
    return canonicalize_quat(quat_mul(local, noise))


def perturb_local(sample: MotionSample, noise_std: float, seed: Union[int, Sequence[int]] = 0) -> MotionSample:
    """Noisy copy of a sample's local poses; ground-truth fields are left untouched."""
    return replace(sample, local=perturb_quaternions(sample.local, noise_std, seed))


# Dataset assembly

@dataclass
class GenerationConfig:
    """
    Settings of the generate command.

    Attributes:
        kinds: Comma-separated trajectory families, used round robin
        sequences: Number of generated sequences
        duration: Seconds per sequence
        speed_min, speed_max: Range of walking speeds (m/s)
        turn_rate_min, turn_rate_max: Range of yaw-rate magnitudes (rad/s)
        gait_freq: Step cycles per second
        generator_fps: Rate the generator samples at
        fps: Rate of the emitted dataset
        window: Motions per window (T)
        stride: Frames between window starts
        seed: Base seed
    """
    kinds: Tuple[str, ...] = ("straight-walk", "circle-walk", "turn-in-place")
    sequences: int = 10
    duration: float = 6.4
    speed_min: float = 0.5
    speed_max: float = 1.5
    turn_rate_min: float = 0.2
    turn_rate_max: float = 0.8
    gait_freq: float = 1.8
    generator_fps: float = 30.0
    fps: float = 10.0
    window: int = 64
    stride: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        self.kinds = tuple(MotionKind.parse(k).value for k in self.kinds)
        if not self.kinds:
            raise InvalidInputError("at least one motion kind is required")
        if self.sequences < 1 or self.window < 1 or self.stride < 1:
            raise InvalidInputError("sequences, window and stride must be positive")
        if not (0 <= self.speed_min <= self.speed_max) or not (0 < self.turn_rate_min <= self.turn_rate_max):
            raise InvalidInputError("speed and turn-rate ranges must be ordered and nonnegative")

    @classmethod
    def from_dict(cls, data: Mapping) -> "GenerationConfig":
        return options_from_mapping(cls, data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "GenerationConfig":
        return cls.from_dict(read_flat_config(path))


def specs_from_config(config: GenerationConfig) -> List[GeneratorSpec]:
    """One GeneratorSpec per sequence, with parameters drawn from the configured ranges."""
    specs = []
    for i in range(config.sequences):
        rng = np.random.default_rng([config.seed, i])
        kind = MotionKind(config.kinds[i % len(config.kinds)])
        speed = float(rng.uniform(config.speed_min, config.speed_max))
        turn_rate = float(rng.uniform(config.turn_rate_min, config.turn_rate_max)) * float(rng.choice([-1.0, 1.0]))
        if kind is MotionKind.TURN_IN_PLACE:
            speed = 0.0
        specs.append(
            GeneratorSpec(
                kind=kind,
                duration=config.duration,
                speed=speed,
                turn_rate=turn_rate,
                gait_freq=config.gait_freq,
                fps=config.generator_fps,
                seed=int(rng.integers(0, 2 ** 31 - 1)),
            )
        )
    return specs


def build_dataset(config: GenerationConfig, skel: Optional[BodySkeleton] = None) -> List[MotionSample]:
    """Generate, resample and window every configured sequence."""
    skel = skel or default_skeleton()
    samples: List[MotionSample] = []
    for source_id, spec in enumerate(specs_from_config(config)):
        seq = resample(generate(spec, skel, source_id=source_id), config.fps)
        samples.extend(window(seq, config.window + 1, config.stride))
    logger.info(f"Built {len(samples)} windows from {config.sequences} sequences")
    return samples


def save_dataset(samples: Iterable[MotionSample], path: Union[str, Path]) -> int:
    """Write samples as JSON lines; returns the count written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sample in samples:
            f.write(json.dumps(sample.to_dict(), sort_keys=True, separators=(",", ":")))
            f.write("\n")
            count += 1
    logger.info(f"Wrote {count} samples to {path}")
    return count


def load_dataset(path: Union[str, Path]) -> List[MotionSample]:
    """
    Read a JSON-lines dataset.

    Raises:
        InvalidInputError: If a line is not a valid sample
    """
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                samples.append(MotionSample.from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise InvalidInputError(f"{path}:{line_no}: {e}") from e
    logger.debug(f"Loaded {len(samples)} samples from {path}")
    return samples
