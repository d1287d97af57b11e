import os
from typing import List, Mapping, Optional, Sequence

import numpy as np

from global_motion_tools.datagen import GenerationConfig, MotionSample, build_dataset
from global_motion_tools.net.gmr import GmrConfig
from global_motion_tools.rigid_motion import GlobalPose, PoseTrajectory, rebase
from global_motion_tools.rot3 import aa_to_mat, random_quaternions, random_rotations

NUM_JOINTS = 23


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> GlobalPose:
    """A uniformly oriented pose with a Gaussian translation."""
    return GlobalPose(random_rotations(1, rng)[0], rng.normal(0.0, scale, 3))


def random_trajectory(
    rng: np.random.Generator,
    frames: int,
    rot_step: float = 0.2,
    trans_step: float = 0.1,
    fps: float = 10.0,
) -> PoseTrajectory:
    """
    A random walk in SE(3).

    Args:
        rng: Random generator
        frames: Number of poses
        rot_step: Std of the per-frame axis-angle increment (radians)
        trans_step: Std of the per-frame translation increment (meters)
        fps: Frame rate
    """
    poses = [random_pose(rng)]
    for _ in range(frames - 1):
        prev = poses[-1]
        rotation = prev.R @ aa_to_mat(rng.normal(0.0, rot_step, 3))
        poses.append(GlobalPose(rotation, prev.T + rng.normal(0.0, trans_step, 3)))
    return PoseTrajectory(poses, fps=fps)


def random_sample(rng: np.random.Generator, motions: int = 6, source_id: int = 0) -> MotionSample:
    """A window with random local poses and a random rebased trajectory."""
    traj = random_trajectory(rng, motions + 1)
    local = random_quaternions((motions + 1) * NUM_JOINTS, rng).reshape(motions + 1, NUM_JOINTS, 4)
    return MotionSample(
        local=local,
        gt_poses=rebase(traj),
        beta=rng.normal(0.0, 1.0, 10),
        source_id=source_id,
    )


def tiny_config(layers: int = 1, hidden: int = 8, proj_dim: int = 8, input_rep: str = "quaternion") -> GmrConfig:
    """A network small enough for finite-difference checks."""
    return GmrConfig(num_joints=NUM_JOINTS, layers=layers, hidden=hidden, proj_dim=proj_dim, input_rep=input_rep)


def tiny_dataset(
    sequences: int = 3,
    window: int = 8,
    stride: int = 8,
    seed: int = 0,
    kinds: Sequence[str] = ("straight-walk", "circle-walk", "turn-in-place"),
    duration: float = 2.4,
) -> List[MotionSample]:
    """Generated windows of `window` motions from short sequences."""
    config = GenerationConfig(
        kinds=tuple(kinds),
        sequences=sequences,
        duration=duration,
        window=window,
        stride=stride,
        seed=seed,
    )
    return build_dataset(config)


def write_config(path: str, values: Mapping[str, object]) -> str:
    """Write a flat key=value config file."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        for key, value in values.items():
            f.write(f"{key}={value}\n")
    return path


def read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def max_abs(x: np.ndarray, y: Optional[np.ndarray] = None) -> float:
    """max |x - y| (or max |x|)."""
    diff = np.asarray(x) if y is None else np.asarray(x) - np.asarray(y)
    return float(np.max(np.abs(diff))) if diff.size else 0.0
