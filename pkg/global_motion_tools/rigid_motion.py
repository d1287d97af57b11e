"""
Global poses, global motions, and trajectories in SE(3).

A GlobalPose (R, T) maps body coordinates to world coordinates. A GlobalMotion
(dA, dT) is the frame-to-frame displacement expressed in the body frame of the
earlier pose:

    R' = R @ aa_to_mat(dA)
    T' = R @ dT + T

A window of n poses has n - 1 motions; motion i maps pose i to pose i + 1.
Units are meters and radians throughout.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .logger import get_logger
from .rot3 import aa_to_mat, check_rotation, mat_to_aa

__all__ = [
    "GlobalPose",
    "GlobalMotion",
    "PoseTrajectory",
    "compose",
    "extract_motion",
    "accumulate",
    "reframe",
    "rebase",
    "trajectory_motions",
    "world_from_camera",
    "camera_from_world",
    "motions_to_arrays",
    "motions_from_arrays",
    "perturb_motions",
]

logger = get_logger(__name__)


def _vector3(value: Sequence[float], what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} must be a finite 3-vector, got {value!r}")
    return arr


@dataclass(frozen=True, eq=False)
class GlobalPose:
    """
    Absolute pose of the body in a reference frame.

    Attributes:
        R: World orientation, 3x3 rotation matrix
        T: World translation in meters
    """
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "R", check_rotation(np.asarray(self.R, dtype=np.float64).reshape(3, 3)))
        object.__setattr__(self, "T", _vector3(self.T, "pose translation"))

    @classmethod
    def identity(cls) -> "GlobalPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "GlobalPose":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[:3, :3], matrix[:3, 3])

    def as_matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        out = np.eye(4)
        out[:3, :3] = self.R
        out[:3, 3] = self.T
        return out

    def inverse(self) -> "GlobalPose":
        return GlobalPose(self.R.T, -self.R.T @ self.T)

    def __matmul__(self, other: "GlobalPose") -> "GlobalPose":
        return GlobalPose(self.R @ other.R, self.R @ other.T + self.T)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points from body to world coordinates."""
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.T


@dataclass(frozen=True, eq=False)
class GlobalMotion:
    """
    Frame-to-frame displacement.

    Attributes:
        dA: Orientation motion as an axis-angle vector (radians)
        dT: Translation motion in meters, in the body frame of the earlier pose
    """
    dA: np.ndarray
    dT: np.ndarray

    def __post_init__(self) -> None:
        dA = _vector3(self.dA, "orientation motion")
        if np.linalg.norm(dA) > np.pi + 1e-12:
            raise InvalidInputError(f"orientation motion outside the canonical ball: |dA| = {np.linalg.norm(dA)}")
        object.__setattr__(self, "dA", dA)
        object.__setattr__(self, "dT", _vector3(self.dT, "translation motion"))

    @classmethod
    def identity(cls) -> "GlobalMotion":
        return cls(np.zeros(3), np.zeros(3))

    @property
    def rotation(self) -> np.ndarray:
        return aa_to_mat(self.dA)

    def as_pose(self) -> GlobalPose:
        """The motion read as a pose relative to the earlier frame."""
        return GlobalPose(self.rotation, self.dT)

    def as_matrix(self) -> np.ndarray:
        return self.as_pose().as_matrix()

    def inverse(self) -> "GlobalMotion":
        rotation_t = self.rotation.T
        return GlobalMotion(-self.dA, -rotation_t @ self.dT)


@dataclass
class PoseTrajectory:
    """
    Ordered global poses sampled at a fixed frame rate.

    Attributes:
        poses: One GlobalPose per frame
        fps: Frame rate in Hz
    """
    poses: List[GlobalPose]
    fps: float = 10.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.poses) < 1:
            raise InvalidInputError("a trajectory needs at least one pose")
        if not self.fps > 0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, index: int) -> GlobalPose:
        return self.poses[index]

    def rotations(self) -> np.ndarray:
        return np.stack([pose.R for pose in self.poses])

    def translations(self) -> np.ndarray:
        return np.stack([pose.T for pose in self.poses])

    @classmethod
    def from_arrays(cls, rotations: np.ndarray, translations: np.ndarray, fps: float = 10.0) -> "PoseTrajectory":
        return cls([GlobalPose(r, t) for r, t in zip(rotations, translations)], fps=fps)


def compose(g: GlobalPose, dg: GlobalMotion) -> GlobalPose:
    """
    Apply a motion to a pose: R' = R dR, T' = R dT + T.

    Args:
        g: Pose at frame i
        dg: Motion from frame i to frame i + 1

    Returns:
        Pose at frame i + 1
    """
    return GlobalPose(g.R @ dg.rotation, g.R @ dg.dT + g.T)


def extract_motion(g1: GlobalPose, g2: GlobalPose) -> GlobalMotion:
    """Motion taking g1 to g2: dR = R1^T R2, dT = R1^T (T2 - T1)."""
    return GlobalMotion(mat_to_aa(g1.R.T @ g2.R), g1.R.T @ (g2.T - g1.T))


def accumulate(g1: GlobalPose, motions: Iterable[GlobalMotion], fps: float = 10.0) -> PoseTrajectory:
    """
    Integrate motions from an initial pose.

    Args:
        g1: Initial pose (identity at inference time)
        motions: Motions 1..n
        fps: Frame rate attached to the result

    Returns:
        Trajectory of length len(motions) + 1 starting at g1
    """
    poses = [g1]
    for motion in motions:
        poses.append(compose(poses[-1], motion))
    return PoseTrajectory(poses, fps=fps)


def trajectory_motions(traj: PoseTrajectory) -> List[GlobalMotion]:
    """extract_motion over consecutive pose pairs."""
    return [extract_motion(a, b) for a, b in zip(traj.poses[:-1], traj.poses[1:])]


def reframe(traj: PoseTrajectory, w: GlobalPose) -> PoseTrajectory:
    """Left-multiply every pose by w; the motion sequence is unchanged."""
    return PoseTrajectory([w @ pose for pose in traj.poses], fps=traj.fps, metadata=dict(traj.metadata))


def rebase(traj: PoseTrajectory) -> PoseTrajectory:
    """Reframe so that the first pose is exactly the identity."""
    rebased = reframe(traj, traj.poses[0].inverse())
    # Pin frame 0 to the exact identity; the product above may carry rounding
    rebased.poses[0] = GlobalPose.identity()
    return rebased


def world_from_camera(cam: GlobalPose, subj_cam: GlobalPose) -> GlobalPose:
    """
    Subject pose in world coordinates from its camera-frame pose.

    Args:
        cam: Camera-to-world pose (R_col, T_col)
        subj_cam: Subject pose in camera coordinates (R_c, T_c)

    Returns:
        (R_col R_c, R_col T_c + T_col)
    """
    return GlobalPose(cam.R @ subj_cam.R, cam.R @ subj_cam.T + cam.T)


def camera_from_world(cam: GlobalPose, subj_world: GlobalPose) -> GlobalPose:
    """Inverse of world_from_camera: the subject pose as seen from the camera."""
    return GlobalPose(cam.R.T @ subj_world.R, cam.R.T @ (subj_world.T - cam.T))


def motions_to_arrays(motions: Sequence[GlobalMotion]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack motions into (n, 3) dA and (n, 3) dT arrays."""
    if not motions:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.stack([m.dA for m in motions]), np.stack([m.dT for m in motions])


def motions_from_arrays(dA: np.ndarray, dT: np.ndarray) -> List[GlobalMotion]:
    return [GlobalMotion(a, t) for a, t in zip(np.asarray(dA), np.asarray(dT))]


def perturb_motions(
    motions: Sequence[GlobalMotion],
    rot_std: float,
    trans_std: float,
    rng: Optional[np.random.Generator] = None,
) -> List[GlobalMotion]:
    """
    Inject i.i.d. Gaussian noise into every motion.

    Args:
        motions: Clean motions
        rot_std: Standard deviation of the axis-angle noise per component (radians)
        trans_std: Standard deviation of the translation noise per component (meters)
        rng: Random generator

    Returns:
        Noisy motions; rotation noise is composed on the right of each dR
    """
    rng = rng if rng is not None else np.random.default_rng()
    noisy = []
    for motion in motions:
        noise_r = aa_to_mat(rng.normal(0.0, rot_std, 3))
        noisy.append(GlobalMotion(mat_to_aa(motion.rotation @ noise_r), motion.dT + rng.normal(0.0, trans_std, 3)))
    logger.debug(f"Perturbed {len(noisy)} motions (rot_std={rot_std}, trans_std={trans_std})")
    return noisy
