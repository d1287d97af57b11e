"""
Simulated camera paths.

A CameraPath yields camera-to-world poses (R_col, T_col) per frame. The camera
starts `distance` meters in front of the target (+x), `height` meters up,
yawed to face it. Paths:

    static    fixed pose
    linear    translates sideways (+y) at `velocity` m/s, orientation fixed
    panning   fixed position, yaws at `angular_rate` rad/s
    circular  translates on a horizontal circle of `radius` m at `angular_rate` rad/s,
              orientation fixed

A camera-off run uses the static camera at the path's first pose.
"""

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Tuple, Union

import numpy as np

from .config import options_from_mapping, read_flat_config
from .errors import InvalidInputError
from .logger import get_logger
from .rigid_motion import GlobalPose, PoseTrajectory, camera_from_world
from .rot3 import rot_z

__all__ = ["CameraKind", "CameraPath", "camera_trajectory", "camera_frame_trajectory", "static_counterpart"]

logger = get_logger(__name__)


class CameraKind(enum.Enum):
    STATIC = "static"
    LINEAR = "linear"
    PANNING = "panning"
    CIRCULAR = "circular"


@dataclass(frozen=True)
class CameraPath:
    """
    Camera motion parameters.

    Attributes:
        kind: static, linear, panning or circular
        velocity: Sideways speed of a linear path (m/s)
        angular_rate: Yaw rate of a panning path or orbit rate of a circular path (rad/s)
        radius: Circle radius of a circular path (m)
        distance: Initial distance in front of the target (m)
        height: Camera height above the target (m)
        target: Point the camera initially faces
    """
    kind: CameraKind = CameraKind.STATIC
    velocity: float = 0.5
    angular_rate: float = 0.5
    radius: float = 1.0
    distance: float = 4.0
    height: float = 0.5
    target: Tuple[float, ...] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", CameraKind(self.kind))
        except ValueError as e:
            raise InvalidInputError(f"unknown camera path kind {self.kind!r}") from e
        object.__setattr__(self, "target", tuple(float(x) for x in self.target))
        values = (self.velocity, self.angular_rate, self.radius, self.distance, self.height) + self.target
        if len(self.target) != 3 or not all(math.isfinite(v) for v in values):
            raise InvalidInputError("camera path parameters must be finite and the target a 3-vector")
        if self.kind is CameraKind.CIRCULAR and self.radius <= 0:
            raise InvalidInputError("a circular path needs a positive radius")
        if self.kind in (CameraKind.PANNING, CameraKind.CIRCULAR) and self.angular_rate == 0:
            raise InvalidInputError(f"a {self.kind.value} path needs a nonzero angular_rate")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "velocity": self.velocity,
            "angular_rate": self.angular_rate,
            "radius": self.radius,
            "distance": self.distance,
            "height": self.height,
            "target": list(self.target),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CameraPath":
        return options_from_mapping(cls, data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CameraPath":
        return cls.from_dict(read_flat_config(path))


def static_counterpart(path: CameraPath) -> CameraPath:
    """The static path sitting at this path's first pose."""
    return replace(path, kind=CameraKind.STATIC)


def camera_trajectory(path: CameraPath, num_frames: int, fps: float = 10.0) -> PoseTrajectory:
    """
    Camera-to-world poses of a path.

    Args:
        path: Camera parameters
        num_frames: Frames to emit
        fps: Frame rate

    Returns:
        PoseTrajectory of num_frames camera poses
    """
    if num_frames < 1 or fps <= 0:
        raise InvalidInputError("num_frames and fps must be positive")
    target = np.asarray(path.target)
    origin = target + np.array([path.distance, 0.0, path.height])
    # Facing -x, toward the target
    base = rot_z(math.pi)
    times = np.arange(num_frames) / fps

    poses = []
    for t in times:
        rotation, position = base, origin
        if path.kind is CameraKind.LINEAR:
            position = origin + np.array([0.0, path.velocity * t, 0.0])
        elif path.kind is CameraKind.PANNING:
            rotation = base @ rot_z(path.angular_rate * t)
        elif path.kind is CameraKind.CIRCULAR:
            angle = path.angular_rate * t
            position = origin + path.radius * np.array([math.cos(angle) - 1.0, math.sin(angle), 0.0])
        poses.append(GlobalPose(rotation, position))
    return PoseTrajectory(poses, fps=fps, metadata={"camera": path.kind.value})


def camera_frame_trajectory(camera: PoseTrajectory, subject: PoseTrajectory) -> PoseTrajectory:
    """Subject poses expressed in each frame's camera coordinates."""
    if len(camera) != len(subject):
        raise InvalidInputError(f"camera has {len(camera)} frames, subject {len(subject)}")
    poses = [camera_from_world(c, g) for c, g in zip(camera.poses, subject.poses)]
    return PoseTrajectory(poses, fps=subject.fps)
