"""
Toy articulated body model.

The skeleton mirrors the SMPL kinematic tree (root + 23 joints) but replaces
the skinned surface with rigid boxes: every joint j >= 1 owns a bone running
from its parent to it, rigidly attached to the parent's frame, and the root
owns a pelvis box. Body frame: x forward, y left, z up.

Skeleton JSON format (version 1):

    {
      "version": 1,
      "joint_names": [...],            # J + 1 names
      "parents": [-1, 0, 0, ...],      # parents[j] < j, root first
      "rest_offsets": [[x, y, z], ...],      # offset of joint j from its parent (m)
      "vertex_template": [[[x, y, z], ...], ...],  # per bone, same count per bone (m)
      "shape_basis": [[...], ...]      # 10 rows x (J + 1) columns
    }

Shape coefficient k scales the lengths of the bones in its column set by
(1 + 0.05 * beta_k); contributions add linearly.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInputError, ShapeMismatchError
from .logger import get_logger
from .rigid_motion import GlobalMotion, GlobalPose
from .rot3 import canonicalize_quat, quat_to_mat

__all__ = [
    "NUM_BETAS",
    "SHAPE_STEP",
    "JOINT_NAMES",
    "BodySkeleton",
    "PosedBody",
    "default_skeleton",
    "load_skeleton",
    "save_skeleton",
    "forward_kinematics",
    "mesh_offset",
    "posed_points",
    "rest_vertices",
    "skeleton_bone_lengths",
    "template_bone_lengths",
]

logger = get_logger(__name__)

NUM_BETAS = 10
SHAPE_STEP = 0.05
SKELETON_FORMAT_VERSION = 1

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)

_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

_REST_OFFSETS = (
    (0.0, 0.0, 0.0),
    (0.0, 0.09, -0.08), (0.0, -0.09, -0.08), (0.0, 0.0, 0.11),
    (0.0, 0.01, -0.38), (0.0, -0.01, -0.38), (0.0, 0.0, 0.13),
    (0.0, 0.0, -0.40), (0.0, 0.0, -0.40), (0.0, 0.0, 0.05),
    (0.12, 0.0, -0.05), (0.12, 0.0, -0.05), (0.0, 0.0, 0.21),
    (0.0, 0.07, 0.12), (0.0, -0.07, 0.12), (0.02, 0.0, 0.09),
    (0.0, 0.12, 0.03), (0.0, -0.12, 0.03),
    (0.0, 0.03, -0.26), (0.0, -0.03, -0.26),
    (0.0, 0.01, -0.25), (0.0, -0.01, -0.25),
    (0.0, 0.0, -0.08), (0.0, 0.0, -0.08),
)

# Bone subsets scaled by each shape coefficient
_SHAPE_GROUPS = (
    tuple(range(1, 24)),                # stature
    (1, 2, 4, 5, 7, 8, 10, 11),         # legs
    tuple(range(16, 24)),               # arms
    (3, 6, 9, 12),                      # spine
    (1, 4, 7, 10),                      # left leg
    (2, 5, 8, 11),                      # right leg
    (13, 16, 18, 20, 22),               # left arm
    (14, 17, 19, 21, 23),               # right arm
    (12, 15),                           # neck and head
    (13, 14, 16, 17),                   # shoulder width
)

_BONE_HALF_WIDTH = 0.04
_PELVIS_HALF_EXTENT = (0.08, 0.12, 0.06)


@dataclass(frozen=True, eq=False)
class BodySkeleton:
    """
    Immutable skeleton definition.

    Attributes:
        parents: (J + 1,) parent index per joint, -1 for the root
        rest_offsets: (J + 1, 3) offset of each joint from its parent in meters
        vertex_template: (J + 1, V, 3) vertices of each bone in its parent's frame
        shape_basis: (10, J + 1) linear map from shape coefficients to bone length changes
        joint_names: Names of the J + 1 joints
    """
    parents: np.ndarray
    rest_offsets: np.ndarray
    vertex_template: np.ndarray
    shape_basis: np.ndarray
    joint_names: Tuple[str, ...] = JOINT_NAMES

    def __post_init__(self) -> None:
        parents = np.array(self.parents, dtype=np.int64)
        offsets = np.array(self.rest_offsets, dtype=np.float64)
        template = np.array(self.vertex_template, dtype=np.float64)
        basis = np.array(self.shape_basis, dtype=np.float64)
        n = parents.shape[0]

        if parents.ndim != 1 or n < 2 or parents[0] != -1:
            raise InvalidInputError("parents must list the root (-1) first")
        if np.any(parents[1:] < 0) or np.any(parents[1:] >= np.arange(1, n)):
            raise InvalidInputError("every joint's parent must precede it")
        if offsets.shape != (n, 3):
            raise ShapeMismatchError(f"rest_offsets must be ({n}, 3), got {offsets.shape}")
        if template.ndim != 3 or template.shape[0] != n or template.shape[2] != 3:
            raise ShapeMismatchError(f"vertex_template must be ({n}, V, 3), got {template.shape}")
        if template.shape[0] * template.shape[1] < 4 * n:
            raise ShapeMismatchError("the skeleton needs at least 4 vertices per bone")
        if basis.shape != (NUM_BETAS, n):
            raise ShapeMismatchError(f"shape_basis must be ({NUM_BETAS}, {n}), got {basis.shape}")
        if len(self.joint_names) != n:
            raise ShapeMismatchError("joint_names must name every joint")
        if not (np.all(np.isfinite(offsets)) and np.all(np.isfinite(template)) and np.all(np.isfinite(basis))):
            raise InvalidInputError("skeleton arrays must be finite")

        for name, arr in (("parents", parents), ("rest_offsets", offsets),
                          ("vertex_template", template), ("shape_basis", basis)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))

    @property
    def num_joints(self) -> int:
        """Number of non-root joints (J)."""
        return int(self.parents.shape[0]) - 1

    @property
    def vertices_per_bone(self) -> int:
        return int(self.vertex_template.shape[1])

    @property
    def num_vertices(self) -> int:
        return int(self.vertex_template.shape[0] * self.vertex_template.shape[1])

    def bone_multipliers(self, beta: np.ndarray) -> np.ndarray:
        """Per-bone length multipliers 1 + 0.05 * basis^T beta, shape (..., J + 1)."""
        beta = _check_beta(beta)
        return 1.0 + SHAPE_STEP * (beta @ self.shape_basis)

    def to_dict(self) -> dict:
        return {
            "version": SKELETON_FORMAT_VERSION,
            "joint_names": list(self.joint_names),
            "parents": self.parents.tolist(),
            "rest_offsets": self.rest_offsets.tolist(),
            "vertex_template": self.vertex_template.tolist(),
            "shape_basis": self.shape_basis.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BodySkeleton":
        version = data.get("version", SKELETON_FORMAT_VERSION)
        if version != SKELETON_FORMAT_VERSION:
            raise InvalidInputError(f"unsupported skeleton format version {version}")
        try:
            parents = data["parents"]
            return cls(
                parents=np.asarray(parents),
                rest_offsets=np.asarray(data["rest_offsets"]),
                vertex_template=np.asarray(data["vertex_template"]),
                shape_basis=np.asarray(data["shape_basis"]),
                joint_names=tuple(data.get("joint_names") or (f"joint{i}" for i in range(len(parents)))),
            )
        except KeyError as e:
            raise InvalidInputError(f"skeleton definition is missing {e}") from e


@dataclass(frozen=True, eq=False)
class PosedBody:
    """
    Posed joint and vertex positions.

    Attributes:
        joint_pos: (J + 1, 3) joint positions in meters
        vertices: (N, 3) vertex positions in meters
    """
    joint_pos: np.ndarray
    vertices: np.ndarray


def _check_beta(beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim < 1 or beta.shape[-1] != NUM_BETAS:
        raise ShapeMismatchError(f"beta must have {NUM_BETAS} coefficients, got shape {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise InvalidInputError("beta contains non-finite values")
    return beta


def _bone_box(offset: np.ndarray, count: int) -> np.ndarray:
    lo = np.minimum(0.0, offset) - _BONE_HALF_WIDTH
    hi = np.maximum(0.0, offset) + _BONE_HALF_WIDTH
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    if count <= 8:
        return corners[:count]
    # Extra vertices go along the bone's center line
    steps = np.linspace(0.0, 1.0, count - 8 + 2)[1:-1]
    return np.concatenate([corners, steps[:, None] * offset[None, :]], axis=0)


def default_skeleton(vertices_per_bone: int = 8) -> BodySkeleton:
    """
    Built-in SMPL-topology skeleton with box bones.

    Args:
        vertices_per_bone: Vertices per bone (>= 4); 8 gives N = 192

    Returns:
        The default BodySkeleton
    """
    if vertices_per_bone < 4:
        raise InvalidInputError("vertices_per_bone must be at least 4")
    offsets = np.array(_REST_OFFSETS)
    hx, hy, hz = _PELVIS_HALF_EXTENT
    pelvis = np.array([[x, y, z] for x in (-hx, hx) for y in (-hy, hy) for z in (-hz, hz)])
    if vertices_per_bone <= 8:
        pelvis = pelvis[:vertices_per_bone]
    else:
        pelvis = np.concatenate([pelvis, np.zeros((vertices_per_bone - 8, 3))], axis=0)
    template = [pelvis] + [_bone_box(offsets[j], vertices_per_bone) for j in range(1, len(_PARENTS))]

    basis = np.zeros((NUM_BETAS, len(_PARENTS)))
    for k, group in enumerate(_SHAPE_GROUPS):
        basis[k, list(group)] = 1.0

    return BodySkeleton(
        parents=np.array(_PARENTS),
        rest_offsets=offsets,
        vertex_template=np.stack(template),
        shape_basis=basis,
    )


def load_skeleton(path: Union[str, Path]) -> BodySkeleton:
    """Load a skeleton from its JSON definition."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    skel = BodySkeleton.from_dict(data)
    logger.info(f"Loaded skeleton with {skel.num_joints} joints and {skel.num_vertices} vertices from {path}")
    return skel


def save_skeleton(skel: BodySkeleton, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(skel.to_dict(), f, indent=2)


def posed_points(
    skel: BodySkeleton,
    local_rotations: np.ndarray,
    beta: np.ndarray,
    rotation: Optional[np.ndarray] = None,
    translation: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized forward kinematics.

    Args:
        skel: Skeleton
        local_rotations: (..., J, 3, 3) joint rotations relative to their parents
        beta: (..., 10) shape coefficients
        rotation: (..., 3, 3) root world rotation (identity if None)
        translation: (..., 3) root world translation (zero if None)

    Returns:
        (joints (..., J + 1, 3), vertices (..., N, 3))
    """
    local_rotations = np.asarray(local_rotations, dtype=np.float64)
    if local_rotations.shape[-3:] != (skel.num_joints, 3, 3):
        raise ShapeMismatchError(
            f"expected {skel.num_joints} local joint rotations, got shape {local_rotations.shape}"
        )
    beta = _check_beta(beta)
    rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    translation = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)

    batch = np.broadcast_shapes(
        local_rotations.shape[:-3], beta.shape[:-1], rotation.shape[:-2], translation.shape[:-1]
    )
    multipliers = skel.bone_multipliers(beta)
    offsets = skel.rest_offsets * multipliers[..., None]

    world_rot = [np.broadcast_to(rotation, batch + (3, 3))]
    joints = [np.zeros(batch + (3,))]
    for j in range(1, skel.num_joints + 1):
        p = int(skel.parents[j])
        joints.append(joints[p] + np.einsum("...ij,...j->...i", world_rot[p], offsets[..., j, :]))
        world_rot.append(world_rot[p] @ local_rotations[..., j - 1, :, :])

    vertices = []
    for j in range(skel.num_joints + 1):
        frame = int(skel.parents[j]) if j > 0 else 0
        scaled = skel.vertex_template[j] * (multipliers[..., j, None, None] if j > 0 else 1.0)
        vertices.append(joints[frame][..., None, :] + scaled @ np.swapaxes(world_rot[frame], -1, -2))

    joint_pos = np.stack(joints, axis=-2) + translation[..., None, :]
    verts = np.concatenate(vertices, axis=-2) + translation[..., None, :]
    return joint_pos, verts


def _local_rotations(skel: BodySkeleton, pose: np.ndarray) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape[-2:] != (skel.num_joints, 4):
        raise ShapeMismatchError(f"local pose must have shape (..., {skel.num_joints}, 4), got {pose.shape}")
    return quat_to_mat(canonicalize_quat(pose))


def rest_vertices(skel: BodySkeleton, pose: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Vertices posed by the local pose at the identity global pose, shape (..., N, 3)."""
    return posed_points(skel, _local_rotations(skel, pose), beta)[1]


def forward_kinematics(skel: BodySkeleton, pose: np.ndarray, beta: np.ndarray, g: GlobalPose) -> PosedBody:
    """
    Pose the body: chain the local rotations under the root rotation g.R, then add g.T.

    Args:
        skel: Skeleton
        pose: (J, 4) local joint quaternions
        beta: (10,) shape coefficients
        g: Global pose of the root

    Returns:
        Posed joints and vertices

    Raises:
        ShapeMismatchError: If the pose or beta does not match the skeleton
    """
    joints, vertices = posed_points(skel, _local_rotations(skel, pose), beta, g.R, g.T)
    return PosedBody(joint_pos=joints, vertices=vertices)


def mesh_offset(skel: BodySkeleton, pose: np.ndarray, beta: np.ndarray, dg: GlobalMotion) -> PosedBody:
    """The body posed with the motion (dR, dT) as its global pose."""
    return forward_kinematics(skel, pose, beta, dg.as_pose())


def skeleton_bone_lengths(skel: BodySkeleton, joint_pos: np.ndarray) -> np.ndarray:
    """Distances between each joint and its parent, shape (..., J)."""
    parents = skel.parents[1:]
    return np.linalg.norm(joint_pos[..., 1:, :] - joint_pos[..., parents, :], axis=-1)


def template_bone_lengths(skel: BodySkeleton, beta: Optional[Sequence[float]] = None) -> np.ndarray:
    """Shaped rest bone lengths, shape (J,)."""
    beta = np.zeros(NUM_BETAS) if beta is None else np.asarray(beta, dtype=np.float64)
    return np.linalg.norm(skel.rest_offsets[1:], axis=-1) * skel.bone_multipliers(beta)[1:]
