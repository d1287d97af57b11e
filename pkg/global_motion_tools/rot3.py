"""
Rotation representations and SO(3) distances.

Every function is vectorized over leading axes. Representations are plain
float64 numpy arrays:

    UnitQuaternion  (..., 4)    components (w, x, y, z), canonical sign w >= 0
    AxisAngle       (..., 3)    direction = axis, norm = angle, canonical ball |v| <= pi
    RotMatrix       (..., 3, 3) proper orthonormal matrix
    SixD            (..., 6)    first two matrix columns (a, b) concatenated
"""

import math
from typing import Optional, Tuple, Union

import numpy as np
from typing_extensions import TypeAlias

from .errors import Degenerate6DError, InvalidInputError, InvalidRotationError, ShapeMismatchError

__all__ = [
    "SMALL_ANGLE",
    "skew",
    "vee",
    "canonicalize_quat",
    "quat_mul",
    "wrap_aa",
    "aa_to_mat",
    "mat_to_aa",
    "quat_to_mat",
    "mat_to_quat",
    "quat_to_aa",
    "aa_to_quat",
    "sixd_to_mat",
    "mat_to_sixd",
    "geodesic_angle",
    "chordal_distance",
    "check_rotation",
    "random_quaternions",
    "random_rotations",
    "rot_z",
]

UnitQuaternion: TypeAlias = np.ndarray
AxisAngle: TypeAlias = np.ndarray
RotMatrix: TypeAlias = np.ndarray
SixD: TypeAlias = np.ndarray

# Below this angle the Rodrigues and log-map coefficients switch to Taylor forms
SMALL_ANGLE = 1e-8
# Residual above which a matrix is rejected as a rotation
ORTHONORMAL_TOL = 1e-6
QUAT_NORM_TOL = 1e-6
DEGENERATE_6D_TOL = 1e-9
# cos(theta) below this uses the symmetric-part axis extraction in mat_to_aa
NEAR_PI_COS = -0.9


def _as_array(x: Union[np.ndarray, list, tuple], trailing: Tuple[int, ...], what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < len(trailing) or arr.shape[arr.ndim - len(trailing):] != trailing:
        raise ShapeMismatchError(f"{what} must have trailing shape {trailing}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} contains non-finite values")
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]x of a (..., 3) array."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def vee(m: np.ndarray) -> np.ndarray:
    """Vector of the skew-symmetric part of a (..., 3, 3) array."""
    m = np.asarray(m, dtype=np.float64)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def check_rotation(m: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """
    Validate that every matrix in m is a proper rotation.

    Args:
        m: Array of shape (..., 3, 3)
        tol: Maximum accepted orthonormality / determinant residual

    Returns:
        m as a float64 array

    Raises:
        InvalidRotationError: If any matrix fails the check
    """
    m = _as_array(m, (3, 3), "rotation matrix")
    gram = np.swapaxes(m, -1, -2) @ m
    residual = np.max(np.abs(gram - np.eye(3)), axis=(-2, -1))
    det_residual = np.abs(np.linalg.det(m) - 1.0)
    worst = float(np.max(np.maximum(residual, det_residual))) if m.size else 0.0
    if worst > tol:
        raise InvalidRotationError(f"matrix is not a proper rotation (residual {worst:.3e})")
    return m


def canonicalize_quat(q: UnitQuaternion) -> UnitQuaternion:
    """Normalize quaternions and pick the antipodal representative with w >= 0."""
    q = _as_array(q, (4,), "quaternion")
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise InvalidInputError("zero quaternion has no rotation")
    q = q / norm
    sign = np.sign(q[..., 0])
    # w == 0: the first nonzero of x, y, z decides
    for i in (1, 2, 3):
        sign = np.where(sign == 0, np.sign(q[..., i]), sign)
    sign = np.where(sign == 0, 1.0, sign)
    return q * sign[..., None]


def quat_mul(q1: UnitQuaternion, q2: UnitQuaternion) -> UnitQuaternion:
    """Hamilton product q1 * q2 (rotation q2 applied first)."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    w1, x1, y1, z1 = np.moveaxis(q1, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q2, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def wrap_aa(v: AxisAngle) -> AxisAngle:
    """Map axis-angle vectors into the canonical ball |v| <= pi without changing the rotation."""
    v = _as_array(v, (3,), "axis-angle")
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    outside = theta > math.pi
    if not np.any(outside):
        return v
    safe = np.where(theta > 0, theta, 1.0)
    wrapped = np.mod(theta, 2.0 * math.pi)
    wrapped = np.where(wrapped > math.pi, wrapped - 2.0 * math.pi, wrapped)
    return np.where(outside, v / safe * wrapped, v)


def aa_to_mat(v: AxisAngle) -> RotMatrix:
    """
    Rodrigues' formula.

    Args:
        v: Axis-angle vectors of shape (..., 3)

    Returns:
        Rotation matrices of shape (..., 3, 3)

    Raises:
        InvalidInputError: If v is not finite
    """
    v = _as_array(v, (3,), "axis-angle")
    theta = np.linalg.norm(v, axis=-1)[..., None, None]
    k = skew(v)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    half = 0.5 * safe
    b = np.where(small, 0.5, 0.5 * (np.sin(half) / half) ** 2)
    return np.eye(3) + a * k + b * (k @ k)


def mat_to_aa(m: RotMatrix) -> AxisAngle:
    """
    Logarithm map of SO(3) into the canonical axis-angle ball.

    Args:
        m: Rotation matrices of shape (..., 3, 3)

    Returns:
        Axis-angle vectors of shape (..., 3) with norm <= pi

    Raises:
        InvalidRotationError: If any input is not orthonormal (residual > 1e-6)
    """
    m = check_rotation(m)
    s = vee(m)
    sin_t = np.linalg.norm(s, axis=-1)
    cos_t = np.clip((np.trace(m, axis1=-2, axis2=-1) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arctan2(sin_t, cos_t)

    small = sin_t < SMALL_ANGLE
    factor = np.where(small, 1.0, theta / np.where(small, 1.0, sin_t))
    regular = s * factor[..., None]

    # Near pi, sin(theta) carries no axis information; read it from the symmetric part
    sym = 0.5 * (m + np.swapaxes(m, -1, -2)) - cos_t[..., None, None] * np.eye(3)
    diag = np.diagonal(sym, axis1=-2, axis2=-1)
    k = np.argmax(diag, axis=-1)
    column = np.take_along_axis(sym, k[..., None, None].repeat(3, axis=-2), axis=-1)[..., 0]
    col_norm = np.linalg.norm(column, axis=-1, keepdims=True)
    axis = column / np.where(col_norm > 0, col_norm, 1.0)
    dot = np.sum(axis * s, axis=-1)
    first_nonzero = _first_nonzero_sign(axis)
    flip = np.where(np.abs(dot) > 0, np.sign(dot), first_nonzero)
    near_pi_vec = axis * (flip * theta)[..., None]

    near_pi = cos_t < NEAR_PI_COS
    return np.where(near_pi[..., None], near_pi_vec, regular)


def _first_nonzero_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    sign = np.zeros(v.shape[:-1])
    for i in range(v.shape[-1]):
        component = v[..., i]
        sign = np.where((sign == 0) & (np.abs(component) > tol), np.sign(component), sign)
    return np.where(sign == 0, 1.0, sign)


def quat_to_mat(q: UnitQuaternion) -> RotMatrix:
    """Rotation matrix of unit quaternions (w, x, y, z); q and -q map to the same matrix."""
    q = _as_array(q, (4,), "quaternion")
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(np.abs(norm - 1.0) > QUAT_NORM_TOL):
        raise InvalidInputError("quaternion is not unit length")
    w, x, y, z = np.moveaxis(q / norm, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def mat_to_quat(m: RotMatrix) -> UnitQuaternion:
    """Shepperd's method; returns the canonical (w >= 0) representative."""
    m = check_rotation(m)
    m00, m11, m22 = m[..., 0, 0], m[..., 1, 1], m[..., 2, 2]
    trace = m00 + m11 + m22
    pivots = np.stack([trace, m00, m11, m22], axis=-1)
    choice = np.argmax(pivots, axis=-1)

    r0 = np.sqrt(np.maximum(1.0 + trace, 0.0))
    r1 = np.sqrt(np.maximum(1.0 + m00 - m11 - m22, 0.0))
    r2 = np.sqrt(np.maximum(1.0 - m00 + m11 - m22, 0.0))
    r3 = np.sqrt(np.maximum(1.0 - m00 - m11 + m22, 0.0))

    def _div(num: np.ndarray, r: np.ndarray) -> np.ndarray:
        return num / np.where(r > 1e-12, 2.0 * r, 1.0)

    m21_m12 = m[..., 2, 1] - m[..., 1, 2]
    m02_m20 = m[..., 0, 2] - m[..., 2, 0]
    m10_m01 = m[..., 1, 0] - m[..., 0, 1]
    m01_m10 = m[..., 0, 1] + m[..., 1, 0]
    m02p20 = m[..., 0, 2] + m[..., 2, 0]
    m12p21 = m[..., 1, 2] + m[..., 2, 1]

    candidates = np.stack(
        [
            np.stack([0.5 * r0, _div(m21_m12, r0), _div(m02_m20, r0), _div(m10_m01, r0)], axis=-1),
            np.stack([_div(m21_m12, r1), 0.5 * r1, _div(m01_m10, r1), _div(m02p20, r1)], axis=-1),
            np.stack([_div(m02_m20, r2), _div(m01_m10, r2), 0.5 * r2, _div(m12p21, r2)], axis=-1),
            np.stack([_div(m10_m01, r3), _div(m02p20, r3), _div(m12p21, r3), 0.5 * r3], axis=-1),
        ],
        axis=-2,
    )
    q = np.take_along_axis(candidates, choice[..., None, None].repeat(4, axis=-1), axis=-2)[..., 0, :]
    return canonicalize_quat(q)


def quat_to_aa(q: UnitQuaternion) -> AxisAngle:
    """Axis-angle of unit quaternions, in the canonical ball."""
    q = canonicalize_quat(q)
    xyz = q[..., 1:]
    n = np.linalg.norm(xyz, axis=-1)
    small = n < SMALL_ANGLE
    theta = 2.0 * np.arctan2(n, q[..., 0])
    factor = np.where(small, 2.0, theta / np.where(small, 1.0, n))
    return xyz * factor[..., None]


def aa_to_quat(v: AxisAngle) -> UnitQuaternion:
    """Canonical unit quaternion of axis-angle vectors."""
    v = wrap_aa(v)
    theta = np.linalg.norm(v, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    factor = np.where(small, 0.5 - theta ** 2 / 48.0, np.sin(0.5 * safe) / safe)
    q = np.concatenate([np.cos(0.5 * theta)[..., None], v * factor[..., None]], axis=-1)
    return canonicalize_quat(q)


def sixd_to_mat(s: SixD) -> RotMatrix:
    """
    Gram-Schmidt on the column pair (a, b), third column a x b.

    Args:
        s: Array of shape (..., 6) holding a = s[..., :3] and b = s[..., 3:]

    Returns:
        Rotation matrices whose first two columns span the same oriented plane as (a, b)

    Raises:
        Degenerate6DError: If a is (near) zero or b is (near) parallel to a
    """
    s = _as_array(s, (6,), "6D rotation")
    a, b = s[..., :3], s[..., 3:]
    a_norm = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(a_norm < DEGENERATE_6D_TOL):
        raise Degenerate6DError("first 6D column is zero")
    c1 = a / a_norm
    b_perp = b - np.sum(b * c1, axis=-1, keepdims=True) * c1
    b_norm = np.linalg.norm(b_perp, axis=-1, keepdims=True)
    if np.any(b_norm < DEGENERATE_6D_TOL):
        raise Degenerate6DError("6D columns are parallel")
    c2 = b_perp / b_norm
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def mat_to_sixd(m: RotMatrix) -> SixD:
    """First two columns of rotation matrices, concatenated."""
    m = check_rotation(m)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def geodesic_angle(m1: RotMatrix, m2: RotMatrix) -> Union[float, np.ndarray]:
    """
    Angle of the relative rotation, |log(m2 m1^T)|, in [0, pi].

    Returns a float for single matrices and an array for batches.
    """
    m1 = check_rotation(m1)
    m2 = check_rotation(m2)
    rel = m2 @ np.swapaxes(m1, -1, -2)
    sin_t = np.linalg.norm(vee(rel), axis=-1)
    cos_t = np.clip((np.trace(rel, axis1=-2, axis2=-1) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arctan2(sin_t, cos_t)
    return float(theta) if np.ndim(theta) == 0 else theta


def chordal_distance(m1: RotMatrix, m2: RotMatrix) -> Union[float, np.ndarray]:
    """Frobenius distance between rotation matrices; equals 2*sqrt(2)*sin(theta/2)."""
    diff = np.asarray(m1, dtype=np.float64) - np.asarray(m2, dtype=np.float64)
    dist = np.sqrt(np.sum(diff * diff, axis=(-2, -1)))
    return float(dist) if np.ndim(dist) == 0 else dist


def random_quaternions(n: int, rng: Optional[np.random.Generator] = None) -> UnitQuaternion:
    """Uniform random rotations on SO(3) as canonical quaternions (normalized 4D Gaussians)."""
    rng = rng if rng is not None else np.random.default_rng()
    return canonicalize_quat(rng.standard_normal((n, 4)))


def random_rotations(n: int, rng: Optional[np.random.Generator] = None) -> RotMatrix:
    """Uniform random rotation matrices."""
    return quat_to_mat(random_quaternions(n, rng))


def rot_z(theta: float) -> RotMatrix:
    """Rotation by theta radians about the z axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
