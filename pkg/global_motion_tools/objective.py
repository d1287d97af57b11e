"""
Training losses and evaluation metrics.

Losses take the network's raw axis-angle predictions (tape nodes or arrays)
and ground-truth motions as arrays; they sum over every leading axis (batch and
frames) and return a Node when given one, a float otherwise. Metrics take plain
arrays and average over frames; lengths are in meters on input and reported in
millimeters, angles in degrees.
"""

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .body import BodySkeleton, posed_points, rest_vertices
from .errors import InvalidInputError, ShapeMismatchError
from .logger import get_logger
from .net import tape as ops
from .net.tape import ArrayLike, Node
from .rigid_motion import (
    GlobalPose,
    PoseTrajectory,
    accumulate,
    motions_from_arrays,
    perturb_motions,
    trajectory_motions,
)
from .rot3 import aa_to_mat, canonicalize_quat, geodesic_angle, quat_to_mat, wrap_aa

__all__ = [
    "LossWeights",
    "OrientationLoss",
    "LossComponents",
    "MetricReport",
    "METRIC_CSV_COLUMNS",
    "loss_orientation",
    "loss_translation",
    "loss_vertex",
    "loss_vertex_from_points",
    "loss_smooth",
    "loss_total",
    "loss_components",
    "metric_ome",
    "metric_tme",
    "metric_vme",
    "evaluate_motions",
    "accumulated_vertex_error",
    "accumulated_error_experiment",
    "aggregate_reports",
    "reports_to_csv",
    "curves_to_csv",
]

logger = get_logger(__name__)

METERS_TO_MM = 1000.0
METRIC_CSV_COLUMNS = ("label", "num_sequences", "OME_deg", "TME_mm", "VME_mm", "final_accumulated_mm")


class OrientationLoss(enum.Enum):
    """Distance used for the orientation motion loss."""
    CHORDAL = "chordal"
    ANGULAR = "angular"
    AXIS_ANGLE = "axis-angle"


@dataclass(frozen=True)
class LossWeights:
    """
    Weights of the total loss.

    Attributes:
        w_ori: Orientation motion loss weight
        w_trans: Translation motion loss weight
        w_vertex: Vertex offset loss weight
        w_smooth: Orientation smoothness weight
    """
    w_ori: float = 1.0
    w_trans: float = 1.0
    w_vertex: float = 1.0
    w_smooth: float = 1e-2

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not np.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} must be a nonnegative finite number, got {value}")


@dataclass
class LossComponents:
    """The four loss terms of one forward pass."""
    ori: ArrayLike
    trans: ArrayLike
    vertex: ArrayLike
    smooth: ArrayLike

    def as_floats(self) -> Dict[str, float]:
        return {
            "L_ori": float(ops.value_of(self.ori)),
            "L_trans": float(ops.value_of(self.trans)),
            "L_vertex": float(ops.value_of(self.vertex)),
            "L_smooth": float(ops.value_of(self.smooth)),
        }


def _result(x: ArrayLike) -> Union[Node, float]:
    return x if isinstance(x, Node) else float(x)


def _check_pair(pred: ArrayLike, gt: np.ndarray, what: str) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.float64)
    pred_shape = ops.value_of(pred).shape
    if pred_shape != gt.shape:
        raise ShapeMismatchError(f"{what}: prediction shape {pred_shape} does not match ground truth {gt.shape}")
    if gt.ndim < 2 or gt.shape[-2] < 1:
        raise InvalidInputError(f"{what}: sequences must hold at least one frame")
    return gt


def loss_orientation(
    pred_dA: ArrayLike,
    gt_dA: np.ndarray,
    kind: Union[OrientationLoss, str] = OrientationLoss.CHORDAL,
) -> Union[Node, float]:
    """
    Orientation motion loss summed over frames.

        chordal:    sum |dR - dR*|_F^2
        angular:    sum |log(dR dR*^T)|^2
        axis-angle: sum |log dR - log dR*|^2

    Args:
        pred_dA: (..., T, 3) raw predicted axis-angle motions
        gt_dA: (..., T, 3) ground-truth axis-angle motions
        kind: Which distance to use

    Raises:
        ShapeMismatchError: If the sequences disagree in shape
    """
    gt_dA = _check_pair(pred_dA, gt_dA, "orientation loss")
    kind = OrientationLoss(kind)
    if kind is OrientationLoss.AXIS_ANGLE:
        diff = ops.wrap_aa(pred_dA) - wrap_aa(gt_dA)
        return _result(ops.sum(ops.square(diff)))

    pred_rot = ops.rodrigues(pred_dA)
    gt_rot = aa_to_mat(gt_dA)
    if kind is OrientationLoss.CHORDAL:
        return _result(ops.sum(ops.square(pred_rot - gt_rot)))
    relative = pred_rot @ np.swapaxes(gt_rot, -1, -2)
    return _result(ops.sum(ops.geodesic_sq(relative)))


def loss_translation(pred_dT: ArrayLike, gt_dT: np.ndarray) -> Union[Node, float]:
    """sum |dT - dT*|^2 over frames."""
    gt_dT = _check_pair(pred_dT, gt_dT, "translation loss")
    return _result(ops.sum(ops.square(pred_dT - gt_dT)))


def _offset_points(points: np.ndarray, rot: ArrayLike, trans: ArrayLike) -> ArrayLike:
    # (..., N, 3) @ (..., 3, 3)^T + (..., 1, 3)
    trans_shape = ops.value_of(trans).shape
    return points @ ops.swapaxes(rot, -1, -2) + ops.reshape(trans, trans_shape[:-1] + (1, 3))


def loss_vertex_from_points(
    points: np.ndarray,
    pred_dA: ArrayLike,
    pred_dT: ArrayLike,
    gt_dA: np.ndarray,
    gt_dT: np.ndarray,
) -> Union[Node, float]:
    """
    L1 vertex loss on mesh offsets from precomputed identity-pose vertices.

    Args:
        points: (..., T, N, 3) vertices posed by the local pose at the identity global pose
        pred_dA, pred_dT: (..., T, 3) predicted motions
        gt_dA, gt_dT: (..., T, 3) ground-truth motions
    """
    gt_dA = _check_pair(pred_dA, gt_dA, "vertex loss")
    gt_dT = _check_pair(pred_dT, gt_dT, "vertex loss")
    points = np.asarray(points, dtype=np.float64)
    if points.shape[:-2] != gt_dA.shape[:-1] or points.shape[-1] != 3:
        raise ShapeMismatchError(f"vertex array {points.shape} does not match motions {gt_dA.shape}")
    pred_offset = _offset_points(points, ops.rodrigues(pred_dA), pred_dT)
    gt_offset = _offset_points(points, aa_to_mat(gt_dA), gt_dT)
    return _result(ops.sum(ops.absolute(pred_offset - gt_offset)))


def loss_vertex(
    skel: BodySkeleton,
    local: np.ndarray,
    beta: np.ndarray,
    pred_dA: ArrayLike,
    pred_dT: ArrayLike,
    gt_dA: np.ndarray,
    gt_dT: np.ndarray,
) -> Union[Node, float]:
    """
    sum over frames and vertices of |mesh_offset(pred) - mesh_offset(gt)|_1.

    Args:
        skel: Body model
        local: (..., T, J, 4) local pose of the frame each motion starts from
        beta: (..., 10) shape coefficients, broadcast over frames
        pred_dA, pred_dT, gt_dA, gt_dT: (..., T, 3) motions
    """
    beta = np.asarray(beta, dtype=np.float64)
    points = rest_vertices(skel, local, beta[..., None, :])
    return loss_vertex_from_points(points, pred_dA, pred_dT, gt_dA, gt_dT)


def loss_smooth(pred_dA: ArrayLike) -> Union[Node, float]:
    """sum_i |dR_i - dR_{i+1}|_F^2; zero for a single frame."""
    length = ops.value_of(pred_dA).shape[-2]
    rot = ops.rodrigues(pred_dA)
    if length < 2:
        return _result(ops.mul(ops.sum(rot), 0.0))
    diff = rot[..., 1:, :, :] - rot[..., :-1, :, :]
    return _result(ops.sum(ops.square(diff)))


def loss_total(components: LossComponents, weights: Optional[LossWeights] = None) -> Union[Node, float]:
    """w_ori L_ori + w_trans L_trans + w_vertex L_vertex + w_smooth L_smooth."""
    weights = weights or LossWeights()
    total = (
        weights.w_ori * components.ori
        + weights.w_trans * components.trans
        + weights.w_vertex * components.vertex
        + weights.w_smooth * components.smooth
    )
    return _result(total)


def loss_components(
    raw: ArrayLike,
    gt_dA: np.ndarray,
    gt_dT: np.ndarray,
    points: np.ndarray,
    kind: Union[OrientationLoss, str] = OrientationLoss.CHORDAL,
) -> LossComponents:
    """
    All four terms from the network's raw (..., T, 6) output.

    Args:
        raw: Network output, axis-angle then translation per frame
        gt_dA, gt_dT: (..., T, 3) ground-truth motions
        points: (..., T, N, 3) identity-pose vertices for the vertex loss
        kind: Orientation distance
    """
    pred_dA = ops.getitem(raw, (Ellipsis, slice(0, 3)))
    pred_dT = ops.getitem(raw, (Ellipsis, slice(3, 6)))
    return LossComponents(
        ori=loss_orientation(pred_dA, gt_dA, kind),
        trans=loss_translation(pred_dT, gt_dT),
        vertex=loss_vertex_from_points(points, pred_dA, pred_dT, gt_dA, gt_dT),
        smooth=loss_smooth(pred_dA),
    )


# Metrics

def metric_ome(pred_dA: np.ndarray, gt_dA: np.ndarray) -> float:
    """Mean geodesic angle between predicted and true orientation motions, degrees."""
    gt_dA = _check_pair(pred_dA, gt_dA, "OME")
    angles = geodesic_angle(aa_to_mat(wrap_aa(pred_dA)), aa_to_mat(gt_dA))
    return float(np.degrees(np.mean(angles)))


def metric_tme(pred_dT: np.ndarray, gt_dT: np.ndarray) -> float:
    """Mean Euclidean translation motion error, millimeters."""
    gt_dT = _check_pair(pred_dT, gt_dT, "TME")
    return float(np.mean(np.linalg.norm(np.asarray(pred_dT) - gt_dT, axis=-1)) * METERS_TO_MM)


def metric_vme(
    skel: BodySkeleton,
    local: np.ndarray,
    beta: np.ndarray,
    pred_dA: np.ndarray,
    pred_dT: np.ndarray,
    gt_dA: np.ndarray,
    gt_dT: np.ndarray,
) -> float:
    """Mean vertex-wise Euclidean distance between predicted and true mesh offsets, millimeters."""
    gt_dA = _check_pair(pred_dA, gt_dA, "VME")
    gt_dT = _check_pair(pred_dT, gt_dT, "VME")
    beta = np.asarray(beta, dtype=np.float64)
    points = rest_vertices(skel, local, beta[..., None, :])
    pred_offset = _offset_points(points, aa_to_mat(wrap_aa(pred_dA)), np.asarray(pred_dT, dtype=np.float64))
    gt_offset = _offset_points(points, aa_to_mat(gt_dA), gt_dT)
    return float(np.mean(np.linalg.norm(pred_offset - gt_offset, axis=-1)) * METERS_TO_MM)


def accumulated_vertex_error(
    pred_traj: PoseTrajectory,
    gt_traj: PoseTrajectory,
    skel: BodySkeleton,
    poses: np.ndarray,
    beta: np.ndarray,
) -> np.ndarray:
    """
    Per-frame mean vertex distance between bodies posed under two trajectories.

    Args:
        pred_traj: Accumulated predicted poses
        gt_traj: Ground-truth poses in the same reference frame
        skel: Body model
        poses: (F, J, 4) local poses
        beta: (10,) shape coefficients

    Returns:
        (F,) curve in millimeters
    """
    poses = np.asarray(poses, dtype=np.float64)
    if not (len(pred_traj) == len(gt_traj) == poses.shape[0]):
        raise ShapeMismatchError(
            f"trajectory lengths {len(pred_traj)}, {len(gt_traj)} and pose count {poses.shape[0]} differ"
        )
    local_rot = quat_to_mat(canonicalize_quat(poses))
    beta = np.asarray(beta, dtype=np.float64)
    _, pred_verts = posed_points(skel, local_rot, beta, pred_traj.rotations(), pred_traj.translations())
    _, gt_verts = posed_points(skel, local_rot, beta, gt_traj.rotations(), gt_traj.translations())
    return np.mean(np.linalg.norm(pred_verts - gt_verts, axis=-1), axis=-1) * METERS_TO_MM


def accumulated_error_experiment(
    skel: BodySkeleton,
    poses: np.ndarray,
    beta: np.ndarray,
    gt_traj: PoseTrajectory,
    rot_std: float,
    trans_std: float,
    trials: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """
    Mean accumulated vertex error when i.i.d. noise is added to the true motions.

    Each trial perturbs every ground-truth motion, accumulates the noisy motions
    from the true first pose, and measures the per-frame vertex error.

    Returns:
        (F,) mean curve in millimeters
    """
    if trials < 1:
        raise InvalidInputError("trials must be positive")
    gt_motions = trajectory_motions(gt_traj)
    curves = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        noisy = perturb_motions(gt_motions, rot_std, trans_std, rng)
        pred = accumulate(gt_traj[0], noisy, fps=gt_traj.fps)
        curves.append(accumulated_vertex_error(pred, gt_traj, skel, poses, beta))
    curve = np.mean(curves, axis=0)
    logger.info(f"Accumulated error over {trials} trials: final frame {curve[-1]:.2f} mm")
    return curve


@dataclass
class MetricReport:
    """
    Evaluation result.

    Attributes:
        ome: Orientation motion error, degrees
        tme: Translation motion error, millimeters
        vme: Vertex motion error, millimeters
        accumulated: Per-frame accumulated vertex error, millimeters
        label: Free-form name (predictor, dataset, camera mode)
        num_sequences: Sequences averaged into this report
    """
    ome: float
    tme: float
    vme: float
    accumulated: List[float] = field(default_factory=list)
    label: str = ""
    num_sequences: int = 1

    def __post_init__(self) -> None:
        for name in ("ome", "tme", "vme"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} must be a nonnegative finite number, got {value}")
        if self.num_sequences < 1:
            raise InvalidInputError(f"num_sequences must be positive, got {self.num_sequences}")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "num_sequences": self.num_sequences,
            "OME_deg": self.ome,
            "TME_mm": self.tme,
            "VME_mm": self.vme,
            "accumulated_mm": list(self.accumulated),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        try:
            return cls(
                ome=float(data["OME_deg"]),
                tme=float(data["TME_mm"]),
                vme=float(data["VME_mm"]),
                accumulated=[float(v) for v in data.get("accumulated_mm", [])],
                label=str(data.get("label", "")),
                num_sequences=int(data.get("num_sequences", 1)),
            )
        except KeyError as e:
            raise InvalidInputError(f"metric report is missing {e}") from e

    def csv_row(self) -> List[str]:
        final = self.accumulated[-1] if self.accumulated else 0.0
        return [self.label, str(self.num_sequences), repr(self.ome), repr(self.tme), repr(self.vme), repr(final)]

    def to_csv(self) -> str:
        return reports_to_csv([self])

    def save(self, path: Union[str, Path]) -> None:
        """Write the JSON report and a sibling one-row CSV."""
        path = Path(path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        with open(path.with_suffix(".csv"), "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MetricReport":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def evaluate_motions(
    skel: BodySkeleton,
    local: np.ndarray,
    beta: np.ndarray,
    pred_dA: np.ndarray,
    pred_dT: np.ndarray,
    gt_dA: np.ndarray,
    gt_dT: np.ndarray,
    label: str = "",
) -> MetricReport:
    """
    Metrics of one sequence, including the accumulated error curve.

    Args:
        skel: Body model
        local: (T + 1, J, 4) local poses; motion i starts at frame i
        beta: (10,) shape coefficients
        pred_dA, pred_dT, gt_dA, gt_dT: (T, 3) motions

    Returns:
        MetricReport for the sequence
    """
    local = np.asarray(local, dtype=np.float64)
    length = np.asarray(gt_dA).shape[0]
    if local.shape[0] != length + 1:
        raise ShapeMismatchError(f"expected {length + 1} local poses for {length} motions, got {local.shape[0]}")
    pred_dA = wrap_aa(pred_dA)
    ome = metric_ome(pred_dA, gt_dA)
    tme = metric_tme(pred_dT, gt_dT)
    vme = metric_vme(skel, local[:-1], beta, pred_dA, pred_dT, gt_dA, gt_dT)

    pred_traj = accumulate(GlobalPose.identity(), motions_from_arrays(pred_dA, pred_dT))
    gt_traj = accumulate(GlobalPose.identity(), motions_from_arrays(gt_dA, gt_dT))
    curve = accumulated_vertex_error(pred_traj, gt_traj, skel, local, beta)
    return MetricReport(ome=ome, tme=tme, vme=vme, accumulated=curve.tolist(), label=label)


def aggregate_reports(reports: Sequence[MetricReport], label: str = "") -> MetricReport:
    """
    Mean over sequences of the given reports.

    Each report counts with its num_sequences, so aggregating aggregates still
    gives every sequence the same weight. Accumulated curves are averaged frame
    by frame over the shortest curve length.

    Raises:
        InvalidInputError: If no reports are given
    """
    if not reports:
        raise InvalidInputError("no metric reports to aggregate")
    weights = np.array([r.num_sequences for r in reports], dtype=np.float64)
    curved = [(r.accumulated, r.num_sequences) for r in reports if r.accumulated]
    accumulated: List[float] = []
    if curved:
        shortest = min(len(c) for c, _ in curved)
        accumulated = np.average(
            [c[:shortest] for c, _ in curved], axis=0, weights=[n for _, n in curved]
        ).tolist()
    return MetricReport(
        ome=float(np.average([r.ome for r in reports], weights=weights)),
        tme=float(np.average([r.tme for r in reports], weights=weights)),
        vme=float(np.average([r.vme for r in reports], weights=weights)),
        accumulated=accumulated,
        label=label,
        num_sequences=int(weights.sum()),
    )


def reports_to_csv(reports: Sequence[MetricReport]) -> str:
    """Metric table with one row per report."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRIC_CSV_COLUMNS)
    for report in reports:
        writer.writerow(report.csv_row())
    return buffer.getvalue()


def curves_to_csv(reports: Sequence[MetricReport]) -> str:
    """
    Accumulated error curves side by side: a frame column, then one column per report.

    Curves shorter than the longest leave their trailing cells empty.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["frame"] + [report.label for report in reports])
    length = max((len(report.accumulated) for report in reports), default=0)
    for frame in range(length):
        row = [str(frame)]
        for report in reports:
            row.append(repr(report.accumulated[frame]) if frame < len(report.accumulated) else "")
        writer.writerow(row)
    return buffer.getvalue()
