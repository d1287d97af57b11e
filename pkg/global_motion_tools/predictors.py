"""
Motion predictors evaluated by the pipeline.

Every predictor maps a MotionSample to T orientation and translation motions.
The trajectory it implies is the accumulation of those motions from the
identity pose, which aligns every prediction with the ground truth at frame 1.
"""

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .body import BodySkeleton, default_skeleton
from .camera import CameraPath, camera_frame_trajectory, camera_trajectory, static_counterpart
from .datagen import MotionSample, perturb_quaternions
from .errors import InvalidInputError, ShapeMismatchError
from .logger import get_logger
from .net.gmr import GmrParams, predict
from .objective import MetricReport, aggregate_reports, evaluate_motions, reports_to_csv
from .rigid_motion import (
    GlobalPose,
    PoseTrajectory,
    accumulate,
    motions_from_arrays,
    motions_to_arrays,
    trajectory_motions,
)
from .rot3 import wrap_aa

__all__ = [
    "BaseMotionPredictor",
    "GmrPredictor",
    "ZeroMotionPredictor",
    "CameraFrameBaseline",
    "CameraSimReport",
    "evaluate_predictors",
    "simulate_camera",
]

logger = get_logger(__name__)

MotionArrays = Tuple[np.ndarray, np.ndarray]


class BaseMotionPredictor(ABC):
    """
    Base class for global motion predictors.
    """

    name: str = "predictor"

    @abstractmethod
    def predict_motions(self, sample: MotionSample) -> MotionArrays:
        """
        Predict the motions of a window.

        Args:
            sample: Window of T + 1 frames

        Returns:
            (T, 3) axis-angle and (T, 3) translation motions, axis-angles in the canonical ball
        """

    def predict_trajectory(self, sample: MotionSample) -> PoseTrajectory:
        """Accumulate the predicted motions from the identity pose."""
        dA, dT = self.predict_motions(sample)
        return accumulate(GlobalPose.identity(), motions_from_arrays(dA, dT), fps=sample.fps)

    def evaluate_sample(self, sample: MotionSample, skel: BodySkeleton) -> MetricReport:
        dA, dT = self.predict_motions(sample)
        gt_dA, gt_dT = sample.motion_arrays()
        return evaluate_motions(skel, sample.local, sample.beta, dA, dT, gt_dA, gt_dT, label=self.name)

    def evaluate(
        self,
        samples: Sequence[MotionSample],
        skel: Optional[BodySkeleton] = None,
        label: Optional[str] = None,
    ) -> MetricReport:
        """
        Per-sequence metrics averaged over the dataset.

        Raises:
            InvalidInputError: If the dataset is empty
        """
        if not samples:
            raise InvalidInputError("cannot evaluate on an empty dataset")
        skel = skel or default_skeleton()
        reports = [self.evaluate_sample(sample, skel) for sample in samples]
        report = aggregate_reports(reports, label=label or self.name)
        logger.info(
            f"{report.label}: OME {report.ome:.3f} deg, TME {report.tme:.2f} mm, VME {report.vme:.2f} mm "
            f"over {len(samples)} sequences"
        )
        return report


class GmrPredictor(BaseMotionPredictor):
    """
    The trained regressor.

    Args:
        params: Network parameters
        local_noise_std: Optional noise on the input local poses (radians), simulating an upstream estimator
        seed: Seed of that noise; each sequence draws from (seed, source_id, window_offset)
    """

    name = "gmr"

    def __init__(self, params: GmrParams, local_noise_std: float = 0.0, seed: int = 0):
        self.params = params
        self.local_noise_std = local_noise_std
        self.seed = seed

    def _input(self, local: np.ndarray, source_id: int = 0, window_offset: int = 0) -> np.ndarray:
        local = np.asarray(local, dtype=np.float64)
        if local.ndim != 3 or local.shape[1:] != (self.params.config.num_joints, 4):
            raise ShapeMismatchError(
                f"network expects (F, {self.params.config.num_joints}, 4) local poses, got {local.shape}"
            )
        if self.local_noise_std > 0:
            local = perturb_quaternions(local, self.local_noise_std, seed=[self.seed, source_id, window_offset])
        return local

    def predict_motions(self, sample: MotionSample) -> MotionArrays:
        local = self._input(sample.local, sample.source_id, sample.window_offset)
        # Motion i is read from the output at frame i; the last frame only provides context
        raw = predict(self.params, local[:-1])
        return wrap_aa(raw[:, :3]), raw[:, 3:].copy()

    def infer(
        self,
        local: np.ndarray,
        fps: float = 10.0,
        source_id: int = 0,
        window_offset: int = 0,
    ) -> Tuple[PoseTrajectory, np.ndarray, np.ndarray]:
        """
        Trajectory of a whole local pose sequence.

        Args:
            local: (F, J, 4) local poses, F >= 1
            fps: Frame rate attached to the trajectory
            source_id, window_offset: Identify the sequence for the input noise

        Returns:
            (trajectory of F poses from the identity, (F - 1, 3) dA, (F - 1, 3) dT)
        """
        raw = predict(self.params, self._input(local, source_id, window_offset))
        dA = wrap_aa(raw[:-1, :3])
        dT = raw[:-1, 3:].copy()
        traj = accumulate(GlobalPose.identity(), motions_from_arrays(dA, dT), fps=fps)
        return traj, dA, dT


class ZeroMotionPredictor(BaseMotionPredictor):
    """Predicts that the body never moves."""

    name = "zero"

    def predict_motions(self, sample: MotionSample) -> MotionArrays:
        return np.zeros((sample.num_motions, 3)), np.zeros((sample.num_motions, 3))


class CameraFrameBaseline(BaseMotionPredictor):
    """
    Reports the subject's camera-coordinate poses as its world poses.

    Its motions are those of the subject seen from a camera moving along `path`,
    so any camera motion leaks into them.
    """

    name = "camera-frame"

    def __init__(self, path: Optional[CameraPath] = None):
        self.path = path or CameraPath()

    def camera_frame_poses(self, sample: MotionSample) -> PoseTrajectory:
        camera = camera_trajectory(self.path, len(sample.gt_poses), fps=sample.fps)
        return camera_frame_trajectory(camera, sample.gt_poses)

    def predict_motions(self, sample: MotionSample) -> MotionArrays:
        return motions_to_arrays(trajectory_motions(self.camera_frame_poses(sample)))


def evaluate_predictors(
    predictors: Sequence[BaseMotionPredictor],
    samples: Sequence[MotionSample],
    skel: Optional[BodySkeleton] = None,
) -> List[MetricReport]:
    """Evaluate several predictors on the same samples."""
    skel = skel or default_skeleton()
    return [predictor.evaluate(samples, skel) for predictor in predictors]


@dataclass(eq=False)
class CameraSimReport:
    """
    Regressor against the camera-frame baseline, with the camera moving and still.

    Attributes:
        camera: The moving camera path
        gmr_on, gmr_off: Regressor metrics with the camera moving and static
        baseline_on, baseline_off: Camera-frame baseline metrics with the camera moving and static
    """
    camera: CameraPath
    gmr_on: MetricReport
    gmr_off: MetricReport
    baseline_on: MetricReport
    baseline_off: MetricReport

    def reports(self) -> List[MetricReport]:
        return [self.gmr_on, self.gmr_off, self.baseline_on, self.baseline_off]

    def to_dict(self) -> dict:
        return {"camera": self.camera.to_dict(), "reports": [r.to_dict() for r in self.reports()]}

    def save(self, path: Union[str, Path]) -> List[Path]:
        """Write the JSON report and a sibling CSV table; returns both paths."""
        path = Path(path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        table = path.with_suffix(".csv")
        with open(table, "w", encoding="utf-8", newline="") as f:
            f.write(reports_to_csv(self.reports()))
        return [path, table]


def simulate_camera(
    samples: Sequence[MotionSample],
    path: CameraPath,
    params: GmrParams,
    skel: Optional[BodySkeleton] = None,
    local_noise_std: float = 0.0,
    seed: int = 0,
) -> CameraSimReport:
    """
    Film every sample with a moving and a static camera and score both predictors.

    The regressor only sees local poses, so the camera cannot change its input;
    the baseline reads the subject's camera-coordinate poses.
    """
    skel = skel or default_skeleton()
    gmr = GmrPredictor(params, local_noise_std=local_noise_std, seed=seed)
    report = CameraSimReport(
        camera=path,
        gmr_on=gmr.evaluate(samples, skel, label="gmr/camera-on"),
        gmr_off=gmr.evaluate(samples, skel, label="gmr/camera-off"),
        baseline_on=CameraFrameBaseline(path).evaluate(samples, skel, label="camera-frame/camera-on"),
        baseline_off=CameraFrameBaseline(static_counterpart(path)).evaluate(
            samples, skel, label="camera-frame/camera-off"
        ),
    )
    logger.info(
        f"{path.kind.value} camera: baseline TME {report.baseline_off.tme:.2f} -> {report.baseline_on.tme:.2f} mm, "
        f"gmr TME {report.gmr_on.tme:.2f} mm"
    )
    return report
