"""
global-motion-tools: regress a body's frame-to-frame global motion from its local pose sequence.
"""

__version__ = "0.1.0"

from .body import BodySkeleton, default_skeleton, forward_kinematics, mesh_offset
from .camera import CameraKind, CameraPath, camera_trajectory
from .datagen import GenerationConfig, GeneratorSpec, MotionKind, MotionSample, build_dataset, generate
from .errors import (
    ConfigError,
    Degenerate6DError,
    GlobalMotionError,
    InvalidInputError,
    InvalidRotationError,
    NumericFailureError,
    ShapeMismatchError,
)
from .factory import create_predictor
from .net import Checkpoint, GmrConfig, GmrParams, gmr_forward, init_params, load_checkpoint, save_checkpoint
from .objective import LossWeights, MetricReport, OrientationLoss
from .predictors import BaseMotionPredictor, CameraFrameBaseline, GmrPredictor, ZeroMotionPredictor, simulate_camera
from .rigid_motion import GlobalMotion, GlobalPose, PoseTrajectory, accumulate, compose, extract_motion
from .trainer import TrainConfig, evaluate, train

__all__ = [
    "__version__",
    "BodySkeleton",
    "default_skeleton",
    "forward_kinematics",
    "mesh_offset",
    "CameraKind",
    "CameraPath",
    "camera_trajectory",
    "GenerationConfig",
    "GeneratorSpec",
    "MotionKind",
    "MotionSample",
    "build_dataset",
    "generate",
    "GlobalMotionError",
    "InvalidInputError",
    "InvalidRotationError",
    "Degenerate6DError",
    "ShapeMismatchError",
    "ConfigError",
    "NumericFailureError",
    "create_predictor",
    "Checkpoint",
    "GmrConfig",
    "GmrParams",
    "gmr_forward",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "LossWeights",
    "MetricReport",
    "OrientationLoss",
    "BaseMotionPredictor",
    "GmrPredictor",
    "ZeroMotionPredictor",
    "CameraFrameBaseline",
    "simulate_camera",
    "GlobalPose",
    "GlobalMotion",
    "PoseTrajectory",
    "accumulate",
    "compose",
    "extract_motion",
    "TrainConfig",
    "train",
    "evaluate",
]
