"""
Factory for motion predictors.

Predictors are looked up by name so the command line and config files can pick
one without importing its class.
"""

from pathlib import Path
from typing import Any, Optional, Union

from .camera import CameraPath
from .errors import InvalidInputError
from .logger import get_logger
from .net.checkpoint import load_checkpoint
from .net.gmr import GmrParams
from .predictors import BaseMotionPredictor, CameraFrameBaseline, GmrPredictor, ZeroMotionPredictor

__all__ = ["PREDICTOR_NAMES", "create_predictor"]

logger = get_logger(__name__)

PREDICTOR_NAMES = ("gmr", "zero", "camera-frame")


def create_predictor(
    name: str,
    params: Optional[GmrParams] = None,
    checkpoint: Optional[Union[str, Path]] = None,
    camera_path: Optional[CameraPath] = None,
    **kwargs: Any,
) -> BaseMotionPredictor:
    """
    Create a predictor by name.

    Args:
        name: gmr, zero or camera-frame
        params: Network parameters for gmr
        checkpoint: Checkpoint file for gmr, used when params is not given
        camera_path: Camera motion for camera-frame (static if None)
        **kwargs: Extra predictor arguments (local_noise_std, seed for gmr)

    Returns:
        A predictor instance

    Raises:
        InvalidInputError: For an unknown name or a gmr predictor without parameters
    """
    name = name.lower()
    logger.debug(f"Creating predictor: {name}")

    if name == "gmr":
        if params is None:
            if checkpoint is None:
                logger.error("The gmr predictor needs params or a checkpoint")
                raise InvalidInputError("the gmr predictor needs params or a checkpoint")
            params = load_checkpoint(checkpoint).params
        return GmrPredictor(params, **kwargs)

    elif name == "zero":
        return ZeroMotionPredictor()

    elif name == "camera-frame":
        return CameraFrameBaseline(camera_path)

    else:
        logger.error(f"Unsupported predictor: {name}")
        raise InvalidInputError(f"unsupported predictor {name!r} (choose from {', '.join(PREDICTOR_NAMES)})")
