"""Central-difference gradient checks."""

from typing import Callable, Dict, Mapping, Tuple

import numpy as np

from ..logger import get_logger

__all__ = ["numerical_gradient", "relative_error", "check_gradients"]

logger = get_logger(__name__)


def numerical_gradient(f: Callable[[], float], array: np.ndarray, index: Tuple[int, ...], step: float = 1e-5) -> float:
    """
    d f / d array[index] by central differences.

    The array is perturbed in place and restored before returning.
    """
    original = array[index]
    try:
        array[index] = original + step
        f_plus = f()
        array[index] = original - step
        f_minus = f()
    finally:
        array[index] = original
    return (f_plus - f_minus) / (2.0 * step)


def relative_error(analytic: float, numeric: float, floor: float = 1e-7) -> float:
    """|a - n| / max(|a|, |n|), with both below floor counted as agreement."""
    scale = max(abs(analytic), abs(numeric))
    if scale < floor:
        return 0.0
    return abs(analytic - numeric) / scale


def check_gradients(
    loss_fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    samples_per_tensor: int = 5,
    step: float = 1e-5,
    seed: int = 0,
) -> Dict[str, float]:
    """
    Compare analytic gradients with central differences on sampled entries.

    Args:
        loss_fn: Evaluates the loss from the current contents of params
        params: Tensors that are perturbed in place
        grads: Analytic gradients, same names and shapes
        samples_per_tensor: Entries checked per tensor (all entries if the tensor is smaller)
        step: Finite-difference step
        seed: Seed for choosing entries

    Returns:
        Maximum relative error per tensor name
    """
    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for name, array in params.items():
        if array.size <= samples_per_tensor:
            flat_indices = np.arange(array.size)
        else:
            flat_indices = rng.choice(array.size, size=samples_per_tensor, replace=False)
        worst = 0.0
        for flat in flat_indices:
            index = np.unravel_index(int(flat), array.shape)
            numeric = numerical_gradient(loss_fn, array, index, step)
            worst = max(worst, relative_error(float(grads[name][index]), numeric))
        errors[name] = worst
        logger.debug(f"gradcheck {name}: max relative error {worst:.3e}")
    return errors
