"""
Mini-batch training of the regressor with Adam.

The run is a fixed number of steps. Step s draws its batch from a generator
seeded with (seed, s), so a run is fully determined by the seed, the config
and the dataset, and a run resumed from a checkpoint continues exactly as the
uninterrupted run would have.
"""

import csv
import dataclasses
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .body import BodySkeleton, default_skeleton, rest_vertices
from .config import options_from_mapping, read_flat_config
from .datagen import MotionSample, flip, perturb_local
from .errors import InvalidInputError, NumericFailureError, ShapeMismatchError
from .logger import get_logger
from .net import tape as ops
from .net.checkpoint import Checkpoint
from .net.gmr import INPUT_REPRESENTATIONS, GmrConfig, GmrParams, gmr_backward, gmr_forward, init_params
from .net.tape import Node, Tape
from .objective import LossComponents, LossWeights, MetricReport, OrientationLoss, loss_components, loss_total
from .predictors import GmrPredictor

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainingLog",
    "TRAIN_LOG_COLUMNS",
    "adam_update",
    "draw_batch",
    "stack_batch",
    "compute_losses",
    "train_step",
    "train",
    "evaluate",
]

logger = get_logger(__name__)

TRAIN_LOG_COLUMNS = ("step", "L_total", "L_ori", "L_trans", "L_vertex", "L_smooth", "OME", "TME", "VME")

# Held-out metrics use at most this many training windows when no eval set is given
_EVAL_FALLBACK_SIZE = 16


@dataclass
class TrainConfig:
    """
    Training options, readable from a flat key=value file.

    Attributes:
        lr: Adam learning rate
        batch: Windows per step
        steps: Total optimizer steps of the run
        seed: Seed of the initialization and the batch sampler
        w_ori, w_trans, w_vertex, w_smooth: Loss weights
        orientation_loss: chordal, angular or axis-angle
        flip_aug: Randomly reverse drawn windows in time
        flip_prob: Probability of reversing a drawn window
        local_noise_std: Noise added to the input local poses (radians)
        eval_every: Steps between metric evaluations (0 disables)
        layers, hidden, proj_dim, input_rep: Network shape
    """
    lr: float = 5e-5
    batch: int = 8
    steps: int = 500
    seed: int = 0
    w_ori: float = 1.0
    w_trans: float = 1.0
    w_vertex: float = 1.0
    w_smooth: float = 1e-2
    orientation_loss: str = "chordal"
    flip_aug: bool = True
    flip_prob: float = 0.5
    local_noise_std: float = 0.0
    eval_every: int = 100
    layers: int = 2
    hidden: int = 64
    proj_dim: int = 64
    input_rep: str = "quaternion"

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise InvalidInputError(f"lr must be positive, got {self.lr}")
        if self.batch < 1 or self.steps < 0 or self.eval_every < 0:
            raise InvalidInputError("batch must be >= 1, steps and eval_every >= 0")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidInputError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        if not self.local_noise_std >= 0:
            raise InvalidInputError("local_noise_std must be nonnegative")
        if self.input_rep not in INPUT_REPRESENTATIONS:
            raise InvalidInputError(f"unknown input_rep {self.input_rep!r}")
        if self.orientation_loss not in {kind.value for kind in OrientationLoss}:
            raise InvalidInputError(f"unknown orientation_loss {self.orientation_loss!r}")
        self.loss_weights()

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w_ori, self.w_trans, self.w_vertex, self.w_smooth)

    def network_config(self, num_joints: int) -> GmrConfig:
        return GmrConfig(
            num_joints=num_joints,
            layers=self.layers,
            hidden=self.hidden,
            proj_dim=self.proj_dim,
            input_rep=self.input_rep,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        return options_from_mapping(cls, data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TrainConfig":
        return cls.from_dict(read_flat_config(path))


@dataclass(eq=False)
class AdamState:
    """First and second moments per parameter plus the step counter."""
    m: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    v: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, tensors: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            m=OrderedDict((name, np.zeros_like(value)) for name, value in tensors.items()),
            v=OrderedDict((name, np.zeros_like(value)) for name, value in tensors.items()),
        )

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "AdamState":
        if not ckpt.has_optimizer_state:
            return cls.zeros_like(ckpt.params.tensors)
        return cls(m=OrderedDict(ckpt.adam_m), v=OrderedDict(ckpt.adam_v), step=ckpt.adam_step)


def adam_update(
    tensors: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> Tuple["OrderedDict[str, np.ndarray]", AdamState]:
    """
    One bias-corrected Adam step.

    Args:
        tensors: Current values by name
        grads: Gradients by name (missing names count as zero)
        state: Moments from the previous step
        lr: Learning rate

    Returns:
        (updated tensors, updated state); the inputs are not modified
    """
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    new_m: "OrderedDict[str, np.ndarray]" = OrderedDict()
    new_v: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, value in tensors.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        m = b1 * state.m[name] + (1.0 - b1) * grad
        v = b2 * state.v[name] + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        new_tensors[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_tensors, dataclasses.replace(state, m=new_m, v=new_v, step=step)


def draw_batch(samples: Sequence[MotionSample], config: TrainConfig, step: int) -> List[MotionSample]:
    """
    The batch of a training step, drawn with replacement.

    Raises:
        InvalidInputError: If there are no samples
    """
    if not samples:
        raise InvalidInputError("cannot draw a batch from an empty dataset")
    rng = np.random.default_rng([config.seed, step])
    indices = rng.integers(0, len(samples), size=config.batch)
    flips = rng.random(config.batch) < config.flip_prob
    batch = []
    for k, (index, flipped) in enumerate(zip(indices, flips)):
        sample = samples[int(index)]
        if config.flip_aug and flipped:
            sample = flip(sample)
        if config.local_noise_std > 0:
            sample = perturb_local(sample, config.local_noise_std, seed=[config.seed, step, k])
        batch.append(sample)
    return batch


def stack_batch(
    batch: Sequence[MotionSample], skel: BodySkeleton
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Arrays of a batch.

    Returns:
        (local input (B, T, J, 4), gt dA (B, T, 3), gt dT (B, T, 3), identity-pose vertices (B, T, N, 3))

    Raises:
        InvalidInputError: If the batch is empty
        ShapeMismatchError: If the windows differ in length or joint count
    """
    if not batch:
        raise InvalidInputError("empty batch")
    shapes = {sample.local.shape for sample in batch}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"batch windows differ in shape: {sorted(shapes)}")
    local = np.stack([sample.local[:-1] for sample in batch])
    motions = [sample.motion_arrays() for sample in batch]
    gt_dA = np.stack([dA for dA, _ in motions])
    gt_dT = np.stack([dT for _, dT in motions])
    beta = np.stack([sample.beta for sample in batch])
    points = rest_vertices(skel, local, beta[:, None, :])
    return local, gt_dA, gt_dT, points


def compute_losses(
    params: GmrParams,
    batch: Sequence[MotionSample],
    config: TrainConfig,
    skel: BodySkeleton,
    tape: Optional[Tape] = None,
) -> Tuple[LossComponents, Union[Node, float]]:
    """Loss terms and the weighted total of a batch, summed over windows."""
    local, gt_dA, gt_dT, points = stack_batch(batch, skel)
    raw = gmr_forward(params, local, tape=tape)
    components = loss_components(raw, gt_dA, gt_dT, points, kind=config.orientation_loss)
    return components, loss_total(components, config.loss_weights())


def train_step(
    params: GmrParams,
    adam: AdamState,
    batch: Sequence[MotionSample],
    config: TrainConfig,
    skel: Optional[BodySkeleton] = None,
) -> Tuple[GmrParams, AdamState, Dict[str, float]]:
    """
    Forward, backward and one Adam update.

    Returns:
        (new params, new optimizer state, loss breakdown with keys L_total, L_ori, L_trans, L_vertex, L_smooth)

    Raises:
        NumericFailureError: If the loss or a gradient is not finite
    """
    skel = skel or default_skeleton()
    tape = Tape()
    components, total = compute_losses(params, batch, config, skel, tape=tape)
    breakdown = {"L_total": float(ops.value_of(total))}
    breakdown.update(components.as_floats())
    if not np.isfinite(breakdown["L_total"]):
        logger.error(f"Non-finite loss at optimizer step {adam.step + 1}: {breakdown}")
        raise NumericFailureError(f"training loss became non-finite at step {adam.step + 1}: {breakdown}")

    grads = gmr_backward(tape, total)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            logger.error(f"Non-finite gradient for {name} at optimizer step {adam.step + 1}")
            raise NumericFailureError(f"gradient of {name} became non-finite")

    tensors, adam = adam_update(params.tensors, grads, adam, config.lr)
    return params.replace(tensors), adam, breakdown


class TrainingLog:
    """
    Per-step loss rows, optionally streamed to a CSV file.

    Metric columns are empty except at evaluation steps.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None, append: bool = False):
        self.path = Path(path) if path is not None else None
        self.rows: List[Dict[str, str]] = []
        if self.path is not None and not (append and self.path.exists()):
            with open(self.path, "w", encoding="utf-8", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow(TRAIN_LOG_COLUMNS)

    def record(self, step: int, losses: Mapping[str, float], report: Optional[MetricReport] = None) -> None:
        row = {column: "" for column in TRAIN_LOG_COLUMNS}
        row["step"] = str(step)
        for key, value in losses.items():
            row[key] = repr(float(value))
        if report is not None:
            row["OME"] = repr(report.ome)
            row["TME"] = repr(report.tme)
            row["VME"] = repr(report.vme)
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow([row[c] for c in TRAIN_LOG_COLUMNS])

    def losses(self, key: str = "L_total") -> np.ndarray:
        return np.array([float(row[key]) for row in self.rows])


def evaluate(
    params: GmrParams,
    dataset: Sequence[MotionSample],
    skel: Optional[BodySkeleton] = None,
    label: str = "gmr",
) -> MetricReport:
    """
    OME, TME and VME of the network on a dataset.

    Raises:
        InvalidInputError: If the dataset is empty
    """
    return GmrPredictor(params).evaluate(dataset, skel, label=label)


def _checkpoint(params: GmrParams, adam: AdamState, config: TrainConfig, step: int) -> Checkpoint:
    return Checkpoint(
        params=params,
        seed=config.seed,
        step=step,
        adam_m=adam.m,
        adam_v=adam.v,
        adam_step=adam.step,
        metadata={"train_config": config.to_dict()},
    )


def train(
    samples: Sequence[MotionSample],
    config: TrainConfig,
    skel: Optional[BodySkeleton] = None,
    resume: Optional[Checkpoint] = None,
    eval_samples: Optional[Sequence[MotionSample]] = None,
    log: Optional[TrainingLog] = None,
    stop_at: Optional[int] = None,
) -> Checkpoint:
    """
    Train from a seeded initialization or resume from a checkpoint.

    Args:
        samples: Training windows
        config: Training options
        skel: Body model for the vertex loss (default skeleton if None)
        resume: Checkpoint to continue from
        eval_samples: Held-out windows for the periodic metrics
        log: Receives one row per step
        stop_at: Stop after this step instead of config.steps, leaving a resumable checkpoint

    Returns:
        Checkpoint holding the final parameters and optimizer state

    Raises:
        InvalidInputError: If the dataset is empty or the checkpoint does not match the config
        NumericFailureError: If the loss diverges
    """
    if not samples:
        raise InvalidInputError("training dataset is empty")
    skel = skel or default_skeleton()
    network = config.network_config(samples[0].local.shape[1])

    if resume is None:
        params = init_params(network, seed=config.seed)
        adam = AdamState.zeros_like(params.tensors)
        start = 0
    else:
        if resume.params.config != network:
            raise InvalidInputError(
                f"checkpoint network {resume.params.config.to_dict()} does not match config {network.to_dict()}"
            )
        if resume.seed != config.seed:
            raise InvalidInputError(f"checkpoint seed {resume.seed} differs from config seed {config.seed}")
        params = resume.params
        adam = AdamState.from_checkpoint(resume)
        start = resume.step
        logger.info(f"Resuming training at step {start}")

    end = config.steps if stop_at is None else min(stop_at, config.steps)
    eval_set = list(eval_samples) if eval_samples else list(samples[:_EVAL_FALLBACK_SIZE])
    logger.info(
        f"Training {params.num_parameters} parameters on {len(samples)} windows, steps {start + 1}..{end}"
    )

    for step in range(start + 1, end + 1):
        batch = draw_batch(samples, config, step)
        params, adam, losses = train_step(params, adam, batch, config, skel)
        report = None
        if config.eval_every and (step % config.eval_every == 0 or step == config.steps):
            report = evaluate(params, eval_set, skel, label=f"step {step}")
            logger.info(
                f"step {step}: loss {losses['L_total']:.4f}, "
                f"OME {report.ome:.3f} deg, TME {report.tme:.2f} mm, VME {report.vme:.2f} mm"
            )
        else:
            logger.debug(f"step {step}: loss {losses['L_total']:.4f}")
        if log is not None:
            log.record(step, losses, report)

    return _checkpoint(params, adam, config, max(start, end))
