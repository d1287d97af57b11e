"""
Global Motion Regressor.

A stack of bidirectional GRU layers reads the local pose sequence; each frame's
concatenated hidden state goes through an affine projection and an affine
regression head that emits six numbers per frame: a raw axis-angle orientation
motion followed by a translation motion.

Parameter names:

    gru.l{layer}.{fwd|bwd}.{W_z,W_r,W_h}   (in, hidden)
    gru.l{layer}.{fwd|bwd}.{U_z,U_r,U_h}   (hidden, hidden)
    gru.l{layer}.{fwd|bwd}.{b_z,b_r,b_h}   (hidden,)
    proj.W (2 * hidden, proj_dim), proj.b (proj_dim,)
    head.W (proj_dim, 6), head.b (6,)

Layer 0 reads the encoded local poses; layer l > 0 reads concat(fwd, bwd) of
layer l - 1, forward half first.
"""

from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigError, InvalidInputError, ShapeMismatchError
from ..logger import get_logger
from ..rot3 import canonicalize_quat, mat_to_sixd, quat_to_aa, quat_to_mat
from . import tape as ops
from .tape import ArrayLike, Node, Tape

__all__ = [
    "INPUT_REPRESENTATIONS",
    "OUTPUT_DIM",
    "GmrConfig",
    "GmrParams",
    "GruWeights",
    "encode_local_poses",
    "init_params",
    "gru_cell",
    "gmr_forward",
    "gmr_backward",
    "predict",
    "swap_directions",
]

logger = get_logger(__name__)

# Per-joint width of each input rotation encoding
INPUT_REPRESENTATIONS = {"quaternion": 4, "axis-angle": 3, "6d": 6}
OUTPUT_DIM = 6
_GATES = ("z", "r", "h")
_DIRECTIONS = ("fwd", "bwd")


@dataclass(frozen=True)
class GmrConfig:
    """
    Network shape.

    Attributes:
        num_joints: Non-root joints J in the local pose
        layers: Number of bidirectional GRU layers
        hidden: Hidden width per direction
        proj_dim: Width of the projection layer
        input_rep: Local pose encoding: quaternion, axis-angle or 6d
    """
    num_joints: int = 23
    layers: int = 2
    hidden: int = 64
    proj_dim: int = 64
    input_rep: str = "quaternion"

    def __post_init__(self) -> None:
        for name in ("num_joints", "layers", "hidden", "proj_dim"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.input_rep not in INPUT_REPRESENTATIONS:
            raise ConfigError(
                f"input_rep must be one of {sorted(INPUT_REPRESENTATIONS)}, got {self.input_rep!r}"
            )

    @property
    def input_dim(self) -> int:
        return INPUT_REPRESENTATIONS[self.input_rep] * self.num_joints

    @property
    def output_dim(self) -> int:
        return OUTPUT_DIM

    @classmethod
    def full_scale(cls, num_joints: int = 23) -> "GmrConfig":
        """Four layers of 2048 units per direction and a 2048-wide projection."""
        return cls(num_joints=num_joints, layers=4, hidden=2048, proj_dim=2048)

    def to_dict(self) -> Dict[str, Union[int, str]]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "GmrConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**dict(data))

    def parameter_shapes(self) -> "OrderedDict[str, Tuple[int, ...]]":
        """Every tensor name with its shape, in the canonical order."""
        shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
        for layer in range(self.layers):
            in_dim = self.input_dim if layer == 0 else 2 * self.hidden
            for direction in _DIRECTIONS:
                prefix = f"gru.l{layer}.{direction}"
                for gate in _GATES:
                    shapes[f"{prefix}.W_{gate}"] = (in_dim, self.hidden)
                for gate in _GATES:
                    shapes[f"{prefix}.U_{gate}"] = (self.hidden, self.hidden)
                for gate in _GATES:
                    shapes[f"{prefix}.b_{gate}"] = (self.hidden,)
        shapes["proj.W"] = (2 * self.hidden, self.proj_dim)
        shapes["proj.b"] = (self.proj_dim,)
        shapes["head.W"] = (self.proj_dim, OUTPUT_DIM)
        shapes["head.b"] = (OUTPUT_DIM,)
        return shapes


@dataclass(eq=False)
class GmrParams:
    """Named parameter tensors of one network."""
    config: GmrConfig
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def __post_init__(self) -> None:
        expected = self.config.parameter_shapes()
        if list(self.tensors) != list(expected):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            if missing or extra:
                raise ShapeMismatchError(f"parameter names disagree with config: missing {missing}, extra {extra}")
        self.tensors = OrderedDict((name, self.tensors[name]) for name in expected)
        for name, shape in expected.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatchError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite values")
            self.tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self) -> List[str]:
        return list(self.tensors)

    @property
    def num_parameters(self) -> int:
        return int(sum(arr.size for arr in self.tensors.values()))

    def copy(self) -> "GmrParams":
        return GmrParams(self.config, OrderedDict((k, v.copy()) for k, v in self.tensors.items()))

    def replace(self, tensors: Mapping[str, np.ndarray]) -> "GmrParams":
        """New params with some tensors swapped out."""
        merged = OrderedDict(self.tensors)
        merged.update(tensors)
        return GmrParams(self.config, merged)


@dataclass(eq=False)
class GruWeights:
    """One direction of one GRU layer; entries are arrays or tape nodes."""
    W_z: ArrayLike
    W_r: ArrayLike
    W_h: ArrayLike
    U_z: ArrayLike
    U_r: ArrayLike
    U_h: ArrayLike
    b_z: ArrayLike
    b_r: ArrayLike
    b_h: ArrayLike

    @classmethod
    def from_mapping(cls, tensors: Mapping[str, ArrayLike], prefix: str) -> "GruWeights":
        return cls(**{name: tensors[f"{prefix}.{name}"] for name in (f.name for f in fields(cls))})


def encode_local_poses(local: np.ndarray, input_rep: str = "quaternion") -> np.ndarray:
    """
    Flatten local joint rotations into network inputs.

    Args:
        local: (..., J, 4) joint quaternions
        input_rep: quaternion, axis-angle or 6d

    Returns:
        (..., J * width) array
    """
    local = np.asarray(local, dtype=np.float64)
    if local.ndim < 2 or local.shape[-1] != 4:
        raise ShapeMismatchError(f"local poses must have shape (..., J, 4), got {local.shape}")
    quats = canonicalize_quat(local)
    if input_rep == "quaternion":
        encoded = quats
    elif input_rep == "axis-angle":
        encoded = quat_to_aa(quats)
    elif input_rep == "6d":
        encoded = mat_to_sixd(quat_to_mat(quats))
    else:
        raise ConfigError(f"unknown input representation {input_rep!r}")
    return encoded.reshape(local.shape[:-2] + (-1,))


def init_params(config: GmrConfig, seed: int = 0) -> GmrParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases, deterministic in seed."""
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in config.parameter_shapes().items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    params = GmrParams(config, tensors)
    logger.debug(f"Initialized {params.num_parameters} parameters (seed={seed})")
    return params


def gru_cell(x: ArrayLike, h: ArrayLike, weights: GruWeights) -> ArrayLike:
    """
    One GRU update on row vectors (weights stored input-major).

        z  = sigmoid(x W_z + h U_z + b_z)
        r  = sigmoid(x W_r + h U_r + b_r)
        h~ = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h~ + z * h

    Args:
        x: (..., in) input
        h: (..., hidden) previous state
        weights: Gate weights of one direction

    Returns:
        (..., hidden) next state
    """
    in_dim, hidden = ops.value_of(weights.W_z).shape
    if ops.value_of(x).shape[-1] != in_dim or ops.value_of(h).shape[-1] != hidden:
        raise ShapeMismatchError(
            f"gru_cell expects input width {in_dim} and state width {hidden}, "
            f"got {ops.value_of(x).shape[-1]} and {ops.value_of(h).shape[-1]}"
        )
    x2 = ops.reshape(x, (-1, in_dim)) if ops.value_of(x).ndim == 1 else x
    h2 = ops.reshape(h, (-1, hidden)) if ops.value_of(h).ndim == 1 else h

    z = ops.sigmoid(x2 @ weights.W_z + h2 @ weights.U_z + weights.b_z)
    r = ops.sigmoid(x2 @ weights.W_r + h2 @ weights.U_r + weights.b_r)
    candidate = ops.tanh(x2 @ weights.W_h + (r * h2) @ weights.U_h + weights.b_h)
    h_next = (1.0 - z) * candidate + z * h2

    if ops.value_of(x).ndim == 1 and ops.value_of(h).ndim == 1:
        h_next = ops.reshape(h_next, (hidden,))
    return h_next


def _run_direction(
    inputs: List[ArrayLike], weights: GruWeights, batch: int, hidden: int, reverse: bool
) -> List[ArrayLike]:
    steps = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    h: ArrayLike = np.zeros((batch, hidden))
    outputs: List[ArrayLike] = [None] * len(inputs)  # type: ignore[list-item]
    for t in steps:
        h = gru_cell(inputs[t], h, weights)
        outputs[t] = h
    return outputs


def _as_batch(seq: np.ndarray, config: GmrConfig) -> Tuple[np.ndarray, bool]:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim not in (3, 4) or seq.shape[-2:] != (config.num_joints, 4):
        raise ShapeMismatchError(
            f"local pose sequence must be (T, {config.num_joints}, 4) or (B, T, {config.num_joints}, 4), "
            f"got {seq.shape}"
        )
    single = seq.ndim == 3
    if single:
        seq = seq[None]
    if seq.shape[1] < 1:
        raise InvalidInputError("local pose sequence is empty")
    return seq, single


def gmr_forward(params: GmrParams, seq: np.ndarray, tape: Optional[Tape] = None) -> ArrayLike:
    """
    Run the regressor over a local pose window.

    Args:
        params: Network parameters
        seq: (T, J, 4) or (B, T, J, 4) local joint quaternions
        tape: Record the computation here for gmr_backward; None runs plain numpy

    Returns:
        (T, 6) or (B, T, 6) raw outputs (dA ++ dT per frame), a Node when a tape is given

    Raises:
        InvalidInputError: If the sequence is empty
        ShapeMismatchError: If the joint count disagrees with the config
    """
    config = params.config
    batch_seq, single = _as_batch(seq, config)
    batch, length = batch_seq.shape[:2]
    encoded = encode_local_poses(batch_seq, config.input_rep)

    if tape is None:
        tensors: Mapping[str, ArrayLike] = params.tensors
    else:
        tensors = {name: tape.variable(value, name=name) for name, value in params.items()}

    layer_inputs: List[ArrayLike] = [encoded[:, t, :] for t in range(length)]
    for layer in range(config.layers):
        fwd = _run_direction(
            layer_inputs, GruWeights.from_mapping(tensors, f"gru.l{layer}.fwd"), batch, config.hidden, reverse=False
        )
        bwd = _run_direction(
            layer_inputs, GruWeights.from_mapping(tensors, f"gru.l{layer}.bwd"), batch, config.hidden, reverse=True
        )
        layer_inputs = [ops.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]

    states = ops.stack(layer_inputs, axis=1)
    projected = states @ tensors["proj.W"] + tensors["proj.b"]
    out = projected @ tensors["head.W"] + tensors["head.b"]
    if single:
        out = ops.reshape(out, (length, OUTPUT_DIM))
    return out


def predict(params: GmrParams, seq: np.ndarray) -> np.ndarray:
    """Raw outputs without recording gradients."""
    return np.asarray(gmr_forward(params, seq))


def gmr_backward(tape: Tape, loss: Node) -> Dict[str, np.ndarray]:
    """
    Gradients of a scalar loss for every parameter registered by gmr_forward.

    Raises:
        InvalidInputError: If the loss is not a scalar node of this tape
    """
    grads = tape.gradients(loss)
    return OrderedDict((name, grads[name]) for name in tape.variables if name in grads)


def swap_directions(params: GmrParams) -> GmrParams:
    """
    Exchange the forward and backward GRU blocks.

    Input rows of layers >= 1 and of the projection are swapped half for half, so
    the swapped network on a reversed sequence yields the reversed outputs.
    """
    config = params.config
    hidden = config.hidden

    def swap_rows(arr: np.ndarray) -> np.ndarray:
        return np.concatenate([arr[hidden:], arr[:hidden]], axis=0)

    swapped: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, value in params.items():
        if name.startswith("gru."):
            _, layer, direction, tensor = name.split(".")
            other = "bwd" if direction == "fwd" else "fwd"
            source = params[f"gru.{layer}.{other}.{tensor}"].copy()
            if tensor.startswith("W_") and layer != "l0":
                source = swap_rows(source)
            swapped[name] = source
        elif name == "proj.W":
            swapped[name] = swap_rows(value)
        else:
            swapped[name] = value.copy()
    return GmrParams(config, swapped)
