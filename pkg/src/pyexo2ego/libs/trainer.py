#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module trains a P-GAN end to end:
- TrainConfig and the Adam optimizer (with aliasing-aware updates)
- One training step: discriminator update, then joint generator update
- The training loop over a dataset directory, with CSV loss log
- The binary tensor file used for checkpoints and classifier weights

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from contextlib import contextmanager
import csv
from dataclasses import asdict, dataclass, field, replace
import json
import math
from pathlib import Path
import struct
from typing import Any, Callable, Iterator, Optional, Union

# Third party packages
import numpy as np
import proglog

# pyexo2ego libs
from pyexo2ego.libs.autodiff import (
    NonFiniteError,
    ShapeMismatchError,
    Tensor,
    backward,
    no_grad,
)
from pyexo2ego.libs.exceptions import AppBaseException
from pyexo2ego.libs.logger import logger
from pyexo2ego.libs.losses import (
    CONTEXTUAL_DIRECTIONS,
    CONTEXTUAL_FORMULAS,
    GeneratorForward,
    LossReport,
    LossWeights,
    discriminator_loss,
    generator_losses,
    reconstruction_loss,
)
from pyexo2ego.libs.nets import (
    ModelInputs,
    PGANModel,
    UNetConfig,
    assert_shared,
    prepare_inputs,
)
from pyexo2ego.libs.synthdata import NUM_SEG_CLASSES, ViewPair, augment, load_split, stack_batch
from pyexo2ego.libs.utils import dataclass_from_mapping, make_rng

# ------------------------
# Constants
# ------------------------

TENSOR_FILE_MAGIC = b"PGAN"
TENSOR_FILE_VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("u1"): 2}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}

OPTIMIZER_PREFIX = "opt/"
META_CONFIG = "meta/config"
META_STEP = "meta/step"
META_PSI_SEED = "meta/psi_seed"
META_LAST_BATCH = "meta/last_batch"
META_FINAL_RECONSTRUCTION = "meta/final_reconstruction"

CHECKPOINT_NAME = "final.pgan"
CHECKPOINT_DIR = "checkpoints"
LOSS_LOG_NAME = "losses.csv"

_STREAM_SHUFFLE = 11
_STREAM_AUGMENT = 12

# ------------------------
# Exceptions
# ------------------------

class TrainingException(AppBaseException):
    """
    Raised when a training run cannot proceed.
    """
    pass


class NonFiniteLossError(TrainingException):
    """
    Raised when a loss component becomes NaN or infinite.

    Attributes:
        component (str): Name of the offending loss component
    """

    def __init__(self, component: str, detail: str = ""):
        self.component = component
        suffix = f" ({detail})" if detail else ""
        super().__init__(f"Non-finite value in loss component '{component}'{suffix}; training aborted")


class CheckpointException(AppBaseException):
    """
    Raised on unreadable, truncated or mismatched tensor files.
    """
    pass


# ------------------------
# Configuration
# ------------------------

@dataclass
class TrainConfig:
    """
    Training hyper-parameters.

    Attributes:
        weights (LossWeights): Loss weights
        epochs (int): Passes over the train split
        batch_size (int): Pairs per step
        learning_rate (float): Adam step size, both networks
        adam_beta1 (float): First moment decay
        adam_beta2 (float): Second moment decay
        adam_eps (float): Adam denominator guard
        seed (int): Initialization, shuffling and augmentation seed
        psi_seed (int): Feature extractor seed
        net (UNetConfig): Generator architecture
        contextual_formula (str): "standard" or "literal"
        contextual_directions (str): "both" or "ego_only"
        seg_conditioning (bool): Feed segmentation maps to the generators
        augment (bool): Flip and crop-resize training pairs. Off by
            default: the per-view crop offsets are independent, so they
            add an unpredictable shift to the reconstruction targets
        checkpoint_every (int): Intermediate checkpoint cadence in steps
            (0 = final checkpoint only)
        max_steps (int): Step cap (0 = no cap)
    """

    weights: LossWeights = field(default_factory=LossWeights)
    epochs: int = 35
    batch_size: int = 4
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    psi_seed: int = 0
    net: UNetConfig = field(default_factory=UNetConfig)
    contextual_formula: str = "standard"
    contextual_directions: str = "both"
    seg_conditioning: bool = False
    augment: bool = False
    checkpoint_every: int = 0
    max_steps: int = 0


    def validate(self) -> None:
        """
        Raises:
            TrainingException: On any out-of-range field
        """

        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise TrainingException(
                "epochs, batch_size and learning_rate must be positive, got "
                + f"{self.epochs}, {self.batch_size} and {self.learning_rate}"
            )
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise TrainingException("Adam betas must lie in [0, 1) and eps must be > 0")
        if self.checkpoint_every < 0 or self.max_steps < 0:
            raise TrainingException("checkpoint_every and max_steps must be >= 0")
        if self.contextual_formula not in CONTEXTUAL_FORMULAS:
            raise TrainingException(
                f"contextual_formula must be one of {CONTEXTUAL_FORMULAS}, got '{self.contextual_formula}'"
            )
        if self.contextual_directions not in CONTEXTUAL_DIRECTIONS:
            raise TrainingException(
                f"contextual_directions must be one of {CONTEXTUAL_DIRECTIONS}, "
                + f"got '{self.contextual_directions}'"
            )
        self.weights.validate()
        self.network_config().validate()


    def network_config(self) -> UNetConfig:
        """
        Generator architecture with the conditioning channel applied.
        """

        return replace(self.net, conditioning_channels=int(self.seg_conditioning))


    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        return dataclass_from_mapping(cls, data)


def build_model(config: TrainConfig) -> PGANModel:
    return PGANModel(config.network_config(), seed=config.seed, psi_seed=config.psi_seed)


# ------------------------
# Optimizer
# ------------------------

@dataclass
class AdamState:
    """
    Moments and step counter of an Adam optimizer.
    """

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 2e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8
) -> AdamState:
    """
    One bias-corrected Adam update, in place.

    Arrays listed under several names (aliased storage) are updated
    once, with the gradient of their first name.

    Args:
        params (dict[str, np.ndarray]): Parameters, updated in place
        grads (dict[str, np.ndarray]): Gradients by parameter name
        state (AdamState): Moments, updated in place
        lr (float, optional): Step size. Defaults to 2e-4.
        beta1 (float, optional): Defaults to 0.5.
        beta2 (float, optional): Defaults to 0.999.
        eps (float, optional): Defaults to 1e-8.

    Returns:
        AdamState: The updated state

    Raises:
        ShapeMismatchError: If a gradient shape differs from its parameter

    Example:
        >>> p = {"w": np.zeros(1)}
        >>> state = adam_step(p, {"w": np.ones(1)}, AdamState())
        >>> p["w"]
        array([-0.0002])
    """

    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step

    seen: set[int] = set()
    for name, param in params.items():
        if id(param) in seen:
            logger.debug(f"Adam: '{name}' aliases an already updated parameter")
            continue
        seen.add(id(param))
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeMismatchError("adam_step", param.shape, grad.shape, name)
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * (grad * grad)
        update = (lr / correction1) * m / (np.sqrt(v / correction2) + eps)
        param -= update.astype(param.dtype)
    return state


class AdamOptimizer:
    """
    Adam over a named parameter map.

    Tensors reachable under several names (shared layers) are kept once,
    under their first name, so they take exactly one step per update.
    Moments exist for every parameter from construction on.

    Attributes:
        params (dict[str, Tensor]): Deduplicated parameters
        state (AdamState): Moments and step counter
    """

    def __init__(
        self,
        named_params: dict[str, Tensor],
        lr: float = 2e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8
    ) -> None:
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.params: dict[str, Tensor] = {}
        seen: set[int] = set()
        for name, tensor in named_params.items():
            if id(tensor) in seen:
                logger.debug(f"Adam: skipping alias '{name}'")
                continue
            seen.add(id(tensor))
            self.params[name] = tensor
        self.state = AdamState(
            m={name: np.zeros_like(t.data) for name, t in self.params.items()},
            v={name: np.zeros_like(t.data) for name, t in self.params.items()},
        )


    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()


    def step(self) -> None:
        grads = {
            name: t.grad if t.grad is not None else np.zeros_like(t.data)
            for name, t in self.params.items()
        }
        adam_step(
            {name: t.data for name, t in self.params.items()}, grads, self.state,
            self.lr, self.beta1, self.beta2, self.eps
        )


    def state_dict(self) -> dict[str, np.ndarray]:
        """
        Flat tensor map: "step" (f64 scalar), "m/<name>", "v/<name>".
        """

        tensors = {"step": np.array(float(self.state.step))}
        for name in self.params:
            tensors[f"m/{name}"] = self.state.m[name]
            tensors[f"v/{name}"] = self.state.v[name]
        return tensors


    def load_state_dict(self, tensors: dict[str, np.ndarray]) -> None:
        """
        Raises:
            CheckpointException: On unknown or mismatched entries
        """

        for key, array in tensors.items():
            if key == "step":
                self.state.step = int(array)
                continue
            kind, _, name = key.partition("/")
            if kind not in ("m", "v") or name not in self.params:
                raise CheckpointException(f"Unknown optimizer tensor '{key}'")
            target = getattr(self.state, kind)[name]
            if target.shape != array.shape:
                raise CheckpointException(
                    f"Optimizer tensor '{key}' has shape {array.shape}, expected {target.shape}"
                )
            target[...] = array


# ------------------------
# Training Step
# ------------------------

@contextmanager
def loss_component(name: str) -> Iterator[None]:
    """
    Turn non-finite values raised while computing a loss component into
    NonFiniteLossError naming that component.
    """

    try:
        yield
    except NonFiniteError as exc:
        raise NonFiniteLossError(name, str(exc)) from exc


def _checked(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise NonFiniteLossError(name)
    return value


def batch_inputs(pairs: list[ViewPair], config: TrainConfig) -> ModelInputs:
    batch = stack_batch(pairs)
    return prepare_inputs(
        batch.exo, batch.ego, batch.exo_seg, batch.ego_seg,
        NUM_SEG_CLASSES, config.seg_conditioning
    )


def batch_reconstruction(model: PGANModel, pairs: list[ViewPair], config: TrainConfig) -> float:
    """
    Reconstruction loss of the current generators on unaugmented pairs,
    weighted with config.weights.lambda3.
    """

    inputs = batch_inputs(pairs, config)
    with no_grad():
        forward = GeneratorForward.run(model.generators, inputs.g1_input, inputs.g2_input)
        value = reconstruction_loss(
            model.generators, inputs.exo, inputs.ego, config.weights.lambda3, forward
        )
    return _checked("reconstruction", value.item())


def train_step(
    model: PGANModel,
    inputs: ModelInputs,
    config: TrainConfig,
    g_optimizer: AdamOptimizer,
    d_optimizer: AdamOptimizer
) -> LossReport:
    """
    One alternating update on a batch.

    1. Both generators run without gradient tracking.
    2. D1 learns to tell ego from G1's fake given the G1 input, D2 exo
       from G2's fake given the G2 input; only discriminator parameters
       move.
    3. The fakes are recomputed and the generator objective updates G1
       and G2 jointly; discriminator parameters do not move.

    Args:
        model (PGANModel): Networks, updated in place
        inputs (ModelInputs): Batch
        config (TrainConfig): Loss weights and contextual options
        g_optimizer (AdamOptimizer): Over model.generator_parameters()
        d_optimizer (AdamOptimizer): Over model.discriminator_parameters()

    Returns:
        LossReport: Component values; d1/d2 are measured before the
            discriminator update, the others before the generator update

    Raises:
        NonFiniteLossError: Naming the first non-finite component
    """

    with no_grad(), loss_component("generator forward"):
        fixed = GeneratorForward.run(model.generators, inputs.g1_input, inputs.g2_input)

    d_optimizer.zero_grad()
    with loss_component("d1"):
        d1 = discriminator_loss(
            model.discriminate("d1", inputs.g1_input, inputs.ego),
            model.discriminate("d1", inputs.g1_input, fixed.fake_ego),
        )
    with loss_component("d2"):
        d2 = discriminator_loss(
            model.discriminate("d2", inputs.g2_input, inputs.exo),
            model.discriminate("d2", inputs.g2_input, fixed.fake_exo),
        )
    d1_value, d2_value = _checked("d1", d1.item()), _checked("d2", d2.item())
    with loss_component("discriminator backward"):
        backward(d1 + d2, leaves=d_optimizer.params.values())
    d_optimizer.step()

    g_optimizer.zero_grad()
    terms = generator_losses(
        model, inputs, config.weights,
        config.contextual_formula, config.contextual_directions,
        guard=loss_component
    )
    values = {
        name: _checked(name, getattr(terms, name).item())
        for name in ("gan1", "gan2", "cross_cycle", "reconstruction", "contextual")
    }
    with loss_component("generator backward"):
        backward(terms.objective, leaves=g_optimizer.params.values())
    g_optimizer.step()

    report = LossReport.from_parts(d1=d1_value, d2=d2_value, weights=config.weights, **values)
    _checked("total", report.total)
    return report


# ------------------------
# Training Loop
# ------------------------

@dataclass
class TrainResult:
    """
    Outcome of a training run.
    """

    model: PGANModel
    steps: int
    checkpoint_path: Path
    loss_log_path: Path
    last_report: Optional[LossReport] = None
    final_reconstruction: Optional[float] = None


def steps_per_epoch(record_count: int, batch_size: int) -> int:
    return math.ceil(record_count / batch_size)


def train(
    dataset: Union[str, Path],
    config: TrainConfig,
    output_dir: Union[str, Path],
    bar_logger: Any = None,
    on_epoch: Optional[Callable[[int, float], None]] = None
) -> TrainResult:
    """
    Train a P-GAN on the train split of a dataset directory.

    Shuffling and augmentation draw from streams of config.seed, so a
    run is fully determined by the dataset files and the config. Every
    step appends one row to losses.csv; checkpoints are written every
    config.checkpoint_every steps and at the end (final.pgan).

    The rows of losses.csv are measured before each generator update. The
    final checkpoint also stores the last batch (train-split indices) and
    the final model's unaugmented reconstruction loss on it, which
    replay_reconstruction() recomputes from the checkpoint alone.

    Args:
        dataset (Union[str, Path]): Dataset directory
        config (TrainConfig): Hyper-parameters
        output_dir (Union[str, Path]): Run directory (created)
        bar_logger (Any, optional): proglog logger; its "loss" state holds
            the latest generator total. Defaults to None.
        on_epoch (Optional[Callable[[int, float], None]], optional): Called
            after each epoch with (epoch, mean generator total).
            Defaults to None.

    Returns:
        TrainResult: Final model and artifact paths

    Raises:
        TrainingException: On invalid config or empty train split
        NonFiniteLossError: When a loss becomes non-finite
        DatasetException: On unreadable dataset
        CheckpointException: On checkpoint write failure
    """

    config.validate()
    manifest, records = load_split(dataset, "train")
    if not records:
        raise TrainingException(f"Dataset '{dataset}' has no train records")
    config.network_config().check_side(manifest.resolution)

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    model = build_model(config)
    g_optimizer = AdamOptimizer(
        model.generator_parameters(), config.learning_rate,
        config.adam_beta1, config.adam_beta2, config.adam_eps
    )
    d_optimizer = AdamOptimizer(
        model.discriminator_parameters(), config.learning_rate,
        config.adam_beta1, config.adam_beta2, config.adam_eps
    )
    shuffle_rng = make_rng(config.seed, _STREAM_SHUFFLE)
    augment_rng = make_rng(config.seed, _STREAM_AUGMENT)

    per_epoch = steps_per_epoch(len(records), config.batch_size)
    total_steps = per_epoch * config.epochs
    if config.max_steps:
        total_steps = min(total_steps, config.max_steps)
    logger.info(
        f"Training on {len(records)} pairs: {per_epoch} steps per epoch, "
        + f"{total_steps} steps, batch size {config.batch_size}"
    )

    bar = proglog.default_bar_logger(bar_logger)
    loss_log_path = output_dir / LOSS_LOG_NAME
    report = None
    epoch_totals: list[float] = []
    order = np.arange(len(records))
    with open(loss_log_path, "w", newline="") as loss_log:
        writer = csv.writer(loss_log)
        writer.writerow(["step", *LossReport.field_names()])
        for step in bar.iter_bar(step=range(total_steps)):
            position = step % per_epoch
            if position == 0:
                order = shuffle_rng.permutation(len(records))
            indices = order[position * config.batch_size:(position + 1) * config.batch_size]
            pairs = [records[i] for i in indices]
            if config.augment:
                pairs = [augment(pair, augment_rng) for pair in pairs]

            report = train_step(model, batch_inputs(pairs, config), config, g_optimizer, d_optimizer)
            writer.writerow([step + 1, *report.to_dict().values()])
            epoch_totals.append(report.total)
            bar(loss=report.total)

            if position == per_epoch - 1 or step == total_steps - 1:
                assert_shared(model.generators)
                epoch, mean_total = step // per_epoch + 1, float(np.mean(epoch_totals))
                logger.info(
                    f"Epoch {epoch}: mean generator total {mean_total:.4f} "
                    + f"over {len(epoch_totals)} steps"
                )
                if on_epoch:
                    on_epoch(epoch, mean_total)
                epoch_totals = []
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                save_checkpoint(
                    output_dir / CHECKPOINT_DIR / f"step_{step + 1:06d}.pgan",
                    model, config, step + 1, g_optimizer, d_optimizer
                )

    last_batch = LastBatch(
        indices=np.asarray(indices, dtype=np.int64),
        reconstruction=batch_reconstruction(model, [records[i] for i in indices], config),
    )
    logger.fields("Final reconstruction", {
        "step": total_steps, "batch": len(indices), "reconstruction": last_batch.reconstruction,
    })
    checkpoint_path = save_checkpoint(
        output_dir / CHECKPOINT_NAME, model, config, total_steps, g_optimizer, d_optimizer, last_batch
    )
    return TrainResult(
        model, total_steps, checkpoint_path, loss_log_path, report, last_batch.reconstruction
    )


# ------------------------
# Tensor Files
# ------------------------

def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    """
    Serialize named arrays.

    Layout (little-endian): magic "PGAN", u32 version, u32 count; then per
    tensor u16 name length, UTF-8 name, u8 dtype code (0 f32, 1 f64,
    2 u8), u8 rank, u32 dims, raw data.

    Raises:
        CheckpointException: On unsupported dtype or oversized name
    """

    chunks = [TENSOR_FILE_MAGIC, struct.pack("<II", TENSOR_FILE_VERSION, len(tensors))]
    for name, array in tensors.items():
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder("<") if array.dtype.itemsize > 1 else array.dtype
        if dtype not in DTYPE_CODES:
            raise CheckpointException(f"Tensor '{name}' has unsupported dtype {array.dtype}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointException(f"Tensor name too long: '{name[:40]}...'")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", DTYPE_CODES[dtype], array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return b"".join(chunks)


def decode_tensors(payload: bytes) -> dict[str, np.ndarray]:
    """
    Inverse of encode_tensors.

    Raises:
        CheckpointException: On bad magic, unsupported version, unknown
            dtype code or truncated payload
    """

    if payload[:4] != TENSOR_FILE_MAGIC:
        raise CheckpointException("Not a tensor file (bad magic)")
    offset = 4

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(payload):
            raise CheckpointException(f"Truncated tensor file while reading {what}")
        chunk = payload[offset:offset + size]
        offset += size
        return chunk

    version, count = struct.unpack("<II", take(8, "header"))
    if version != TENSOR_FILE_VERSION:
        raise CheckpointException(
            f"Unsupported tensor file version {version}, expected {TENSOR_FILE_VERSION}"
        )
    tensors: dict[str, np.ndarray] = {}
    for index in range(count):
        (name_length,) = struct.unpack("<H", take(2, f"tensor {index} name length"))
        name = take(name_length, f"tensor {index} name").decode("utf-8")
        code, rank = struct.unpack("<BB", take(2, f"'{name}' header"))
        if code not in CODE_DTYPES:
            raise CheckpointException(f"Tensor '{name}' has unknown dtype code {code}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"'{name}' shape"))
        dtype = CODE_DTYPES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(take(size, f"'{name}' data"), dtype=dtype).reshape(shape).copy()
    if offset != len(payload):
        raise CheckpointException(f"{len(payload) - offset} unexpected trailing bytes in tensor file")
    return tensors


def write_tensor_file(path: Union[str, Path], tensors: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensors(tensors))
    except OSError as exc:
        raise CheckpointException(f"Cannot write '{path}': {exc}") from exc
    return path


def read_tensor_file(path: Union[str, Path]) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise CheckpointException(f"Cannot read '{path}': {exc}") from exc
    return decode_tensors(payload)


# ------------------------
# Checkpoints
# ------------------------

@dataclass
class LastBatch:
    """
    Final step of a run: train-split record indices of its batch and the
    reconstruction loss of the final model on them, without augmentation.
    """

    indices: np.ndarray
    reconstruction: float


@dataclass
class Checkpoint:
    """
    Decoded checkpoint.

    Attributes:
        parameters (dict[str, np.ndarray]): Canonical model parameters
            (shared layers once)
        optimizer (dict[str, np.ndarray]): "opt/g/..." and "opt/d/..." entries
        config (TrainConfig): Training configuration echo
        step (int): Steps taken
        psi_seed (int): Feature extractor seed
        last_batch (Optional[LastBatch]): Final batch record, present in
            end-of-run checkpoints
    """

    parameters: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray]
    config: TrainConfig
    step: int
    psi_seed: int
    last_batch: Optional[LastBatch] = None


def save_checkpoint(
    path: Union[str, Path],
    model: PGANModel,
    config: TrainConfig,
    step: int,
    g_optimizer: Optional[AdamOptimizer] = None,
    d_optimizer: Optional[AdamOptimizer] = None,
    last_batch: Optional[LastBatch] = None
) -> Path:
    """
    Write parameters, optimizer moments, step and config to a tensor file.

    Indices of last_batch are stored as f64 (exact below 2^53).

    Returns:
        Path: The written file

    Raises:
        CheckpointException: On write failure
    """

    tensors = {name: t.data for name, t in model.named_parameters().items()}
    for prefix, optimizer in (("g", g_optimizer), ("d", d_optimizer)):
        if optimizer is None:
            continue
        for key, array in optimizer.state_dict().items():
            tensors[f"{OPTIMIZER_PREFIX}{prefix}/{key}"] = array
    config_json = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    tensors[META_CONFIG] = np.frombuffer(config_json, dtype=np.uint8)
    tensors[META_STEP] = np.array(float(step))
    tensors[META_PSI_SEED] = np.array(float(model.psi_seed))
    if last_batch is not None:
        tensors[META_LAST_BATCH] = np.asarray(last_batch.indices, dtype=np.float64)
        tensors[META_FINAL_RECONSTRUCTION] = np.array(float(last_batch.reconstruction))

    path = write_tensor_file(path, tensors)
    logger.info(f"Saved checkpoint at step {step} to '{path}'")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint file.

    Raises:
        CheckpointException: On unreadable file or missing metadata
    """

    tensors = read_tensor_file(path)
    missing = [key for key in (META_CONFIG, META_STEP, META_PSI_SEED) if key not in tensors]
    if missing:
        raise CheckpointException(f"Checkpoint '{path}' lacks {', '.join(missing)}")
    try:
        config = TrainConfig.from_dict(json.loads(tensors[META_CONFIG].tobytes().decode("utf-8")))
    except (ValueError, AppBaseException) as exc:
        raise CheckpointException(f"Checkpoint '{path}' has an unreadable config: {exc}") from exc

    parameters, optimizer = {}, {}
    for name, array in tensors.items():
        if name.startswith(OPTIMIZER_PREFIX):
            optimizer[name] = array
        elif not name.startswith("meta/"):
            parameters[name] = array
    last_batch = None
    if META_LAST_BATCH in tensors and META_FINAL_RECONSTRUCTION in tensors:
        last_batch = LastBatch(
            indices=tensors[META_LAST_BATCH].astype(np.int64),
            reconstruction=float(tensors[META_FINAL_RECONSTRUCTION]),
        )
    return Checkpoint(
        parameters=parameters,
        optimizer=optimizer,
        config=config,
        step=int(tensors[META_STEP]),
        psi_seed=int(tensors[META_PSI_SEED]),
        last_batch=last_batch,
    )


def apply_checkpoint(
    checkpoint: Checkpoint,
    model: PGANModel,
    g_optimizer: Optional[AdamOptimizer] = None,
    d_optimizer: Optional[AdamOptimizer] = None
) -> None:
    """
    Copy checkpoint values into a model in place.

    Writing into the existing storage keeps shared encoder layers
    aliased across the generators.

    Raises:
        CheckpointException: Naming the first unknown, mismatched or
            missing tensor
    """

    params = model.named_parameters()
    for name, array in checkpoint.parameters.items():
        if name not in params:
            raise CheckpointException(f"Unknown tensor name '{name}' in checkpoint")
        if params[name].shape != array.shape:
            raise CheckpointException(
                f"Tensor '{name}' has shape {array.shape} in checkpoint, "
                + f"model expects {params[name].shape}"
            )
    missing = [name for name in params if name not in checkpoint.parameters]
    if missing:
        raise CheckpointException(f"Checkpoint lacks tensor '{missing[0]}'")
    for name, array in checkpoint.parameters.items():
        params[name].data[...] = array

    for prefix, optimizer in (("g", g_optimizer), ("d", d_optimizer)):
        if optimizer is None:
            continue
        head = f"{OPTIMIZER_PREFIX}{prefix}/"
        optimizer.load_state_dict({
            name[len(head):]: array
            for name, array in checkpoint.optimizer.items() if name.startswith(head)
        })


def restore_model(path: Union[str, Path]) -> tuple[PGANModel, Checkpoint]:
    """
    Rebuild a model from a checkpoint's config and load its parameters.

    Returns:
        tuple[PGANModel, Checkpoint]: Model ready for inference, and the
            decoded checkpoint

    Raises:
        CheckpointException: On unreadable or mismatched checkpoint
    """

    checkpoint = load_checkpoint(path)
    config = replace(checkpoint.config, psi_seed=checkpoint.psi_seed)
    model = build_model(config)
    apply_checkpoint(checkpoint, model)
    logger.debug(f"Restored model from '{path}' (step {checkpoint.step})")
    return model, checkpoint


def replay_reconstruction(model: PGANModel, checkpoint: Checkpoint, records: list[ViewPair]) -> float:
    """
    Recompute a checkpoint's final reconstruction loss.

    Runs the restored generators on the recorded last batch of the train
    split, unaugmented, with the checkpoint's lambda3. On the dataset the
    run was trained on, the result equals checkpoint.last_batch.reconstruction.

    Args:
        model (PGANModel): Model restored from the checkpoint
        checkpoint (Checkpoint): Decoded end-of-run checkpoint
        records (list[ViewPair]): Train split of the dataset

    Returns:
        float: Reconstruction loss

    Raises:
        CheckpointException: If the checkpoint has no last batch, or its
            indices do not fit the records
    """

    if checkpoint.last_batch is None:
        raise CheckpointException("Checkpoint has no last training batch (not an end-of-run checkpoint)")
    indices = checkpoint.last_batch.indices
    if len(indices) == 0 or indices.min() < 0 or indices.max() >= len(records):
        raise CheckpointException(
            f"Last training batch indices do not fit a train split of {len(records)} records"
        )
    return batch_reconstruction(model, [records[int(i)] for i in indices], checkpoint.config)
