#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module evaluates generated egocentric views:
- Pixel metrics: SSIM, PSNR and Sharpness Difference
- Semantic metrics from a small scene classifier: KL score and top-k
  agreement between generated and real views
- The scene classifier itself (training, inference, save/load)
- A full evaluation pass producing a MetricsReport (JSON/CSV)

Pixel metrics take images on the unit range [0,1], shaped (H,W) or
(C,H,W); networks work on [-1,1] and evaluate() converts.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
import csv
from dataclasses import asdict, dataclass, fields
import json
import math
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

# Third party packages
import numpy as np
import proglog
from scipy import signal, special

# pyexo2ego libs
from pyexo2ego.libs.autodiff import (
    Tensor,
    backward,
    broadcast_to,
    log_softmax,
    matmul,
    mul,
    neg,
    no_grad,
    randn,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    avg_pool2d,
)
from pyexo2ego.libs.exceptions import AppBaseException
from pyexo2ego.libs.logger import logger
from pyexo2ego.libs.nets import ConvLayer, PGANModel, prepare_inputs
from pyexo2ego.libs.synthdata import NUM_CLASSES, NUM_SEG_CLASSES, ViewPair, stack_batch
from pyexo2ego.libs.trainer import AdamOptimizer, read_tensor_file, write_tensor_file
from pyexo2ego.libs.utils import make_rng

# ------------------------
# Constants
# ------------------------

SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DECIBEL_CAP = 100.0                 # PSNR and SD value for identical images
PROBABILITY_FLOOR = 1e-8
KL_DIRECTIONS = ("generated_to_real", "real_to_generated")

CLASSIFIER_WIDTHS = (16, 32)
CLASSIFIER_EPOCHS = 30
CLASSIFIER_LEARNING_RATE = 3e-3
_STREAM_CLASSIFIER_INIT = 21
_STREAM_CLASSIFIER_SHUFFLE = 22

# ------------------------
# Exceptions
# ------------------------

class MetricsException(AppBaseException):
    """
    Raised for invalid metric inputs (shapes, set sizes, k) and classifier
    training or loading failures.
    """
    pass


# ------------------------
# Pixel Metrics
# ------------------------

def _check_pair(op: str, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricsException(f"{op}: images differ in shape: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise MetricsException(f"{op}: expected (H,W) or (C,H,W) images, got shape {a.shape}")
    return a, b


def to_unit_range(image: np.ndarray) -> np.ndarray:
    """
    [-1,1] -> [0,1].
    """

    return (np.asarray(image, dtype=np.float64) + 1.0) / 2.0


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """
    Structural similarity with 8x8 uniform windows at stride 1.

    Window means, variances and covariance come from 'valid'
    convolutions; C1 = 0.01², C2 = 0.03² on the unit range. The SSIM map
    is averaged per channel, then over channels.

    Args:
        a (np.ndarray): Image in [0,1], (H,W) or (C,H,W)
        b (np.ndarray): Image of the same shape

    Returns:
        float: SSIM in [-1,1]; 1 for identical images

    Raises:
        MetricsException: On shape mismatch or images smaller than 8x8
    """

    a, b = _check_pair("ssim", a, b)
    if min(a.shape[1:]) < SSIM_WINDOW:
        raise MetricsException(
            f"ssim: image {a.shape[1]}x{a.shape[2]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    window = np.full((SSIM_WINDOW, SSIM_WINDOW), 1.0 / SSIM_WINDOW ** 2)

    def local_mean(x: np.ndarray) -> np.ndarray:
        return signal.convolve2d(x, window, mode="valid")

    scores = []
    for x, y in zip(a, b):
        mu_x, mu_y = local_mean(x), local_mean(y)
        var_x = local_mean(x * x) - mu_x * mu_x
        var_y = local_mean(y * y) - mu_y * mu_y
        cov = local_mean(x * y) - mu_x * mu_y
        ssim_map = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)) \
            / ((mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2))
        scores.append(float(np.mean(ssim_map)))
    return float(np.mean(scores))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """
    Peak signal-to-noise ratio on the unit range: 10·log10(1 / MSE).

    Returns:
        float: dB, capped at 100 (identical images)

    Raises:
        MetricsException: On shape mismatch

    Example:
        >>> psnr(np.zeros((8, 8)), np.full((8, 8), 0.1))
        20.0
    """

    a, b = _check_pair("psnr", a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return DECIBEL_CAP
    return min(DECIBEL_CAP, 10.0 * math.log10(1.0 / mse))


def gradient_magnitude(image: np.ndarray) -> np.ndarray:
    """
    |∂x I| + |∂y I| by forward differences, 0 at the trailing border.
    """

    dx = np.zeros_like(image)
    dy = np.zeros_like(image)
    dx[..., :, :-1] = image[..., :, 1:] - image[..., :, :-1]
    dy[..., :-1, :] = image[..., 1:, :] - image[..., :-1, :]
    return np.abs(dx) + np.abs(dy)


def sharpness_difference(a: np.ndarray, b: np.ndarray) -> float:
    """
    Sharpness difference: 10·log10(1 / mean|G(a) − G(b)|) with G the
    gradient magnitude.

    Returns:
        float: dB, capped at 100 (identical gradients)

    Raises:
        MetricsException: On shape mismatch
    """

    a, b = _check_pair("sharpness_difference", a, b)
    difference = float(np.mean(np.abs(gradient_magnitude(a) - gradient_magnitude(b))))
    if difference == 0.0:
        return DECIBEL_CAP
    return min(DECIBEL_CAP, 10.0 * math.log10(1.0 / difference))


# ------------------------
# Semantic Metrics
# ------------------------

def _floored(probabilities: np.ndarray) -> np.ndarray:
    p = np.maximum(np.asarray(probabilities, dtype=np.float64), PROBABILITY_FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


def kl_divergences(
    generated: np.ndarray,
    real: np.ndarray,
    direction: str = "generated_to_real"
) -> np.ndarray:
    """
    Per-pair KL divergence between class distributions.

    Probabilities are floored at 1e-8 and renormalized first.
    "generated_to_real" computes KL(p_gen ‖ p_real).

    Args:
        generated (np.ndarray): (N,C) probabilities of generated images
        real (np.ndarray): (N,C) probabilities of real images
        direction (str, optional): "generated_to_real" or
            "real_to_generated". Defaults to "generated_to_real".

    Returns:
        np.ndarray: (N,) values >= 0

    Raises:
        MetricsException: On shape mismatch or unknown direction
    """

    if direction not in KL_DIRECTIONS:
        raise MetricsException(f"Unknown KL direction '{direction}', expected one of {KL_DIRECTIONS}")
    generated, real = np.asarray(generated), np.asarray(real)
    if generated.shape != real.shape:
        raise MetricsException(
            f"kl_score: {generated.shape[0]} generated vs {real.shape[0]} real distributions"
            if generated.shape[1:] == real.shape[1:]
            else f"kl_score: distributions differ in shape: {generated.shape} vs {real.shape}"
        )
    p, q = _floored(generated), _floored(real)
    if direction == "real_to_generated":
        p, q = q, p
    return special.rel_entr(p, q).sum(axis=-1)


def kl_score(
    generated: np.ndarray,
    real: np.ndarray,
    direction: str = "generated_to_real"
) -> tuple[float, float]:
    """
    Mean and standard deviation of the per-pair KL divergences.

    Example:
        >>> kl_score(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
        (0.693147..., 0.0)
    """

    values = kl_divergences(generated, real, direction)
    if values.size == 0:
        raise MetricsException("kl_score: empty sets")
    return float(np.mean(values)), float(np.std(values))


@dataclass
class TopKAgreement:
    """
    Top-k agreement percentages.

    Attributes:
        all (float): % of pairs whose real top-1 class is in the
            generated top-k
        confident (float): Same, over pairs where the real top-1
            probability exceeds the confidence threshold
        n (int): Pairs
        n_confident (int): Confident pairs (0 means confident is 0 by
            convention)
    """

    all: float
    confident: float
    n: int
    n_confident: int


def topk_agreement(
    generated: np.ndarray,
    real: np.ndarray,
    k: int,
    confidence_threshold: float = 0.5
) -> TopKAgreement:
    """
    Agreement between the classes predicted for generated and real views.

    Ties in the generated top-k are broken by lowest class index.

    Args:
        generated (np.ndarray): (N,C) probabilities of generated images
        real (np.ndarray): (N,C) probabilities of real images
        k (int): Size of the generated top-k set
        confidence_threshold (float, optional): Defaults to 0.5.

    Returns:
        TopKAgreement: Percentages in [0,100]

    Raises:
        MetricsException: If k is not in 1..C-1 or sets mismatch
    """

    generated, real = np.asarray(generated), np.asarray(real)
    if generated.shape != real.shape or generated.ndim != 2:
        raise MetricsException(
            f"topk_agreement: expected paired (N,C) sets, got {generated.shape} and {real.shape}"
        )
    num_classes = generated.shape[1]
    if not 1 <= k < num_classes:
        raise MetricsException(f"topk_agreement: k must be in 1..{num_classes - 1}, got {k}")

    real_top1 = np.argmax(real, axis=1)
    top_k = np.argsort(-generated, axis=1, kind="stable")[:, :k]
    hits = np.any(top_k == real_top1[:, None], axis=1)
    confident = np.max(real, axis=1) > confidence_threshold

    n, n_confident = len(hits), int(confident.sum())
    if n_confident == 0:
        logger.warning(
            f"Top-{k} agreement: no real image classified with confidence > {confidence_threshold}"
        )
    return TopKAgreement(
        all=100.0 * float(hits.mean()) if n else 0.0,
        confident=100.0 * float(hits[confident].mean()) if n_confident else 0.0,
        n=n,
        n_confident=n_confident,
    )


# ------------------------
# Scene Classifier
# ------------------------

class SceneClassifier:
    """
    Small CNN mapping (B,3,H,W) images in [-1,1] to scene class
    probabilities: two conv 3x3 + ReLU + 2x2 average-pool stages, a
    global max-pool over positions and a dense softmax head. The global
    pool makes the prediction independent of where objects stand.

    Attributes:
        resolution (int): Input side (multiple of 4)
        num_classes (int): Output classes
        convs (list[ConvLayer]): Feature stages
        dense_weight (Tensor): (last stage width, classes)
        dense_bias (Tensor): (classes,)
    """

    def __init__(self, resolution: int, num_classes: int = NUM_CLASSES, seed: int = 0) -> None:
        if resolution % 4 or resolution < 4:
            raise MetricsException(f"Classifier resolution must be a multiple of 4, got {resolution}")
        self.resolution = resolution
        self.num_classes = num_classes
        rng = make_rng(seed, _STREAM_CLASSIFIER_INIT)
        self.convs = []
        in_channels = 3
        for width in CLASSIFIER_WIDTHS:
            self.convs.append(ConvLayer(
                rng, in_channels, width, kernel=3, stride=1, padding=1,
                std=math.sqrt(2.0 / (in_channels * 9))
            ))
            in_channels = width
        self.dense_weight = randn(
            rng, (in_channels, num_classes), std=math.sqrt(1.0 / in_channels),
            requires_grad=True, name="dense.weight"
        )
        self.dense_bias = Tensor(np.zeros(num_classes, dtype=np.float32), requires_grad=True, name="dense.bias")


    def logits(self, images: Tensor) -> Tensor:
        x = images
        for conv in self.convs:
            x = avg_pool2d(relu(conv(x)))
        pooled = reduce_max(x, axis=(2, 3))
        return matmul(pooled, self.dense_weight) \
            + broadcast_to(reshape(self.dense_bias, (1, self.num_classes)), (x.shape[0], self.num_classes))


    def predict_proba(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """
        Class probabilities of (N,3,H,W) images in [-1,1].

        Returns:
            np.ndarray: (N, num_classes) float64 rows summing to 1
        """

        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4 or images.shape[2:] != (self.resolution, self.resolution):
            raise MetricsException(
                f"Classifier expects (N,3,{self.resolution},{self.resolution}) images, got {images.shape}"
            )
        outputs = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                logits = self.logits(Tensor(images[start:start + batch_size])).numpy()
                outputs.append(special.softmax(logits.astype(np.float64), axis=1))
        return np.concatenate(outputs) if outputs else np.zeros((0, self.num_classes))


    def named_parameters(self) -> dict[str, Tensor]:
        params = {}
        for k, conv in enumerate(self.convs, start=1):
            for key, tensor in conv.parameters().items():
                params[f"conv{k}.{key}"] = tensor
        params["dense.weight"] = self.dense_weight
        params["dense.bias"] = self.dense_bias
        return params


    def save(self, path: Union[str, Path]) -> Path:
        tensors = {name: t.data for name, t in self.named_parameters().items()}
        tensors["meta/resolution"] = np.array(float(self.resolution))
        tensors["meta/num_classes"] = np.array(float(self.num_classes))
        path = write_tensor_file(path, tensors)
        logger.info(f"Saved scene classifier to '{path}'")
        return path


    @classmethod
    def load(cls, path: Union[str, Path]) -> "SceneClassifier":
        """
        Raises:
            CheckpointException: On unreadable file
            MetricsException: On missing or mismatched tensors
        """

        tensors = read_tensor_file(path)
        try:
            classifier = cls(int(tensors["meta/resolution"]), int(tensors["meta/num_classes"]))
        except KeyError as exc:
            raise MetricsException(f"'{path}' is not a scene classifier file (missing {exc})") from exc
        for name, tensor in classifier.named_parameters().items():
            if name not in tensors or tensors[name].shape != tensor.shape:
                raise MetricsException(f"Classifier file '{path}' has missing or mismatched tensor '{name}'")
            tensor.data[...] = tensors[name]
        return classifier


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    one_hot = np.eye(logits.shape[1], dtype=logits.dtype)[labels]
    return neg(reduce_mean(reduce_sum(mul(log_softmax(logits, axis=-1), Tensor(one_hot)), axis=-1)))


def train_scene_classifier(
    images: np.ndarray,
    labels: Optional[np.ndarray],
    epochs: int = CLASSIFIER_EPOCHS,
    seed: int = 0,
    batch_size: int = 32,
    learning_rate: float = CLASSIFIER_LEARNING_RATE,
    num_classes: int = NUM_CLASSES,
    bar_logger: Any = None
) -> SceneClassifier:
    """
    Fit a SceneClassifier with Adam on labeled real images.

    The step size follows a cosine decay from learning_rate to zero over
    the whole run.

    Args:
        images (np.ndarray): (N,3,H,W) in [-1,1]
        labels (Optional[np.ndarray]): (N,) class ids
        epochs (int, optional): Defaults to 30.
        seed (int, optional): Initialization and shuffling seed. Defaults to 0.
        batch_size (int, optional): Defaults to 32.
        learning_rate (float, optional): Peak step size. Defaults to 3e-3.
        num_classes (int, optional): Defaults to 8.
        bar_logger (Any, optional): proglog logger; "loss" state holds the
            latest batch loss. Defaults to None.

    Returns:
        SceneClassifier: Trained, deterministic given seed

    Raises:
        MetricsException: Without labels, or on mismatched sizes
    """

    if labels is None or len(labels) == 0:
        raise MetricsException("Cannot train the scene classifier without labels")
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) != len(labels):
        raise MetricsException(f"{len(images)} images but {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise MetricsException(f"Labels must lie in 0..{num_classes - 1}")

    classifier = SceneClassifier(images.shape[-1], num_classes, seed)
    optimizer = AdamOptimizer(classifier.named_parameters(), learning_rate, 0.9, 0.999, 1e-8)
    rng = make_rng(seed, _STREAM_CLASSIFIER_SHUFFLE)
    bar = proglog.default_bar_logger(bar_logger)
    batches = math.ceil(len(images) / batch_size)
    total_steps = epochs * batches

    for step in bar.iter_bar(step=range(total_steps)):
        if step % batches == 0:
            order = rng.permutation(len(images))
        optimizer.lr = 0.5 * learning_rate * (1.0 + math.cos(math.pi * step / total_steps))
        chosen = order[(step % batches) * batch_size:(step % batches + 1) * batch_size]
        optimizer.zero_grad()
        loss = cross_entropy(classifier.logits(Tensor(images[chosen])), labels[chosen])
        backward(loss, leaves=optimizer.params.values())
        optimizer.step()
        bar(loss=loss.item())

    accuracy = top1_accuracy(classifier, images, labels)
    logger.info(f"Scene classifier: {epochs} epochs, train top-1 {accuracy:.1f}%")
    return classifier


def top1_accuracy(classifier: SceneClassifier, images: np.ndarray, labels: np.ndarray) -> float:
    """
    Percentage of images whose most probable class is their label.
    """

    predicted = np.argmax(classifier.predict_proba(images), axis=1)
    return 100.0 * float(np.mean(predicted == np.asarray(labels)))


# ------------------------
# Evaluation
# ------------------------

@dataclass
class MetricsOptions:
    """
    Evaluation and classifier options.

    Attributes:
        kl_direction (str): "generated_to_real" or "real_to_generated"
        confidence_threshold (float): Real top-1 probability above which a
            pair counts as confident
        classifier_epochs (int): Scene classifier training epochs
        classifier_seed (int): Scene classifier seed
        classifier_learning_rate (float): Scene classifier Adam step size
        batch_size (int): Inference and classifier batch size
    """

    kl_direction: str = "generated_to_real"
    confidence_threshold: float = 0.5
    classifier_epochs: int = CLASSIFIER_EPOCHS
    classifier_seed: int = 0
    classifier_learning_rate: float = CLASSIFIER_LEARNING_RATE
    batch_size: int = 32


    def validate(self) -> None:
        if self.kl_direction not in KL_DIRECTIONS:
            raise MetricsException(
                f"kl_direction must be one of {KL_DIRECTIONS}, got '{self.kl_direction}'"
            )
        if not 0 <= self.confidence_threshold < 1:
            raise MetricsException("confidence_threshold must lie in [0, 1)")
        if self.classifier_epochs < 1 or self.batch_size < 1 or self.classifier_learning_rate <= 0:
            raise MetricsException("classifier_epochs, batch_size and classifier_learning_rate must be positive")


@dataclass
class MetricsReport:
    """
    Evaluation summary over a test split; percentages in [0,100].
    """

    ssim_mean: float
    psnr_mean: float
    sd_mean: float
    kl_mean: float
    kl_std: float
    top1_all: float
    top1_confident: float
    top5_all: float
    top5_confident: float
    n: int


    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as stream:
            writer = csv.writer(stream)
            writer.writerow([item.name for item in fields(self)])
            writer.writerow(self.to_dict().values())
        return path


@dataclass
class EvaluationResult:
    """
    A MetricsReport plus evaluation figures that are not report columns.

    Attributes:
        report (MetricsReport): Report columns
        n_confident (int): Pairs whose real image is classified with
            confidence above the threshold
        ego_l1 (float): Mean absolute error of generated ego views on [-1,1]
        train_reconstruction (Optional[float]): Final reconstruction loss
            replayed from the checkpoint on its last training batch, when
            the checkpoint records one
    """

    report: MetricsReport
    n_confident: int
    ego_l1: float
    train_reconstruction: Optional[float] = None


    def to_dict(self) -> dict[str, Any]:
        return {
            **self.report.to_dict(),
            "n_confident": self.n_confident,
            "ego_l1": self.ego_l1,
            "train_reconstruction": self.train_reconstruction,
        }


GenerateFn = Callable[[list[ViewPair]], np.ndarray]


def ego_generator(model: PGANModel, seg_conditioning: bool) -> GenerateFn:
    """
    Wrap G1 as a batch function: pairs -> (B,3,H,W) generated ego views.
    """

    def generate(pairs: list[ViewPair]) -> np.ndarray:
        batch = stack_batch(pairs)
        inputs = prepare_inputs(
            batch.exo, batch.ego, batch.exo_seg, batch.ego_seg, NUM_SEG_CLASSES, seg_conditioning
        )
        with no_grad():
            return model.generate("g1", inputs.g1_input).numpy()

    return generate


def evaluate(
    generate_fn: GenerateFn,
    records: Sequence[ViewPair],
    classifier: SceneClassifier,
    options: Optional[MetricsOptions] = None,
    bar_logger: Any = None
) -> EvaluationResult:
    """
    Score generated ego views against real ones.

    Pixel metrics are averaged over pairs; KL and top-k use the
    classifier on generated and real ego images. ego_l1 is the mean
    absolute error on [-1,1], as in the reconstruction loss.

    Args:
        generate_fn (GenerateFn): Batch of pairs -> generated ego images
        records (Sequence[ViewPair]): Held-out pairs
        classifier (SceneClassifier): Trained scene classifier
        options (Optional[MetricsOptions], optional): Defaults to MetricsOptions().
        bar_logger (Any, optional): proglog logger. Defaults to None.

    Returns:
        EvaluationResult: Report and extra figures

    Raises:
        MetricsException: On empty record set or invalid options
    """

    options = options or MetricsOptions()
    options.validate()
    records = list(records)
    if not records:
        raise MetricsException("Nothing to evaluate: empty record set")

    bar = proglog.default_bar_logger(bar_logger)
    generated = []
    for start in bar.iter_bar(batch=range(0, len(records), options.batch_size)):
        generated.append(np.asarray(generate_fn(records[start:start + options.batch_size])))
    generated = np.concatenate(generated)
    real = np.stack([pair.ego_image for pair in records])

    ssim_values, psnr_values, sd_values = [], [], []
    for fake_image, real_image in zip(generated, real):
        a, b = to_unit_range(fake_image), to_unit_range(real_image)
        ssim_values.append(ssim(a, b))
        psnr_values.append(psnr(a, b))
        sd_values.append(sharpness_difference(a, b))

    p_generated = classifier.predict_proba(generated, options.batch_size)
    p_real = classifier.predict_proba(real, options.batch_size)
    kl_mean, kl_std = kl_score(p_generated, p_real, options.kl_direction)
    top1 = topk_agreement(p_generated, p_real, 1, options.confidence_threshold)
    top5 = topk_agreement(p_generated, p_real, 5, options.confidence_threshold)

    report = MetricsReport(
        ssim_mean=float(np.mean(ssim_values)),
        psnr_mean=float(np.mean(psnr_values)),
        sd_mean=float(np.mean(sd_values)),
        kl_mean=kl_mean,
        kl_std=kl_std,
        top1_all=top1.all,
        top1_confident=top1.confident,
        top5_all=top5.all,
        top5_confident=top5.confident,
        n=len(records),
    )
    result = EvaluationResult(
        report=report,
        n_confident=top1.n_confident,
        ego_l1=float(np.mean(np.abs(generated.astype(np.float64) - real))),
    )
    logger.fields("Evaluation", result.to_dict())
    return result
