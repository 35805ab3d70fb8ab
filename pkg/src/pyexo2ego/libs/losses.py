#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides the training objectives:
- Contextual loss over feature sets (cosine distances, normalized
  similarities, best-match aggregation)
- Cross-cycle loss through cross-composed encoder/decoder halves
- Conditional adversarial losses for discriminators and generators
- L1 reconstruction loss
- The weighted generator objective and its float report

Loss functions accept Tensors and return scalar Tensors, so that the
generator objective can be differentiated end to end.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from contextlib import AbstractContextManager, nullcontext
from dataclasses import asdict, dataclass, fields
import math
from typing import Any, Callable, Optional, Sequence, Union

# pyexo2ego libs
from pyexo2ego.libs.autodiff import (
    Tensor,
    broadcast_to,
    div,
    l2_norm,
    log,
    log_sigmoid,
    matmul,
    mean_abs,
    neg,
    reduce_max,
    reduce_mean,
    reduce_min,
    reduce_sum,
    reshape,
    slice_axis,
    softmax,
    transpose,
)
from pyexo2ego.libs.exceptions import AppBaseException
from pyexo2ego.libs.nets import EncodeResult

# ------------------------
# Constants
# ------------------------

COSINE_EPSILON = 1e-8
MAX_PAIRS_PER_STAGE = 4096      # Feature pairs compared per stage before subsampling
CONTEXTUAL_FORMULAS = ("standard", "literal")
CONTEXTUAL_DIRECTIONS = ("both", "ego_only")

Number = Union[float, Tensor]

# ------------------------
# Exceptions
# ------------------------

class LossException(AppBaseException):
    """
    Raised for invalid loss inputs (shapes, empty feature lists, options).
    """
    pass


# ------------------------
# Weights and Report
# ------------------------

@dataclass
class LossWeights:
    """
    Scalar knobs of the objective.

    Attributes:
        lambda1 (float): Weight of the ego term of the cross-cycle loss
        lambda2 (float): Weight of the G2 adversarial loss
        lambda3 (float): Weight of the exo term of the reconstruction loss
        lambda4 (float): Weight of the cross-cycle loss in the total
        lambda5 (float): Weight of the reconstruction loss in the total
        lambda6 (float): Weight of the contextual loss in the total
        zeta (float): Guard of the distance normalization
        h (float): Similarity bandwidth
    """

    lambda1: float = 10.0
    lambda2: float = 10.0
    lambda3: float = 100.0
    lambda4: float = 10.0
    lambda5: float = 1.0
    lambda6: float = 1.0
    zeta: float = 1e-5
    h: float = 0.5


    def validate(self) -> None:
        """
        Raises:
            LossException: On negative weights or non-positive zeta/h
        """

        for item in fields(self):
            if item.name.startswith("lambda") and getattr(self, item.name) < 0:
                raise LossException(f"{item.name} must be >= 0, got {getattr(self, item.name)}")
        if self.zeta <= 0 or self.h <= 0:
            raise LossException(f"zeta and h must be > 0, got {self.zeta} and {self.h}")


def gan_total(gan1: Number, gan2: Number, lambda2: float) -> Number:
    """
    Combined adversarial term: gan1 + lambda2 * gan2.

    Example:
        >>> gan_total(1.0, 0.5, 10.0)
        6.0
    """

    return gan1 + lambda2 * gan2


def total_loss(
    gan: Number,
    cross_cycle: Number,
    reconstruction: Number,
    contextual: Number,
    weights: LossWeights
) -> Number:
    """
    Generator objective: gan + λ4·cross_cycle + λ5·reconstruction + λ6·contextual.

    Works on floats and on scalar Tensors alike.

    Example:
        >>> total_loss(1.0, 2.0, 0.5, 0.1, LossWeights())
        21.6
    """

    return gan \
        + weights.lambda4 * cross_cycle \
        + weights.lambda5 * reconstruction \
        + weights.lambda6 * contextual


@dataclass
class LossReport:
    """
    Float values of every loss component of one training step.

    total is always assembled from the other fields with gan_total()
    and total_loss(), so it recomputes exactly from them.
    """

    gan1: float
    gan2: float
    d1: float
    d2: float
    cross_cycle: float
    reconstruction: float
    contextual: float
    total: float


    @classmethod
    def from_parts(
        cls,
        gan1: float,
        gan2: float,
        d1: float,
        d2: float,
        cross_cycle: float,
        reconstruction: float,
        contextual: float,
        weights: LossWeights
    ) -> "LossReport":
        total = total_loss(
            gan_total(gan1, gan2, weights.lambda2),
            cross_cycle, reconstruction, contextual, weights
        )
        return cls(gan1, gan2, d1, d2, cross_cycle, reconstruction, contextual, float(total))


    def to_dict(self) -> dict[str, float]:
        return asdict(self)


    @staticmethod
    def field_names() -> list[str]:
        return [item.name for item in fields(LossReport)]


# ------------------------
# Contextual Loss
# ------------------------

def cosine_distance_matrix(real: Tensor, fake: Tensor, eps: float = COSINE_EPSILON) -> Tensor:
    """
    Pairwise cosine distances between two vector sets.

    d_ij = 1 − <x_i, y_j> / (|x_i|·|y_j| + eps), so d lies in [0, 2]
    and zero vectors are safe.

    Args:
        real (Tensor): (N, C) or batched (B, N, C) vectors x_i
        fake (Tensor): (M, C) or batched (B, M, C) vectors y_j
        eps (float, optional): Norm guard. Defaults to 1e-8.

    Returns:
        Tensor: (N, M) or (B, N, M) distances

    Raises:
        LossException: On rank, batch or vector dimension mismatch

    Example:
        >>> cosine_distance_matrix(Tensor([[1.0, 1.0]]), Tensor([[1.0, 0.0]])).item()
        0.2928932...
    """

    if real.ndim != fake.ndim or real.ndim not in (2, 3) \
        or real.shape[-1] != fake.shape[-1] or real.shape[:-2] != fake.shape[:-2]:
        raise LossException(
            f"Cannot compare feature sets of shapes {real.shape} and {fake.shape}"
        )
    axes = (1, 0) if real.ndim == 2 else (0, 2, 1)
    dots = matmul(real, transpose(fake, axes))
    norms_real = l2_norm(real, axis=-1, keepdims=True)
    norms_fake = l2_norm(fake, axis=-1, keepdims=True)
    outer = matmul(norms_real, transpose(norms_fake, axes))
    return 1.0 - div(dots, outer + eps)


def contextual_similarity(
    distances: Tensor,
    zeta: float = 1e-5,
    h: float = 0.5,
    formula: str = "standard"
) -> Tensor:
    """
    Row-normalized contextual similarities.

    With d̃_ij = d_ij / (min_k d_ik + zeta):
    - standard: S_ij = exp((1 − d̃_ij) / h)
    - literal:  S_ij = exp(1 − (1 − d_ij) / (min_k d_ik + zeta)) / h
    and S̄_ij = S_ij / Σ_k S_ik, so every row sums to 1. The literal
    bandwidth divides the exponential and cancels in the normalization.

    Args:
        distances (Tensor): (N, M) or (B, N, M) distances in [0, 2]
        zeta (float, optional): Normalization guard. Defaults to 1e-5.
        h (float, optional): Bandwidth. Defaults to 0.5.
        formula (str, optional): "standard" or "literal".
            Defaults to "standard".

    Returns:
        Tensor: S̄ with the shape of distances

    Raises:
        LossException: On unknown formula
    """

    if formula not in CONTEXTUAL_FORMULAS:
        raise LossException(f"Unknown contextual formula '{formula}', expected one of {CONTEXTUAL_FORMULAS}")
    row_min = broadcast_to(reduce_min(distances, axis=-1, keepdims=True) + zeta, distances.shape)
    if formula == "standard":
        logits = (1.0 - div(distances, row_min)) * (1.0 / h)
    else:
        logits = 1.0 - div(1.0 - distances, row_min)
    return softmax(logits, axis=-1)


def _as_vector_set(features: Tensor) -> Tensor:
    """
    (B,C,H,W) maps -> (B,H·W,C); (N,C) -> (1,N,C); (B,N,C) unchanged.
    """

    if features.ndim == 4:
        batch, channels, height, width = features.shape
        flat = reshape(features, (batch, channels, height * width))
        return transpose(flat, (0, 2, 1))
    if features.ndim == 3:
        return features
    if features.ndim == 2:
        return reshape(features, (1,) + features.shape)
    raise LossException(f"Unsupported feature shape {features.shape}")


def _strided_rows(vectors: Tensor, stride: int) -> Tensor:
    """
    Keep rows 0, stride, 2·stride, ... of a (B, N, C) set.
    """

    if stride <= 1:
        return vectors
    batch, count, channels = vectors.shape
    kept = count // stride
    if kept < 1:
        return slice_axis(vectors, 1, 0, 1)
    trimmed = slice_axis(vectors, 1, 0, kept * stride)
    grouped = reshape(trimmed, (batch, kept, stride, channels))
    return reshape(slice_axis(grouped, 2, 0, 1), (batch, kept, channels))


def subsampling_stride(count_real: int, count_fake: int, max_pairs: int = MAX_PAIRS_PER_STAGE) -> int:
    """
    Row stride keeping the compared pair count near max_pairs.

    Example:
        >>> subsampling_stride(256, 256)
        4
    """

    pairs = count_real * count_fake
    if pairs <= max_pairs:
        return 1
    return math.ceil(math.sqrt(pairs / max_pairs))


def contextual_score(
    real: Tensor,
    fake: Tensor,
    zeta: float = 1e-5,
    h: float = 0.5,
    formula: str = "standard"
) -> Tensor:
    """
    Per-sample contextual similarity CX = (1/max(N,M)) Σ_j max_i S̄_ij.

    Args:
        real (Tensor): (B, N, C) real-feature vectors
        fake (Tensor): (B, M, C) generated-feature vectors

    Returns:
        Tensor: (B,) values in (0, 1]
    """

    similarity = contextual_similarity(cosine_distance_matrix(real, fake), zeta, h, formula)
    best = reduce_max(similarity, axis=-2)
    return reduce_sum(best, axis=-1) * (1.0 / max(real.shape[1], fake.shape[1]))


def contextual_loss(
    real_features: Sequence[Tensor],
    fake_features: Sequence[Tensor],
    zeta: float = 1e-5,
    h: float = 0.5,
    formula: str = "standard",
    max_pairs: int = MAX_PAIRS_PER_STAGE
) -> Tensor:
    """
    Contextual loss: −log(CX) averaged over batch, then over stages.

    Each stage is given as (B,C,H,W) maps (one vector per position),
    (B,N,C) sets or a single (N,C) set. Stages with more than
    max_pairs real/fake pairs are subsampled with a fixed row stride.

    Args:
        real_features (Sequence[Tensor]): Per-stage real features
        fake_features (Sequence[Tensor]): Per-stage generated features
        zeta (float, optional): Normalization guard. Defaults to 1e-5.
        h (float, optional): Bandwidth. Defaults to 0.5.
        formula (str, optional): "standard" or "literal".
            Defaults to "standard".
        max_pairs (int, optional): Pair budget per stage. Defaults to 4096.

    Returns:
        Tensor: Scalar loss, 0 for identical distinct feature sets

    Raises:
        LossException: On empty or unequal feature lists
    """

    if not real_features or len(real_features) != len(fake_features):
        raise LossException(
            f"Contextual loss needs matching non-empty feature lists, got "
            + f"{len(real_features)} and {len(fake_features)} stages"
        )

    stage_losses = []
    for real_stage, fake_stage in zip(real_features, fake_features):
        real = _as_vector_set(real_stage)
        fake = _as_vector_set(fake_stage)
        stride = subsampling_stride(real.shape[1], fake.shape[1], max_pairs)
        score = contextual_score(
            _strided_rows(real, stride), _strided_rows(fake, stride), zeta, h, formula
        )
        stage_losses.append(reduce_mean(neg(log(score))))

    loss = stage_losses[0]
    for stage_loss in stage_losses[1:]:
        loss = loss + stage_loss
    return loss * (1.0 / len(stage_losses))


# ------------------------
# Generator Forward Pass
# ------------------------

@dataclass
class GeneratorForward:
    """
    One forward pass of both generators.

    Attributes:
        enc1 (EncodeResult): EN1 of the G1 input
        enc2 (EncodeResult): EN2 of the G2 input
        fake_ego (Tensor): DE1(enc1), the generated ego view
        fake_exo (Tensor): DE2(enc2), the generated exo view
    """

    enc1: EncodeResult
    enc2: EncodeResult
    fake_ego: Tensor
    fake_exo: Tensor


    @classmethod
    def run(cls, pair: Any, g1_input: Tensor, g2_input: Tensor) -> "GeneratorForward":
        enc1 = pair.encode("g1", g1_input)
        enc2 = pair.encode("g2", g2_input)
        return cls(enc1, enc2, pair.decode("g1", enc1), pair.decode("g2", enc2))


def _check_pair_shapes(exo: Tensor, ego: Tensor) -> None:
    if exo.shape != ego.shape:
        raise LossException(f"Exo and ego batches differ in shape: {exo.shape} vs {ego.shape}")


def cross_cycle_loss(
    pair: Any,
    exo: Tensor,
    ego: Tensor,
    lambda1: float = 10.0,
    forward: Optional[GeneratorForward] = None
) -> Tensor:
    """
    ‖exo − DE2(EN1(exo))‖₁ + λ1·‖ego − DE1(EN2(ego))‖₁ (means of |·|).

    Args:
        pair (Any): GeneratorPair, or any object with encode/decode
        exo (Tensor): Exo targets (B,3,H,W)
        ego (Tensor): Ego targets (B,3,H,W)
        lambda1 (float, optional): Ego term weight. Defaults to 10.0.
        forward (Optional[GeneratorForward], optional): Encodings to reuse,
            required when the encoders take conditioned inputs.
            Defaults to None (encode exo and ego directly).

    Returns:
        Tensor: Scalar, >= 0

    Raises:
        LossException: If exo and ego shapes differ
    """

    _check_pair_shapes(exo, ego)
    enc1 = forward.enc1 if forward else pair.encode("g1", exo)
    enc2 = forward.enc2 if forward else pair.encode("g2", ego)
    exo_cycle = pair.decode("g2", enc1)
    ego_cycle = pair.decode("g1", enc2)
    return mean_abs(exo - exo_cycle) + lambda1 * mean_abs(ego - ego_cycle)


def reconstruction_loss(
    pair: Any,
    exo: Tensor,
    ego: Tensor,
    lambda3: float = 100.0,
    forward: Optional[GeneratorForward] = None
) -> Tensor:
    """
    ‖ego − G1(exo)‖₁ + λ3·‖exo − G2(ego)‖₁ (means of |·|).

    Args:
        pair (Any): GeneratorPair, or any object with encode/decode
        exo (Tensor): Exo images (B,3,H,W)
        ego (Tensor): Ego images (B,3,H,W)
        lambda3 (float, optional): Exo term weight. Defaults to 100.0.
        forward (Optional[GeneratorForward], optional): Forward pass to
            reuse. Defaults to None.

    Returns:
        Tensor: Scalar, >= 0
    """

    _check_pair_shapes(exo, ego)
    forward = forward or GeneratorForward.run(pair, exo, ego)
    return mean_abs(ego - forward.fake_ego) + lambda3 * mean_abs(exo - forward.fake_exo)


# ------------------------
# Adversarial Losses
# ------------------------

def discriminator_loss(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    """
    −mean(log σ(real)) − mean(log(1 − σ(fake))), means over batch and patches.
    """

    return neg(reduce_mean(log_sigmoid(real_logits))) - reduce_mean(log_sigmoid(neg(fake_logits)))


def generator_adversarial_loss(fake_logits: Tensor) -> Tensor:
    """
    Non-saturating generator loss −mean(log σ(fake)).
    """

    return neg(reduce_mean(log_sigmoid(fake_logits)))


def adversarial_losses(
    discriminator: Callable[[Tensor, Tensor], Tensor],
    condition: Tensor,
    real: Tensor,
    fake: Tensor
) -> tuple[Tensor, Tensor]:
    """
    Discriminator and generator losses of one conditional pair.

    d_loss treats fake as a constant; only g_loss carries gradient
    back to the generator.

    Args:
        discriminator (Callable[[Tensor, Tensor], Tensor]): D(condition, candidate)
        condition (Tensor): Conditioning input
        real (Tensor): Real target view
        fake (Tensor): Generated view

    Returns:
        tuple[Tensor, Tensor]: (d_loss, g_loss)

    Raises:
        LossException: If real and fake shapes differ

    Example:
        >>> # A discriminator answering logit 0 everywhere
        >>> d_loss, g_loss = adversarial_losses(zero_d, cond, real, fake)
        >>> round(d_loss.item(), 5), round(g_loss.item(), 5)
        (1.38629, 0.69315)
    """

    if real.shape != fake.shape:
        raise LossException(f"Real and fake differ in shape: {real.shape} vs {fake.shape}")
    d_loss = discriminator_loss(discriminator(condition, real), discriminator(condition, fake.detach()))
    g_loss = generator_adversarial_loss(discriminator(condition, fake))
    return d_loss, g_loss


# ------------------------
# Generator Objective
# ------------------------

@dataclass
class GeneratorLosses:
    """
    Differentiable generator terms of one step and their weighted total.
    """

    gan1: Tensor
    gan2: Tensor
    cross_cycle: Tensor
    reconstruction: Tensor
    contextual: Tensor
    objective: Tensor


def generator_losses(
    model: Any,
    inputs: Any,
    weights: LossWeights,
    contextual_formula: str = "standard",
    contextual_directions: str = "both",
    forward: Optional[GeneratorForward] = None,
    guard: Callable[[str], AbstractContextManager] = lambda name: nullcontext()
) -> GeneratorLosses:
    """
    Assemble the generator objective for one batch.

    Args:
        model (Any): PGANModel
        inputs (Any): ModelInputs (exo, ego, g1_input, g2_input)
        weights (LossWeights): Loss weights
        contextual_formula (str, optional): "standard" or "literal".
            Defaults to "standard".
        contextual_directions (str, optional): "both" averages the ego
            and exo contextual terms, "ego_only" keeps the ego term.
            Defaults to "both".
        forward (Optional[GeneratorForward], optional): Forward pass to
            reuse. Defaults to None (run it).
        guard (Callable, optional): Context manager factory wrapped around
            each term, called with the term name. Defaults to a no-op.

    Returns:
        GeneratorLosses: Terms and objective

    Raises:
        LossException: On unknown contextual direction
    """

    if contextual_directions not in CONTEXTUAL_DIRECTIONS:
        raise LossException(
            f"Unknown contextual directions '{contextual_directions}', "
            + f"expected one of {CONTEXTUAL_DIRECTIONS}"
        )
    pair = model.generators
    with guard("generator forward"):
        forward = forward or GeneratorForward.run(pair, inputs.g1_input, inputs.g2_input)

    with guard("gan1"):
        gan1 = generator_adversarial_loss(model.discriminate("d1", inputs.g1_input, forward.fake_ego))
    with guard("gan2"):
        gan2 = generator_adversarial_loss(model.discriminate("d2", inputs.g2_input, forward.fake_exo))
    with guard("cross_cycle"):
        cross = cross_cycle_loss(pair, inputs.exo, inputs.ego, weights.lambda1, forward)
    with guard("reconstruction"):
        recon = reconstruction_loss(pair, inputs.exo, inputs.ego, weights.lambda3, forward)

    with guard("contextual"):
        contextual = contextual_loss(
            model.extract_features(inputs.ego), model.extract_features(forward.fake_ego),
            weights.zeta, weights.h, contextual_formula
        )
        if contextual_directions == "both":
            exo_contextual = contextual_loss(
                model.extract_features(inputs.exo), model.extract_features(forward.fake_exo),
                weights.zeta, weights.h, contextual_formula
            )
            contextual = (contextual + exo_contextual) * 0.5

    with guard("total"):
        objective = total_loss(gan_total(gan1, gan2, weights.lambda2), cross, recon, contextual, weights)
    return GeneratorLosses(gan1, gan2, cross, recon, contextual, objective)
