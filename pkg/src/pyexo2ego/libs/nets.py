#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides the networks:
- Two U-Net generators (G1: exo -> ego, G2: ego -> exo) whose first
  encoder layers are hard-shared: the same layer objects, hence the
  same parameter tensors, sit in both encoders
- Separately invocable encoder and decoder halves, so that cross
  compositions such as DE2(EN1(x)) are possible
- Two PatchGAN discriminators producing patch logit maps
- A frozen, seeded convolutional feature extractor (psi) feeding the
  contextual loss
- PGANModel bundling all of them with canonical parameter names

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
import copy
from dataclasses import asdict, dataclass, field
from typing import Any

# Third party packages
import numpy as np

# pyexo2ego libs
from pyexo2ego.libs.autodiff import (
    Tensor,
    avg_pool2d,
    concat_channels,
    conv2d,
    conv_transpose2d,
    instance_norm,
    leaky_relu,
    randn,
    relu,
    scalar_mul,
    tanh,
    zeros,
)
from pyexo2ego.libs.exceptions import AppBaseException
from pyexo2ego.libs.logger import logger
from pyexo2ego.libs.utils import make_rng

# ------------------------
# Constants
# ------------------------

GENERATOR_IDS = ("g1", "g2")
DISCRIMINATOR_IDS = ("d1", "d2")

INIT_STD = 0.02                         # N(0, 0.02) conv weight init
LEAKY_SLOPE = 0.2
OUTPUT_SCALE = 1.0 - 1e-6               # Keeps tanh head strictly inside (-1, 1)
MAX_WIDTH_FACTOR = 8                    # Encoder widths cap at 8 x base_width

DISCRIMINATOR_WIDTHS = (16, 32, 64)
DISCRIMINATOR_STRIDES = (2, 2, 1)
PSI_WIDTHS = (16, 32, 64)

# Random streams derived from the model seed
_STREAM_GENERATORS = 1
_STREAM_DISCRIMINATORS = 2

# ------------------------
# Exceptions
# ------------------------

class NetsException(AppBaseException):
    """
    Raised for invalid architectures or inputs that do not fit them.
    """
    pass


class SharedWeightsError(NetsException):
    """
    Raised when shared encoder layers are not literally aliased, or
    unshared layers are.
    """

    def __init__(self, layer_index: int, detail: str):
        self.layer_index = layer_index
        super().__init__(f"Encoder layer {layer_index}: {detail}")


# ------------------------
# Configuration
# ------------------------

@dataclass
class UNetConfig:
    """
    Architecture of both generators.

    Attributes:
        in_channels (int): Image channels fed to the encoders
        out_channels (int): Image channels produced by the decoders
        base_width (int): Channels at encoder level 1
        depth (int): Number of downsampling levels
        shared_prefix (int): Encoder layers tied across the generators
        norm (str): "instance" or "none"
        conditioning_channels (int): Extra input channels (0 or 1 for the
            segmentation map)
    """

    in_channels: int = 3
    out_channels: int = 3
    base_width: int = 16
    depth: int = 4
    shared_prefix: int = 3
    norm: str = "instance"
    conditioning_channels: int = 0


    def validate(self) -> None:
        """
        Raises:
            NetsException: On any out-of-range field
        """

        if self.depth < 1:
            raise NetsException(f"depth must be >= 1, got {self.depth}")
        if not 1 <= self.shared_prefix <= self.depth:
            raise NetsException(
                f"shared_prefix must be in 1..{self.depth}, got {self.shared_prefix}"
            )
        if self.norm not in ("instance", "none"):
            raise NetsException(f"norm must be 'instance' or 'none', got '{self.norm}'")
        if min(self.in_channels, self.out_channels, self.base_width) < 1 \
            or self.conditioning_channels < 0:
            raise NetsException("channel counts must be positive")


    def check_side(self, side: int) -> None:
        """
        Check that a square image side suits this network.

        Raises:
            NetsException: If side is not divisible by 2^depth
        """

        if side < 2 ** self.depth or side % (2 ** self.depth):
            raise NetsException(
                f"Image side {side} is not divisible by 2^depth = {2 ** self.depth}"
            )


    def width(self, level: int) -> int:
        return min(self.base_width * 2 ** (level - 1), MAX_WIDTH_FACTOR * self.base_width)


    @property
    def encoder_in_channels(self) -> int:
        return self.in_channels + self.conditioning_channels


    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


# ------------------------
# Layers
# ------------------------

class ConvLayer:
    """
    Convolution (or transposed convolution) with its parameters.

    Attributes:
        weight (Tensor): (Cout, Cin, k, k), or (Cin, Cout, k, k) if transposed
        bias (Tensor): (Cout,)
    """

    def __init__(
        self,
        rng: np.random.Generator,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int,
        padding: int,
        transposed: bool = False,
        std: float = INIT_STD,
        dtype: Any = np.float32,
        trainable: bool = True
    ) -> None:
        shape = (in_channels, out_channels, kernel, kernel) if transposed \
            else (out_channels, in_channels, kernel, kernel)
        self.weight = randn(rng, shape, std, dtype, requires_grad=trainable)
        self.bias = zeros((out_channels,), dtype, requires_grad=trainable)
        self.stride = stride
        self.padding = padding
        self.transposed = transposed


    def __call__(self, x: Tensor) -> Tensor:
        op = conv_transpose2d if self.transposed else conv2d
        return op(x, self.weight, self.bias, self.stride, self.padding)


    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class EncoderLayer:
    """
    conv 4x4 stride 2 -> optional instance norm -> leaky_relu(0.2).
    """

    def __init__(self, conv: ConvLayer, normalize: bool) -> None:
        self.conv = conv
        self.normalize = normalize


    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if self.normalize:
            y = instance_norm(y)
        return leaky_relu(y, LEAKY_SLOPE)


    def parameters(self) -> dict[str, Tensor]:
        return self.conv.parameters()


class DecoderLayer:
    """
    conv_transpose 4x4 stride 2 -> optional instance norm -> relu,
    or a scaled tanh for the output layer.
    """

    def __init__(self, conv: ConvLayer, normalize: bool, is_output: bool) -> None:
        self.conv = conv
        self.normalize = normalize
        self.is_output = is_output


    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if self.is_output:
            return scalar_mul(tanh(y), OUTPUT_SCALE)
        if self.normalize:
            y = instance_norm(y)
        return relu(y)


    def parameters(self) -> dict[str, Tensor]:
        return self.conv.parameters()


# ------------------------
# U-Net Halves
# ------------------------

@dataclass
class EncodeResult:
    """
    Output of an encoder.

    Attributes:
        latent (Tensor): Bottleneck map, equal to skips[-1]
        skips (list[Tensor]): Per-level outputs, shallowest first;
            level l has spatial side side / 2^l
    """

    latent: Tensor
    skips: list[Tensor] = field(default_factory=list)


class UNetEncoder:
    """
    Contracting path: one EncoderLayer per level.
    """

    def __init__(self, config: UNetConfig, layers: list[EncoderLayer]) -> None:
        self.config = config
        self.layers = layers


    @classmethod
    def build(cls, config: UNetConfig, rng: np.random.Generator, dtype: Any = np.float32) -> "UNetEncoder":
        layers = []
        for level in range(1, config.depth + 1):
            in_ch = config.encoder_in_channels if level == 1 else config.width(level - 1)
            conv = ConvLayer(rng, in_ch, config.width(level), 4, 2, 1, dtype=dtype)
            # No norm on the outermost and innermost levels
            normalize = config.norm == "instance" and 1 < level < config.depth
            layers.append(EncoderLayer(conv, normalize))
        return cls(config, layers)


    def encode(self, image: Tensor) -> EncodeResult:
        """
        Run the contracting path.

        Args:
            image (Tensor): (B, in_channels + conditioning_channels, H, W)

        Returns:
            EncodeResult: Latent and per-level skips

        Raises:
            NetsException: On wrong channel count or indivisible side
        """

        expected = self.config.encoder_in_channels
        if image.ndim != 4 or image.shape[1] != expected:
            raise NetsException(
                f"Encoder expects {expected} input channels, got shape {image.shape}"
            )
        for side in image.shape[2:]:
            self.config.check_side(side)

        skips = []
        x = image
        for layer in self.layers:
            x = layer(x)
            skips.append(x)
        return EncodeResult(latent=x, skips=skips)


class UNetDecoder:
    """
    Expanding path; layers[0] is the output layer (level 1),
    layers[-1] the innermost (level depth).
    """

    def __init__(self, config: UNetConfig, layers: list[DecoderLayer]) -> None:
        self.config = config
        self.layers = layers


    @classmethod
    def build(cls, config: UNetConfig, rng: np.random.Generator, dtype: Any = np.float32) -> "UNetDecoder":
        layers = []
        depth = config.depth
        for level in range(1, depth + 1):
            in_ch = config.width(depth) if level == depth else 2 * config.width(level)
            is_output = level == 1
            out_ch = config.out_channels if is_output else config.width(level - 1)
            conv = ConvLayer(rng, in_ch, out_ch, 4, 2, 1, transposed=True, dtype=dtype)
            layers.append(DecoderLayer(conv, config.norm == "instance", is_output))
        return cls(config, layers)


    def decode(self, enc: EncodeResult) -> Tensor:
        """
        Run the expanding path over any compatible encoding.

        Skip level l of the encoding is concatenated to the upsampled map
        of level l + 1, whichever encoder produced it.

        Args:
            enc (EncodeResult): Encoding with matching depth and widths

        Returns:
            Tensor: (B, out_channels, H, W), values inside (-1, 1)

        Raises:
            NetsException: On depth or width mismatch
        """

        depth = self.config.depth
        if len(enc.skips) != depth:
            raise NetsException(
                f"Decoder of depth {depth} got an encoding with {len(enc.skips)} levels"
            )
        for level, skip in enumerate(enc.skips, start=1):
            if skip.shape[1] != self.config.width(level):
                raise NetsException(
                    f"Skip level {level} has {skip.shape[1]} channels, "
                    + f"decoder expects {self.config.width(level)}"
                )

        x = enc.latent
        for level in range(depth, 0, -1):
            x = self.layers[level - 1](x)
            if level > 1:
                x = concat_channels(x, enc.skips[level - 2])
        return x


# ------------------------
# Generator Pair
# ------------------------

class GeneratorPair:
    """
    The two U-Net generators with a hard-shared encoder prefix.

    For k <= shared_prefix, encoders["g1"].layers[k-1] and
    encoders["g2"].layers[k-1] are the same EncoderLayer object, so
    both generators read and update one parameter storage and the
    shared gradients pool during backward.

    Attributes:
        config (UNetConfig): Architecture
        encoders (dict[str, UNetEncoder]): EN1 ("g1") and EN2 ("g2")
        decoders (dict[str, UNetDecoder]): DE1 ("g1") and DE2 ("g2")
    """

    def __init__(
        self,
        config: UNetConfig,
        encoders: dict[str, UNetEncoder],
        decoders: dict[str, UNetDecoder]
    ) -> None:
        self.config = config
        self.encoders = encoders
        self.decoders = decoders


    @classmethod
    def build(
        cls,
        config: UNetConfig,
        rng: np.random.Generator,
        dtype: Any = np.float32,
        alias_shared: bool = True
    ) -> "GeneratorPair":
        """
        Build both generators.

        Args:
            config (UNetConfig): Architecture
            rng (np.random.Generator): Initialization draws
            dtype (Any, optional): Parameter precision. Defaults to np.float32.
            alias_shared (bool, optional): When False, the prefix layers of
                EN2 are independent copies of EN1's (equal values, separate
                storage). Only useful to exercise assert_shared.
                Defaults to True.

        Returns:
            GeneratorPair: The pair
        """

        config.validate()
        en1 = UNetEncoder.build(config, rng, dtype)
        de1 = UNetDecoder.build(config, rng, dtype)
        own = UNetEncoder.build(config, rng, dtype)
        de2 = UNetDecoder.build(config, rng, dtype)

        prefix = en1.layers[:config.shared_prefix]
        if not alias_shared:
            prefix = copy.deepcopy(prefix)
        en2 = UNetEncoder(config, prefix + own.layers[config.shared_prefix:])

        return cls(config, {"g1": en1, "g2": en2}, {"g1": de1, "g2": de2})


    def encode(self, which: str, image: Tensor) -> EncodeResult:
        return self.encoders[_generator_id(which)].encode(image)


    def decode(self, which: str, enc: EncodeResult) -> Tensor:
        return self.decoders[_generator_id(which)].decode(enc)


    def generate(self, which: str, image: Tensor) -> Tensor:
        """
        G_i(image) = DE_i(EN_i(image)).
        """

        return self.decode(which, self.encode(which, image))


    def named_parameters(self) -> dict[str, Tensor]:
        """
        Canonical parameter map; shared layers appear once.

        Names: shared/enc{k}.{weight,bias} for k <= shared_prefix, then
        g1/enc{k}.*, g1/dec{k}.*, g2/enc{k}.*, g2/dec{k}.*.
        """

        params: dict[str, Tensor] = {}
        prefix = self.config.shared_prefix
        for k, layer in enumerate(self.encoders["g1"].layers[:prefix], start=1):
            for key, tensor in layer.parameters().items():
                params[f"shared/enc{k}.{key}"] = tensor
        for gid in GENERATOR_IDS:
            for k, layer in enumerate(self.encoders[gid].layers, start=1):
                if k <= prefix:
                    continue
                for key, tensor in layer.parameters().items():
                    params[f"{gid}/enc{k}.{key}"] = tensor
            for k, layer in enumerate(self.decoders[gid].layers, start=1):
                for key, tensor in layer.parameters().items():
                    params[f"{gid}/dec{k}.{key}"] = tensor
        return params


def _generator_id(which: str) -> str:
    if which not in GENERATOR_IDS:
        raise NetsException(f"Unknown generator '{which}', expected one of {GENERATOR_IDS}")
    return which


def assert_shared(pair: GeneratorPair) -> None:
    """
    Check the hard-sharing contract of a generator pair.

    Layers 1..shared_prefix of both encoders must hold the very same
    parameter tensors (one storage); deeper layers must hold disjoint
    ones. Equal values in separate storage do not count as shared.

    Args:
        pair (GeneratorPair): Pair to check

    Raises:
        SharedWeightsError: Naming the first offending layer index
    """

    layers1 = pair.encoders["g1"].layers
    layers2 = pair.encoders["g2"].layers
    for k, (layer1, layer2) in enumerate(zip(layers1, layers2), start=1):
        params1, params2 = layer1.parameters(), layer2.parameters()
        for key in params1:
            t1, t2 = params1[key], params2[key]
            aliased = t1 is t2 and np.shares_memory(t1.data, t2.data)
            if k <= pair.config.shared_prefix and not aliased:
                raise SharedWeightsError(k, f"'{key}' is not aliased across generators")
            if k > pair.config.shared_prefix \
                and (t1 is t2 or np.shares_memory(t1.data, t2.data)):
                raise SharedWeightsError(k, f"'{key}' is shared but lies beyond the shared prefix")


# ------------------------
# Discriminator
# ------------------------

class PatchDiscriminator:
    """
    Conditional PatchGAN: condition and candidate are channel-stacked,
    then 3 conv 4x4 layers (strides 2, 2, 1) and a 1-channel conv head.

    The output is a map of raw logits; a 32x32 input gives 6x6 patches.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        in_channels: int,
        norm: str = "instance",
        widths: tuple[int, ...] = DISCRIMINATOR_WIDTHS,
        strides: tuple[int, ...] = DISCRIMINATOR_STRIDES,
        dtype: Any = np.float32
    ) -> None:
        self.in_channels = in_channels
        self.layers: list[ConvLayer] = []
        self.normalize: list[bool] = []
        previous = in_channels
        for index, (width, stride) in enumerate(zip(widths, strides)):
            self.layers.append(ConvLayer(rng, previous, width, 4, stride, 1, dtype=dtype))
            self.normalize.append(norm == "instance" and index > 0)
            previous = width
        self.head = ConvLayer(rng, previous, 1, 4, 1, 1, dtype=dtype)


    def __call__(self, condition: Tensor, candidate: Tensor) -> Tensor:
        """
        Args:
            condition (Tensor): (B, Cc, H, W)
            candidate (Tensor): (B, Cx, H, W), real or generated

        Returns:
            Tensor: (B, 1, h, w) logits

        Raises:
            ShapeMismatchError: If batch or spatial extents differ
            NetsException: If Cc + Cx differs from in_channels
        """

        x = concat_channels(condition, candidate)
        if x.shape[1] != self.in_channels:
            raise NetsException(
                f"Discriminator expects {self.in_channels} stacked channels, got {x.shape[1]}"
            )
        for layer, normalize in zip(self.layers, self.normalize):
            x = layer(x)
            if normalize:
                x = instance_norm(x)
            x = leaky_relu(x, LEAKY_SLOPE)
        return self.head(x)


    def named_parameters(self) -> dict[str, Tensor]:
        params = {}
        for k, layer in enumerate(self.layers, start=1):
            for key, tensor in layer.parameters().items():
                params[f"conv{k}.{key}"] = tensor
        for key, tensor in self.head.parameters().items():
            params[f"head.{key}"] = tensor
        return params


# ------------------------
# Feature Extractor
# ------------------------

class FeatureExtractor:
    """
    Fixed random convolutional features for the contextual loss.

    Three stages of conv 3x3 (stride 1, padding 1) + relu with widths
    16, 32, 64, and a 2x2 average pool after stages 1 and 2. Weights
    are drawn once from N(0, 2 / fan_in) with the psi seed and never
    track gradients; gradients still flow through to the image.
    """

    def __init__(self, psi_seed: int, in_channels: int = 3, dtype: Any = np.float32) -> None:
        self.psi_seed = psi_seed
        rng = make_rng(psi_seed)
        self.stages: list[ConvLayer] = []
        previous = in_channels
        for width in PSI_WIDTHS:
            std = float(np.sqrt(2.0 / (previous * 9)))
            self.stages.append(ConvLayer(
                rng, previous, width, 3, 1, 1, std=std, dtype=dtype, trainable=False
            ))
            previous = width


    def extract(self, image: Tensor) -> list[Tensor]:
        """
        Returns:
            list[Tensor]: [stage 2 (B,32,H/2,W/2), stage 3 (B,64,H/4,W/4)]
        """

        x = avg_pool2d(relu(self.stages[0](image)))
        stage2 = relu(self.stages[1](x))
        stage3 = relu(self.stages[2](avg_pool2d(stage2)))
        return [stage2, stage3]


# ------------------------
# Model Bundle
# ------------------------

@dataclass
class ModelInputs:
    """
    Batch tensors arranged for the networks.

    Attributes:
        exo (Tensor): Exocentric images (B,3,H,W) in [-1,1]
        ego (Tensor): Egocentric images (B,3,H,W) in [-1,1]
        g1_input (Tensor): G1 input and D1 condition (exo, plus ego
            segmentation channel when conditioning)
        g2_input (Tensor): G2 input and D2 condition (ego, plus exo
            segmentation channel when conditioning)
    """

    exo: Tensor
    ego: Tensor
    g1_input: Tensor
    g2_input: Tensor


def segmentation_channel(seg: np.ndarray, num_seg_classes: int, dtype: Any = np.float32) -> np.ndarray:
    """
    Encode (B,H,W) class maps as one (B,1,H,W) channel in [-1,1].
    """

    scale = 2.0 / max(num_seg_classes - 1, 1)
    return (seg.astype(np.float64) * scale - 1.0)[:, None].astype(dtype)


def prepare_inputs(
    exo: np.ndarray,
    ego: np.ndarray,
    exo_seg: np.ndarray,
    ego_seg: np.ndarray,
    num_seg_classes: int,
    conditioning: bool,
    dtype: Any = np.float32
) -> ModelInputs:
    """
    Build generator inputs and discriminator conditions for a batch.

    G1 (exo -> ego) is conditioned on the target-view (ego) segmentation
    map, G2 (ego -> exo) on the exo segmentation map.

    Args:
        exo (np.ndarray): (B,3,H,W) in [-1,1]
        ego (np.ndarray): (B,3,H,W) in [-1,1]
        exo_seg (np.ndarray): (B,H,W) integer classes
        ego_seg (np.ndarray): (B,H,W) integer classes
        num_seg_classes (int): Number of segmentation classes
        conditioning (bool): Append the segmentation channel
        dtype (Any, optional): Tensor precision. Defaults to np.float32.

    Returns:
        ModelInputs: Network-ready tensors
    """

    exo_t = Tensor(exo.astype(dtype))
    ego_t = Tensor(ego.astype(dtype))
    if not conditioning:
        return ModelInputs(exo_t, ego_t, exo_t, ego_t)
    g1_input = np.concatenate([exo, segmentation_channel(ego_seg, num_seg_classes)], axis=1)
    g2_input = np.concatenate([ego, segmentation_channel(exo_seg, num_seg_classes)], axis=1)
    return ModelInputs(exo_t, ego_t, Tensor(g1_input.astype(dtype)), Tensor(g2_input.astype(dtype)))


class PGANModel:
    """
    Generators, discriminators and feature extractor of one P-GAN.

    Attributes:
        config (UNetConfig): Generator architecture
        seed (int): Initialization seed
        psi_seed (int): Feature extractor seed
        generators (GeneratorPair): G1 and G2
        discriminators (dict[str, PatchDiscriminator]): D1 and D2
        psi (FeatureExtractor): Frozen features
    """

    def __init__(
        self,
        config: UNetConfig,
        seed: int = 0,
        psi_seed: int = 0,
        dtype: Any = np.float32
    ) -> None:
        config.validate()
        self.config = config
        self.seed = seed
        self.psi_seed = psi_seed
        self.dtype = dtype
        self.generators = GeneratorPair.build(config, make_rng(seed, _STREAM_GENERATORS), dtype)

        # D1 judges ego candidates given the G1 input, D2 exo candidates
        # given the G2 input.
        rng = make_rng(seed, _STREAM_DISCRIMINATORS)
        d_in = config.encoder_in_channels + config.out_channels
        self.discriminators = {
            did: PatchDiscriminator(rng, d_in, config.norm, dtype=dtype)
            for did in DISCRIMINATOR_IDS
        }
        self.psi = FeatureExtractor(psi_seed, config.out_channels, dtype)
        logger.debug(
            f"Built P-GAN: depth {config.depth}, base width {config.base_width}, "
            + f"shared prefix {config.shared_prefix}, "
            + f"{sum(t.size for t in self.named_parameters().values())} parameters"
        )


    def generate(self, which: str, image: Tensor) -> Tensor:
        return self.generators.generate(which, image)


    def discriminate(self, which: str, condition: Tensor, candidate: Tensor) -> Tensor:
        if which not in DISCRIMINATOR_IDS:
            raise NetsException(f"Unknown discriminator '{which}', expected one of {DISCRIMINATOR_IDS}")
        return self.discriminators[which](condition, candidate)


    def extract_features(self, image: Tensor) -> list[Tensor]:
        return self.psi.extract(image)


    def generator_parameters(self) -> dict[str, Tensor]:
        return self.generators.named_parameters()


    def discriminator_parameters(self) -> dict[str, Tensor]:
        params = {}
        for did in DISCRIMINATOR_IDS:
            for key, tensor in self.discriminators[did].named_parameters().items():
                params[f"{did}/{key}"] = tensor
        return params


    def named_parameters(self) -> dict[str, Tensor]:
        """
        All trainable parameters under canonical names; psi is excluded
        (it is rebuilt from psi_seed).
        """

        return {**self.generator_parameters(), **self.discriminator_parameters()}
