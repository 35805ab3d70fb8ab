#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module handles the "generate" command: turn one exocentric PNG into
an egocentric PNG with a trained checkpoint.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from pathlib import Path
from typing import Optional, Union

# Third party packages
from colorama import Fore, init
import numpy as np
from PIL import Image, UnidentifiedImageError

# pyexo2ego libs
from pyexo2ego.libs.exceptions import ConfigException
from pyexo2ego.libs.metrics import ego_generator
from pyexo2ego.libs.synthdata import ViewPair, dequantize, quantize
from pyexo2ego.libs.trainer import restore_model
from pyexo2ego.libs.utils import echo_settings

# Automatically clear style on each print
init(autoreset=True)


def _read_png(path: Union[str, Path], mode: str) -> np.ndarray:
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert(mode)).copy()
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise ConfigException(f"Cannot read image '{path}': {exc}") from exc


def generate_ego(
    checkpoint_path: Union[str, Path],
    exo_path: Union[str, Path],
    seg_path: Optional[Union[str, Path]] = None
) -> np.ndarray:
    """
    Generated ego view of one exo image.

    Args:
        checkpoint_path (Union[str, Path]): Checkpoint file
        exo_path (Union[str, Path]): Exocentric RGB PNG
        seg_path (Optional[Union[str, Path]], optional): Ego segmentation
            PNG, required by segmentation-conditioned checkpoints.
            Defaults to None.

    Returns:
        np.ndarray: (3,H,W) float32 in [-1,1]

    Raises:
        ConfigException: On unreadable or unsuitable inputs
    """

    model, checkpoint = restore_model(checkpoint_path)
    exo = dequantize(_read_png(exo_path, "RGB"))
    side = exo.shape[-1]
    if exo.shape[1] != side:
        raise ConfigException(f"Input image must be square, got {exo.shape[2]}x{exo.shape[1]}")

    conditioning = checkpoint.config.seg_conditioning
    if conditioning and not seg_path:
        raise ConfigException("This checkpoint is segmentation-conditioned: --seg is required")
    seg = _read_png(seg_path, "L") if conditioning else np.zeros((side, side), dtype=np.uint8)
    if seg.shape != (side, side):
        raise ConfigException(f"Segmentation map is {seg.shape[1]}x{seg.shape[0]}, image is {side}x{side}")

    # Only the exo image and ego segmentation feed G1
    pair = ViewPair(exo, exo, seg, seg, class_id=0, scene_seed=0)
    return ego_generator(model, conditioning)([pair])[0]


def generate_view(args: any) -> Path:
    """
    Args:
        args: Command line arguments with the following attributes:
            - checkpoint (str): Checkpoint file
            - input (str): Exocentric PNG
            - seg (Optional[str]): Ego segmentation PNG
            - out (str): Output PNG

    Returns:
        Path: The written PNG
    """

    echo_settings("Generation", {
        "checkpoint": args.checkpoint, "input": args.input,
        "segmentation": args.seg or "-", "output": args.out,
    })
    ego = generate_ego(args.checkpoint, args.input, args.seg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize(ego)).save(out)
    print(f"{Fore.LIGHTGREEN_EX}Ego view written to \"{out}\"")
    return out
