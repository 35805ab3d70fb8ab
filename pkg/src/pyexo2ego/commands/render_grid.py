#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module handles the "grid" command: a qualitative comparison image
with one test record per row and the columns
input exo | (ego segmentation) | generated ego | ground-truth ego.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from pathlib import Path

# Third party packages
from colorama import Fore, init
import numpy as np
from PIL import Image

# pyexo2ego libs
from pyexo2ego.libs.exceptions import ConfigException
from pyexo2ego.libs.metrics import ego_generator
from pyexo2ego.libs.synthdata import ViewPair, load_split, quantize
from pyexo2ego.libs.trainer import restore_model
from pyexo2ego.libs.utils import echo_settings, make_rng, print_banner

# Automatically clear style on each print
init(autoreset=True)

# ------------------------
# Constants
# ------------------------

GRID_MARGIN = 2                 # Pixels around and between cells
GRID_BACKGROUND = 255
SEG_PALETTE = np.array([
    [0, 0, 0],                  # background
    [230, 25, 75],              # box
    [60, 180, 75],              # disc
    [0, 130, 200],              # triangle
], dtype=np.uint8)

# ------------------------
# Grid Layout
# ------------------------

def grid_size(rows: int, columns: int, side: int, margin: int = GRID_MARGIN) -> tuple[int, int]:
    """
    (width, height) of a grid of square cells.

    Example:
        >>> grid_size(8, 3, 32)
        (104, 274)
    """

    return columns * side + (columns + 1) * margin, rows * side + (rows + 1) * margin


def compose_grid(rows: list[list[np.ndarray]], margin: int = GRID_MARGIN) -> np.ndarray:
    """
    Tile (H,W,3) uint8 cells into one image, rows top to bottom.
    """

    side = rows[0][0].shape[0]
    width, height = grid_size(len(rows), len(rows[0]), side, margin)
    canvas = np.full((height, width, 3), GRID_BACKGROUND, dtype=np.uint8)
    for r, cells in enumerate(rows):
        for c, cell in enumerate(cells):
            top = margin + r * (side + margin)
            left = margin + c * (side + margin)
            canvas[top:top + side, left:left + side] = cell
    return canvas


def select_rows(count: int, available: int, seed: int) -> list[int]:
    """
    Sorted record indices picked from a seeded generator.

    Raises:
        ConfigException: If more rows are requested than records exist
    """

    if not 1 <= count <= available:
        raise ConfigException(f"Grid needs 1..{available} rows (test split size), got {count}")
    return sorted(int(i) for i in make_rng(seed).choice(available, size=count, replace=False))


def grid_row(pair: ViewPair, generated: np.ndarray, with_segmentation: bool) -> list[np.ndarray]:
    cells = [quantize(pair.exo_image)]
    if with_segmentation:
        cells.append(SEG_PALETTE[pair.ego_seg])
    cells.extend([quantize(generated), quantize(pair.ego_image)])
    return cells


# ------------------------
# Command
# ------------------------

def render_grid(args: any) -> Path:
    """
    Write the comparison grid PNG.

    Each row's generated view comes from a single-record generator call,
    so a cell equals what "generate" produces for that record.

    Args:
        args: Command line arguments with the following attributes:
            - checkpoint (str): Checkpoint file
            - dataset (str): Dataset directory
            - n (int): Number of rows
            - seed (int): Row selection seed
            - out (str): PNG path

    Returns:
        Path: The PNG path
    """

    echo_settings("Grid", {
        "checkpoint": args.checkpoint, "dataset": args.dataset,
        "rows": args.n, "seed": args.seed, "output": args.out,
    })
    model, checkpoint = restore_model(args.checkpoint)
    _, records = load_split(args.dataset, "test")
    indices = select_rows(args.n, len(records), args.seed)

    print_banner(f"Rendering {len(indices)}-row grid")
    conditioning = checkpoint.config.seg_conditioning
    generate = ego_generator(model, conditioning)
    rows = [grid_row(records[i], generate([records[i]])[0], conditioning) for i in indices]

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(compose_grid(rows)).save(out)
    print(f"{Fore.LIGHTGREEN_EX}Grid written to \"{out}\"")
    return out
