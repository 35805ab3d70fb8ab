#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module handles the "synth" command: render a paired-view dataset.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from pathlib import Path

# Third party packages
from colorama import Fore, init

# pyexo2ego libs
from pyexo2ego.libs.synthdata import build_manifest, write_dataset
from pyexo2ego.libs.utils import StepProgressBar, echo_settings, format_echo_line, print_banner

# Automatically clear style on each print
init(autoreset=True)


def synth_dataset(args: any) -> Path:
    """
    Render a dataset of exo/ego pairs to disk.

    Args:
        args: Command line arguments with the following attributes:
            - mode (str): "side2ego" or "top2ego"
            - out (str): Output directory
            - train (int): Train split size
            - test (int): Test split size
            - res (int): Raster side
            - seed (int): Dataset seed
            - workers (int): Rendering threads

    Returns:
        Path: The manifest path

    Raises:
        DatasetException: On invalid sizes or I/O failure
    """

    echo_settings("Dataset", {
        "mode": args.mode, "output": args.out, "train pairs": args.train,
        "test pairs": args.test, "resolution": args.res, "seed": args.seed,
    })
    print_banner(f"Rendering {args.train + args.test} {args.mode} pairs")

    manifest = build_manifest(args.mode, args.res, args.train, args.test, args.seed)
    manifest_path = write_dataset(
        manifest, args.out, workers=args.workers,
        bar_logger=StepProgressBar(label="Rendering")
    )

    classes = sorted({record.class_id for record in manifest.records})
    print(format_echo_line("Scene classes present", ", ".join(map(str, classes))))
    print(f"\n{Fore.LIGHTGREEN_EX}Dataset written to \"{manifest_path.parent}\"")
    return manifest_path
