#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module handles the "train" command: train a P-GAN from a run
configuration file.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Third party packages
from colorama import Fore, init

# pyexo2ego libs
from pyexo2ego.libs.config import load_run_config, write_effective_config
from pyexo2ego.libs.trainer import TrainResult, train
from pyexo2ego.libs.utils import StepProgressBar, format_echo_line, print_banner

# Automatically clear style on each print
init(autoreset=True)


def train_model(args: any) -> TrainResult:
    """
    Train a model as described by a RunConfig file.

    Args:
        args: Command line arguments with the following attributes:
            - config (str): RunConfig JSON file

    Returns:
        TrainResult: Final model and artifact paths

    Raises:
        ConfigException: On invalid configuration
        NonFiniteLossError: When training diverges
    """

    config = load_run_config(args.config)
    write_effective_config(config)
    width = len(str(config.train.epochs))

    def on_epoch(epoch: int, mean_total: float) -> None:
        print(format_echo_line(f"Epoch {epoch:0{width}d}/{config.train.epochs}", f"mean total loss {mean_total:.4f}"))

    print_banner("Training P-GAN")
    result = train(
        config.dataset, config.train, config.output_dir,
        bar_logger=StepProgressBar(label="Training", watch="loss"),
        on_epoch=on_epoch
    )

    print()
    print(format_echo_line("Steps", result.steps))
    if result.last_report:
        print(format_echo_line("Last generator total", result.last_report.total))
    print(format_echo_line("Loss log", result.loss_log_path))
    print(f"\n{Fore.LIGHTGREEN_EX}Checkpoint written to \"{result.checkpoint_path}\"")
    return result
