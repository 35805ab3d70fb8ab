#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides the main entry point for the pyexo2ego application.
It handles command-line interface (CLI) parsing and execution of the
commands: dataset synthesis, training, classifier fitting, evaluation,
grid rendering, single-image generation and ablation studies.

Exit codes: 0 on success, 1 on runtime failure (or user interrupt),
2 on usage or configuration error.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
import argparse
import datetime
import sys
from typing import Optional, Sequence

# Third party packages
from colorama import Fore, Style, init
from rich_argparse import RichHelpFormatter
from rich.markdown import Markdown # NOTE: installed with rich_argparse package

# pyexo2ego libs
from pyexo2ego.libs.exceptions import AppBaseException
from pyexo2ego.libs.logger import logger

# Automatically clear style on each print
init(autoreset=True)

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _run_synth(args: argparse.Namespace) -> None:
    """
    Runner for the "synth" command.
    """

    from pyexo2ego.commands.synth_dataset import synth_dataset
    synth_dataset(args)


def _run_train(args: argparse.Namespace) -> None:
    """
    Runner for the "train" command.
    """

    from pyexo2ego.commands.train_model import train_model
    train_model(args)


def _run_classify(args: argparse.Namespace) -> None:
    """
    Runner for the "classify" command.
    """

    from pyexo2ego.commands.train_classifier import train_classifier
    train_classifier(args)


def _run_eval(args: argparse.Namespace) -> None:
    """
    Runner for the "eval" command.
    """

    from pyexo2ego.commands.evaluate_model import evaluate_model
    evaluate_model(args)


def _run_grid(args: argparse.Namespace) -> None:
    """
    Runner for the "grid" command.
    """

    from pyexo2ego.commands.render_grid import render_grid
    render_grid(args)


def _run_generate(args: argparse.Namespace) -> None:
    """
    Runner for the "generate" command.
    """

    from pyexo2ego.commands.generate_view import generate_view
    generate_view(args)


def _run_ablate(args: argparse.Namespace) -> None:
    """
    Runner for the "ablate" command.
    """

    from pyexo2ego.commands.run_ablation import run_ablation
    run_ablation(args)


class CliParser(argparse.ArgumentParser):
    """
    Extends Argparse argument parser to define custom error handler
    """

    def error(self, message):
        """
        Custom error handler for argument parser
        """

        sys.stderr.write(f"{Fore.RED}Error: {message}\n\n")
        self.print_usage()
        print("\n ")
        sys.exit(EXIT_USAGE)


def build_parser() -> CliParser:
    """
    Build the CLI parser with all command subparsers.
    """

    from pyexo2ego.libs.config import workspace_path

    workspace = workspace_path()

    description_md = Markdown(
        markup=(
            "**PYEXO2EGO - Parallel GAN for exocentric to egocentric "
            "view generation.**\n"
            "\n**Features:**\n"
            "- Render synthetic paired exo/ego datasets (side or top views)\n"
            "- Train two U-Net generators with a shared encoder prefix\n"
            "- Score generated views with SSIM, PSNR, SD, KL and top-k\n"
            "- Render qualitative grids and run ablation studies\n"
            "\n**Current configuration:**\n"
            f"- Workspace: {workspace}\n"
        )
    )

    epilog_md = Markdown(
        markup="PYEXO2EGO © 2025 - **Thierry Thiers** (<webcoder31@gmail.com>)"
    )

    cliParser = CliParser(
        add_help=False,
        description=description_md,
        epilog=epilog_md,
        formatter_class=RichHelpFormatter
    )
    cliParser.add_argument(
        "-h", "--help",
        action="help",
        default=argparse.SUPPRESS,
        help="Get help (for a command, type: <command> -h)"
    )

    # Add command subparsers to main parser
    subparsers = cliParser.add_subparsers(
        dest="command",
        help=f"{Fore.LIGHTGREEN_EX}--- AVAILABLE COMMANDS ---",
        required=True
    )

    # Set options shared by all program commands
    shared_options_parser = argparse.ArgumentParser(add_help=False)
    shared_options_parser.add_argument(
        "-d", "--debug",
        action="store_true",
        default=False,
        help="Enable verbose errors in console and logging to \"" \
            + str(workspace) + "/pyexo2ego.log\""
    )
    shared_options_parser.add_argument(
        "-D", "--deep",
        action="store_true",
        default=False,
        help="Enable deep debug with traceback and stack trace in log file"
    )

    def add_command(name: str, help_text: str, runner) -> argparse.ArgumentParser:
        command = subparsers.add_parser(
            name,
            parents=[shared_options_parser],
            help=help_text,
            description=help_text,
            epilog=epilog_md,
            formatter_class=cliParser.formatter_class
        )
        command.set_defaults(func=runner)
        return command


    # CLI parser for command "synth"
    synth_command = add_command("synth", "Render a synthetic paired-view dataset", _run_synth)
    synth_command.add_argument(
        "--mode",
        choices=("side2ego", "top2ego"),
        default="side2ego",
        help="Exocentric view kind (default: side2ego)"
    )
    synth_command.add_argument(
        "--out",
        metavar="dir",
        type=str,
        required=True,
        help="Dataset directory to create"
    )
    synth_command.add_argument(
        "--train",
        metavar="count",
        type=int,
        default=512,
        help="Train split size (default: 512)"
    )
    synth_command.add_argument(
        "--test",
        metavar="count",
        type=int,
        default=128,
        help="Test split size (default: 128)"
    )
    synth_command.add_argument(
        "--res",
        metavar="pixels",
        type=int,
        default=32,
        help="Image side (default: 32)"
    )
    synth_command.add_argument(
        "--seed",
        metavar="int",
        type=int,
        default=0,
        help="Dataset seed (default: 0)"
    )
    synth_command.add_argument(
        "--workers",
        metavar="count",
        type=int,
        default=1,
        help="Rendering threads (default: 1)"
    )


    # CLI parser for command "train"
    train_command = add_command("train", "Train a P-GAN from a run configuration file", _run_train)
    train_command.add_argument(
        "--config",
        metavar="file",
        type=str,
        required=True,
        help="Run configuration (JSON)"
    )


    # CLI parser for command "classify"
    classify_command = add_command(
        "classify", "Train the scene classifier used by KL and top-k metrics", _run_classify
    )
    classify_command.add_argument(
        "--dataset",
        metavar="dir",
        type=str,
        required=True,
        help="Dataset directory"
    )
    classify_command.add_argument(
        "--out",
        metavar="file",
        type=str,
        required=True,
        help="Classifier file to write"
    )
    classify_command.add_argument(
        "--epochs",
        metavar="count",
        type=int,
        default=30,
        help="Training epochs (default: 30)"
    )
    classify_command.add_argument(
        "--seed",
        metavar="int",
        type=int,
        default=0,
        help="Classifier seed (default: 0)"
    )
    classify_command.add_argument(
        "--batch-size",
        metavar="count",
        type=int,
        default=32,
        help="Batch size (default: 32)"
    )
    classify_command.add_argument(
        "--lr",
        metavar="rate",
        type=float,
        default=3e-3,
        help="Peak Adam learning rate, cosine-decayed to zero (default: 0.003)"
    )


    # CLI parser for command "eval"
    eval_command = add_command("eval", "Evaluate a checkpoint on the test split", _run_eval)
    eval_command.add_argument(
        "--checkpoint",
        metavar="file",
        type=str,
        required=True,
        help="Checkpoint file"
    )
    eval_command.add_argument(
        "--dataset",
        metavar="dir",
        type=str,
        required=True,
        help="Dataset directory"
    )
    eval_command.add_argument(
        "--classifier",
        metavar="file",
        type=str,
        default=None,
        help="Scene classifier file (see the classify command)"
    )
    eval_command.add_argument(
        "--out",
        metavar="file",
        type=str,
        default="report.json",
        help="Report JSON path; a CSV copy is written next to it (default: report.json)"
    )
    eval_command.add_argument(
        "--kl-direction",
        choices=("generated_to_real", "real_to_generated"),
        default="generated_to_real",
        help="KL divergence direction (default: generated_to_real)"
    )
    eval_command.add_argument(
        "--threshold",
        metavar="prob",
        type=float,
        default=0.5,
        help="Confidence threshold of the confident top-k columns (default: 0.5)"
    )
    eval_command.add_argument(
        "--batch-size",
        metavar="count",
        type=int,
        default=32,
        help="Inference batch size (default: 32)"
    )


    # CLI parser for command "grid"
    grid_command = add_command("grid", "Render a qualitative comparison grid", _run_grid)
    grid_command.add_argument(
        "--checkpoint",
        metavar="file",
        type=str,
        required=True,
        help="Checkpoint file"
    )
    grid_command.add_argument(
        "--dataset",
        metavar="dir",
        type=str,
        required=True,
        help="Dataset directory"
    )
    grid_command.add_argument(
        "--n",
        metavar="rows",
        type=int,
        default=8,
        help="Number of test records shown (default: 8)"
    )
    grid_command.add_argument(
        "--seed",
        metavar="int",
        type=int,
        default=0,
        help="Row selection seed (default: 0)"
    )
    grid_command.add_argument(
        "--out",
        metavar="file",
        type=str,
        default="grid.png",
        help="PNG path (default: grid.png)"
    )


    # CLI parser for command "generate"
    generate_command = add_command("generate", "Generate the ego view of one exo image", _run_generate)
    generate_command.add_argument(
        "--checkpoint",
        metavar="file",
        type=str,
        required=True,
        help="Checkpoint file"
    )
    generate_command.add_argument(
        "--input",
        metavar="file",
        type=str,
        required=True,
        help="Exocentric RGB PNG"
    )
    generate_command.add_argument(
        "--seg",
        metavar="file",
        type=str,
        default=None,
        help="Ego segmentation PNG (segmentation-conditioned checkpoints)"
    )
    generate_command.add_argument(
        "--out",
        metavar="file",
        type=str,
        default="ego.png",
        help="Output PNG (default: ego.png)"
    )


    # CLI parser for command "ablate"
    ablate_command = add_command("ablate", "Train and compare ablation variants", _run_ablate)
    ablate_command.add_argument(
        "--config",
        metavar="file",
        type=str,
        required=True,
        help="Run configuration (JSON)"
    )
    ablate_command.add_argument(
        "--sharing-sweep",
        action="store_true",
        default=False,
        help="Add one variant per shared encoder prefix length"
    )

    return cliParser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and run the invoked command.

    Args:
        argv (Optional[Sequence[str]], optional): Arguments without the
            program name. Defaults to sys.argv[1:].

    Returns:
        int: Process exit code
    """

    from pyexo2ego.libs.config import workspace_path

    argv = list(sys.argv[1:] if argv is None else argv)
    print()
    args = build_parser().parse_args(args=argv or ["--help"])

    # Set up debug logging
    if args.debug or args.deep:
        workspace = workspace_path()
        workspace.mkdir(parents=True, exist_ok=True)

        # Enable verbose errors in console and logging
        logger.enable_verbose_errors()

        # Enable logging to file
        # NOTE: the log file is created in the workspace
        logger.enable_file_handler(
            log_file=workspace.joinpath("pyexo2ego.log"),
            enable_traceback=args.deep
        )

    # Display and log start of program execution
    start_time = (datetime.datetime.now()).time().strftime('%H:%M:%S')
    print(f"{Fore.LIGHTGREEN_EX}PYEXO2EGO STARTED AT {start_time}\n")
    logger.info("PYEXO2EGO started at " + start_time)

    print(f"{Fore.WHITE}{Style.DIM}⇨ Invoked command ....... {Style.NORMAL}"
        + f"{Fore.LIGHTCYAN_EX}{Style.BRIGHT}{args.command.upper()}"
    )
    logger.info(f"Command: {args.command.upper()}, arguments: {vars(args)}")

    # Execute appropriate command runner
    exit_code = EXIT_SUCCESS
    try:
        args.func(args)
    except KeyboardInterrupt:
        # Handle CTRL+C (SIGINT) to exit properly
        logger.info(
            f"User interrupted the \"{args.command}\" command execution"
        )
        exit_code = EXIT_FAILURE
    except AppBaseException as error:
        print()
        logger.critical(
            error,
            f"The \"{args.command}\" command failed"
        )
        exit_code = error.exit_code
    except Exception as error:
        # Catch any unhandled error
        print()
        logger.critical(
            error,
            f"The \"{args.command}\" command failed due to a critical error"
        )
        exit_code = EXIT_FAILURE

    # Log end of program execution
    end_time = (datetime.datetime.now()).time().strftime('%H:%M:%S')
    logger.info(f"PYEXO2EGO finished at {end_time} with exit code {exit_code}")
    print(f"\n{Fore.LIGHTGREEN_EX}PYEXO2EGO FINISHED AT {end_time}\n")
    return exit_code


def main() -> None:
    """
    Console script entry point.
    """

    sys.exit(run())


# Main entry point
# This allows the module to be run as a script or imported
# without executing the main function, to be used in other modules
if __name__ == "__main__":
    main()
