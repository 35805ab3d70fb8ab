#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module handles the "eval" command: score a checkpoint on the test
split of a dataset and write the report as JSON and CSV.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from pathlib import Path
from typing import Union

# Third party packages
from colorama import Fore, init

# pyexo2ego libs
from pyexo2ego.libs.logger import logger
from pyexo2ego.libs.metrics import (
    EvaluationResult,
    MetricsException,
    MetricsOptions,
    SceneClassifier,
    ego_generator,
    evaluate,
)
from pyexo2ego.libs.nets import NetsException
from pyexo2ego.libs.synthdata import load_split
from pyexo2ego.libs.trainer import replay_reconstruction, restore_model
from pyexo2ego.libs.utils import StepProgressBar, echo_settings, print_banner

# Automatically clear style on each print
init(autoreset=True)

# ------------------------
# Constants
# ------------------------

RECONSTRUCTION_TOLERANCE = 1e-5


def load_classifier(path: Union[str, Path, None]) -> SceneClassifier:
    """
    Raises:
        MetricsException: When no classifier file is given or found
    """

    if not path:
        raise MetricsException("A scene classifier is required for KL and top-k metrics (see the classify command)")
    if not Path(path).is_file():
        raise MetricsException(f"Scene classifier file not found: '{path}'")
    return SceneClassifier.load(path)


def evaluate_checkpoint(
    checkpoint_path: Union[str, Path],
    dataset: Union[str, Path],
    classifier: SceneClassifier,
    options: MetricsOptions
) -> EvaluationResult:
    """
    Restore a checkpoint and evaluate it on the dataset's test split.

    End-of-run checkpoints also get their final reconstruction loss
    replayed on the train split; a replay that departs from the recorded
    value by more than RECONSTRUCTION_TOLERANCE means the dataset is not
    the one the checkpoint was trained on.

    Raises:
        MetricsException: On resolution mismatch or empty test split
    """

    model, checkpoint = restore_model(checkpoint_path)
    manifest, records = load_split(dataset, "test")
    if classifier.resolution != manifest.resolution:
        raise MetricsException(
            f"Resolution mismatch: dataset is {manifest.resolution}px, "
            + f"classifier expects {classifier.resolution}px"
        )
    try:
        model.config.check_side(manifest.resolution)
    except NetsException as exc:
        raise MetricsException(f"Resolution mismatch: {exc}") from exc

    generate_fn = ego_generator(model, checkpoint.config.seg_conditioning)
    result = evaluate(generate_fn, records, classifier, options, StepProgressBar(label="Generating"))

    if checkpoint.last_batch is not None:
        _, train_records = load_split(dataset, "train")
        result.train_reconstruction = replay_reconstruction(model, checkpoint, train_records)
        drift = abs(result.train_reconstruction - checkpoint.last_batch.reconstruction)
        if drift > RECONSTRUCTION_TOLERANCE:
            logger.warning(
                f"Replayed reconstruction {result.train_reconstruction:.6f} differs from the recorded "
                + f"{checkpoint.last_batch.reconstruction:.6f}: '{dataset}' is not the training dataset"
            )
    return result


def evaluate_model(args: any) -> EvaluationResult:
    """
    Evaluate a checkpoint and write <out> (JSON) plus the same stem as CSV.

    Args:
        args: Command line arguments with the following attributes:
            - checkpoint (str): Checkpoint file
            - dataset (str): Dataset directory
            - classifier (str): Scene classifier file
            - out (str): Report JSON path
            - kl_direction (str): KL direction
            - threshold (float): Confidence threshold
            - batch_size (int): Inference batch size

    Returns:
        EvaluationResult: The report and extra figures
    """

    options = MetricsOptions(
        kl_direction=args.kl_direction,
        confidence_threshold=args.threshold,
        batch_size=args.batch_size,
    )
    echo_settings("Evaluation", {
        "checkpoint": args.checkpoint, "dataset": args.dataset,
        "classifier": args.classifier, "report": args.out,
        "kl direction": options.kl_direction,
        "confidence threshold": options.confidence_threshold,
    })
    classifier = load_classifier(args.classifier)

    print_banner("Evaluating generated ego views")
    result = evaluate_checkpoint(args.checkpoint, args.dataset, classifier, options)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.report.write_json(out)
    result.report.write_csv(out.with_suffix(".csv"))
    print()
    echo_settings("Metrics", result.to_dict())
    print(f"\n{Fore.LIGHTGREEN_EX}Report written to \"{out}\"")
    return result
