#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module handles the "classify" command: train the scene classifier
used by the KL and top-k metrics, on real egocentric images only.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from pathlib import Path
from typing import Union

# Third party packages
from colorama import Fore, init
import numpy as np

# pyexo2ego libs
from pyexo2ego.libs.metrics import (
    MetricsOptions,
    SceneClassifier,
    top1_accuracy,
    train_scene_classifier,
)
from pyexo2ego.libs.synthdata import load_split
from pyexo2ego.libs.utils import StepProgressBar, echo_settings, format_echo_line, print_banner

# Automatically clear style on each print
init(autoreset=True)


def fit_dataset_classifier(dataset: Union[str, Path], options: MetricsOptions) -> SceneClassifier:
    """
    Train a classifier on the real ego images of a dataset's train split
    and report its held-out top-1 accuracy on the test split.
    """

    manifest, train_records = load_split(dataset, "train")
    images = np.stack([pair.ego_image for pair in train_records])
    labels = np.array([pair.class_id for pair in train_records])

    print_banner("Training scene classifier")
    classifier = train_scene_classifier(
        images, labels,
        epochs=options.classifier_epochs,
        seed=options.classifier_seed,
        batch_size=options.batch_size,
        learning_rate=options.classifier_learning_rate,
        num_classes=manifest.num_classes,
        bar_logger=StepProgressBar(label="Classifier", watch="loss"),
    )

    _, test_records = load_split(dataset, "test")
    if test_records:
        accuracy = top1_accuracy(
            classifier,
            np.stack([pair.ego_image for pair in test_records]),
            np.array([pair.class_id for pair in test_records]),
        )
        print(format_echo_line("Held-out top-1 accuracy", f"{accuracy:.1f}%"))
    return classifier


def train_classifier(args: any) -> Path:
    """
    Train and save the scene classifier.

    Args:
        args: Command line arguments with the following attributes:
            - dataset (str): Dataset directory
            - out (str): Classifier file to write
            - epochs (int): Training epochs
            - seed (int): Classifier seed
            - batch_size (int): Batch size
            - lr (float): Adam step size

    Returns:
        Path: The classifier file

    Raises:
        DatasetException: On unreadable dataset
        MetricsException: On invalid options
    """

    options = MetricsOptions(
        classifier_epochs=args.epochs,
        classifier_seed=args.seed,
        batch_size=args.batch_size,
        classifier_learning_rate=args.lr,
    )
    options.validate()
    echo_settings("Scene classifier", {
        "dataset": args.dataset, "output": args.out, "epochs": args.epochs,
        "seed": args.seed, "batch size": args.batch_size, "learning rate": args.lr,
    })

    path = fit_dataset_classifier(args.dataset, options).save(args.out)
    print(f"\n{Fore.LIGHTGREEN_EX}Classifier written to \"{path}\"")
    return path
