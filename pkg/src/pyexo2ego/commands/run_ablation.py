#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module handles the "ablate" command: train the full model and its
variants under identical seeds, evaluate each on the test split and
write a comparison table (ablation.json / ablation.csv).

Variants: full, no cross-cycle loss (lambda4 = 0), no contextual loss
(lambda6 = 0) and, with --sharing-sweep, one model per shared encoder
prefix length. The resulting ordering is reported, never enforced.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
import csv
from dataclasses import dataclass, replace
import json
from pathlib import Path

# Third party packages
from colorama import Fore, Style, init

# pyexo2ego libs
from pyexo2ego.commands.evaluate_model import evaluate_checkpoint, load_classifier
from pyexo2ego.commands.train_classifier import fit_dataset_classifier
from pyexo2ego.libs.config import RunConfig, load_run_config, write_effective_config
from pyexo2ego.libs.logger import logger
from pyexo2ego.libs.metrics import EvaluationResult, SceneClassifier
from pyexo2ego.libs.trainer import TrainConfig, train
from pyexo2ego.libs.utils import (
    CountFormatter,
    StepProgressBar,
    print_banner,
    variant_name,
)

# Automatically clear style on each print
init(autoreset=True)

# ------------------------
# Constants
# ------------------------

ABLATION_JSON = "ablation.json"
ABLATION_CSV = "ablation.csv"
CLASSIFIER_NAME = "classifier.pgan"

# ------------------------
# Variants
# ------------------------

@dataclass
class AblationResult:
    variant: str
    config: TrainConfig
    evaluation: EvaluationResult


def ablation_variants(config: TrainConfig, sharing_sweep: bool = False) -> list[tuple[str, TrainConfig]]:
    """
    Named training configurations of an ablation study.

    Example:
        >>> [name for name, _ in ablation_variants(TrainConfig())]
        ['full', 'no-cross-cycle', 'no-contextual']
    """

    variants = [
        ("full", config),
        (variant_name("no cross cycle"), replace(config, weights=replace(config.weights, lambda4=0.0))),
        (variant_name("no contextual"), replace(config, weights=replace(config.weights, lambda6=0.0))),
    ]
    if sharing_sweep:
        for prefix in range(1, config.net.depth + 1):
            variants.append((
                variant_name("shared prefix", prefix),
                replace(config, net=replace(config.net, shared_prefix=prefix)),
            ))
    return variants


def write_ablation_tables(results: list[AblationResult], output_dir: Path) -> tuple[Path, Path]:
    """
    Write ablation.json (variants with config and evaluation) and
    ablation.csv (one row of metrics per variant, report columns then
    n_confident, ego_l1 and train_reconstruction).
    """

    json_path = output_dir / ABLATION_JSON
    json_path.write_text(json.dumps([
        {"variant": r.variant, "config": r.config.to_dict(), "evaluation": r.evaluation.to_dict()}
        for r in results
    ], indent=2))

    csv_path = output_dir / ABLATION_CSV
    with open(csv_path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["variant", *results[0].evaluation.to_dict().keys()])
        for result in results:
            writer.writerow([result.variant, *result.evaluation.to_dict().values()])
    return json_path, csv_path


def _classifier_for(config: RunConfig, output_dir: Path) -> SceneClassifier:
    if config.classifier:
        return load_classifier(config.classifier)
    classifier = fit_dataset_classifier(config.dataset, config.metrics)
    classifier.save(output_dir / CLASSIFIER_NAME)
    return classifier


# ------------------------
# Command
# ------------------------

def run_ablation(args: any) -> list[AblationResult]:
    """
    Train and evaluate every ablation variant.

    Args:
        args: Command line arguments with the following attributes:
            - config (str): RunConfig JSON file
            - sharing_sweep (bool): Add one variant per shared prefix length

    Returns:
        list[AblationResult]: One entry per variant, in training order
    """

    config = load_run_config(args.config)
    output_dir = Path(config.output_dir)
    write_effective_config(config, output_dir)
    classifier = _classifier_for(config, output_dir)

    variants = ablation_variants(config.train, args.sharing_sweep)
    counter = CountFormatter(len(variants))
    results = []
    for index, (name, train_config) in enumerate(variants, start=1):
        print_banner(f"Variant {index}/{len(variants)}: {name}")
        trained = train(
            config.dataset, train_config, output_dir / name,
            bar_logger=StepProgressBar(label="Training", watch="loss")
        )
        evaluation = evaluate_checkpoint(trained.checkpoint_path, config.dataset, classifier, config.metrics)
        results.append(AblationResult(name, train_config, evaluation))
        ssim_mean = evaluation.report.ssim_mean
        logger.info(f"Ablation variant '{name}': ego L1 {evaluation.ego_l1:.4f}, SSIM {ssim_mean:.4f}")
        print(
            f"{counter.format(index)} {Fore.WHITE}{Style.BRIGHT}{name.ljust(18)}{Style.RESET_ALL}"
            + f" ego L1 {evaluation.ego_l1:.4f}   SSIM {ssim_mean:.4f}"
        )

    json_path, _ = write_ablation_tables(results, output_dir)
    print(f"\n{Fore.LIGHTGREEN_EX}Ablation report written to \"{json_path}\"")
    return results
