"""
Command line: parser, exit codes and the full synth → classify → train →
eval → grid → generate → ablate pipeline on a tiny dataset.
"""

# Python core modules
import json

# Third party packages
import numpy as np
from PIL import Image
import pytest

# pyexo2ego libs
from pyexo2ego.commands.evaluate_model import evaluate_checkpoint, load_classifier
from pyexo2ego.commands.render_grid import GRID_MARGIN, compose_grid, grid_size, select_rows
from pyexo2ego.commands.run_ablation import ablation_variants
from pyexo2ego.libs.exceptions import ConfigException
from pyexo2ego.libs.metrics import MetricsOptions
from pyexo2ego.libs.synthdata import read_manifest
from pyexo2ego.libs.trainer import CHECKPOINT_NAME, TrainConfig, load_checkpoint
from pyexo2ego.main import EXIT_FAILURE, EXIT_SUCCESS, EXIT_USAGE, build_parser, run

SIDE = 16


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """
    Dataset, classifier and trained checkpoint produced through the CLI.
    """

    root = tmp_path_factory.mktemp("pipeline")
    dataset, classifier = root / "data", root / "classifier.pgan"
    config = root / "run.json"
    config.write_text(json.dumps({
        "dataset": str(dataset),
        "output_dir": str(root / "run"),
        "classifier": str(classifier),
        "train": {
            "epochs": 1, "batch_size": 2, "augment": False, "max_steps": 1,
            "net": {"base_width": 4, "depth": 2, "shared_prefix": 1},
        },
        "metrics": {"batch_size": 4},
    }))

    assert run([
        "synth", "--out", str(dataset), "--train", "6", "--test", "4",
        "--res", str(SIDE), "--seed", "1", "--workers", "2",
    ]) == EXIT_SUCCESS
    assert run([
        "classify", "--dataset", str(dataset), "--out", str(classifier),
        "--epochs", "1", "--batch-size", "4",
    ]) == EXIT_SUCCESS
    assert run(["train", "--config", str(config)]) == EXIT_SUCCESS
    return {
        "root": root,
        "dataset": dataset,
        "classifier": classifier,
        "config": config,
        "checkpoint": root / "run" / CHECKPOINT_NAME,
    }


# ------------------------
# Parser
# ------------------------

@pytest.mark.parametrize("argv", [
    ["synth"],
    ["train"],
    ["eval", "--checkpoint", "c.pgan"],
    ["synth", "--out", "d", "--mode", "front2ego"],
    ["unknown"],
])
def test_usage_errors_exit_with_two(argv):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(argv)
    assert info.value.code == EXIT_USAGE


def test_parser_defaults():
    args = build_parser().parse_args(["eval", "--checkpoint", "c.pgan", "--dataset", "d"])
    assert args.kl_direction == "generated_to_real"
    assert args.threshold == 0.5 and args.out == "report.json"
    assert args.debug is False and callable(args.func)


def test_missing_config_file_is_a_usage_error(tmp_path):
    assert run(["train", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE


def test_runtime_failure_exits_with_one(tmp_path):
    assert run(["synth", "--out", str(tmp_path), "--res", "4"]) == EXIT_FAILURE


# ------------------------
# Grid Helpers
# ------------------------

def test_grid_size():
    assert grid_size(8, 3, 32) == (104, 274)


def test_compose_grid_places_cells():
    cells = [[np.full((4, 4, 3), 10 * (r + c), dtype=np.uint8) for c in range(2)] for r in range(2)]
    canvas = compose_grid(cells)
    assert canvas.shape == (2 * 4 + 3 * GRID_MARGIN, 2 * 4 + 3 * GRID_MARGIN, 3)
    top, left = GRID_MARGIN + 4 + GRID_MARGIN, GRID_MARGIN
    assert np.all(canvas[top:top + 4, left:left + 4] == 10)
    assert canvas[0, 0, 0] == 255


def test_select_rows():
    rows = select_rows(3, 10, seed=4)
    assert rows == sorted(rows) and len(set(rows)) == 3
    assert rows == select_rows(3, 10, seed=4)
    with pytest.raises(ConfigException, match="1..10"):
        select_rows(11, 10, seed=0)


def test_ablation_variant_names():
    config = TrainConfig()
    names = [name for name, _ in ablation_variants(config, sharing_sweep=True)]
    assert names == [
        "full", "no-cross-cycle", "no-contextual",
        "shared-prefix-1", "shared-prefix-2", "shared-prefix-3", "shared-prefix-4",
    ]
    variants = dict(ablation_variants(config))
    assert variants["no-cross-cycle"].weights.lambda4 == 0.0
    assert variants["no-contextual"].weights.lambda6 == 0.0
    assert variants["full"] == config


# ------------------------
# Pipeline
# ------------------------

def test_train_writes_run_artifacts(pipeline):
    run_dir = pipeline["root"] / "run"
    assert pipeline["checkpoint"].is_file()
    assert (run_dir / "losses.csv").is_file()
    effective = json.loads((run_dir / "effective_config.json").read_text())
    assert effective["train"]["max_steps"] == 1


def test_eval_writes_json_and_csv(pipeline, tmp_path):
    out = tmp_path / "report.json"
    assert run([
        "eval", "--checkpoint", str(pipeline["checkpoint"]), "--dataset", str(pipeline["dataset"]),
        "--classifier", str(pipeline["classifier"]), "--out", str(out),
    ]) == EXIT_SUCCESS
    report = json.loads(out.read_text())
    assert list(report) == [
        "ssim_mean", "psnr_mean", "sd_mean", "kl_mean", "kl_std",
        "top1_all", "top1_confident", "top5_all", "top5_confident", "n",
    ]
    assert report["n"] == 4
    assert out.with_suffix(".csv").read_text().splitlines()[0] == ",".join(report)


def test_eval_replays_the_final_reconstruction(pipeline):
    result = evaluate_checkpoint(
        pipeline["checkpoint"], pipeline["dataset"],
        load_classifier(pipeline["classifier"]), MetricsOptions(batch_size=4),
    )
    recorded = load_checkpoint(pipeline["checkpoint"]).last_batch.reconstruction
    assert result.train_reconstruction == pytest.approx(recorded, abs=1e-5)


def test_eval_without_classifier_fails(pipeline, tmp_path):
    assert run([
        "eval", "--checkpoint", str(pipeline["checkpoint"]), "--dataset", str(pipeline["dataset"]),
        "--out", str(tmp_path / "report.json"),
    ]) == EXIT_FAILURE


def test_grid_cell_matches_generate(pipeline, tmp_path):
    grid_path, ego_path = tmp_path / "grid.png", tmp_path / "ego.png"
    assert run([
        "grid", "--checkpoint", str(pipeline["checkpoint"]), "--dataset", str(pipeline["dataset"]),
        "--n", "2", "--seed", "3", "--out", str(grid_path),
    ]) == EXIT_SUCCESS
    grid = np.asarray(Image.open(grid_path))
    assert grid.shape[:2] == grid_size(2, 3, SIDE)[::-1]

    first = select_rows(2, 4, seed=3)[0]
    manifest = read_manifest(pipeline["dataset"])
    exo_file = pipeline["dataset"] / manifest.split_records("test")[first].exo
    assert run([
        "generate", "--checkpoint", str(pipeline["checkpoint"]),
        "--input", str(exo_file), "--out", str(ego_path),
    ]) == EXIT_SUCCESS

    left = GRID_MARGIN + SIDE + GRID_MARGIN
    cell = grid[GRID_MARGIN:GRID_MARGIN + SIDE, left:left + SIDE]
    np.testing.assert_array_equal(cell, np.asarray(Image.open(ego_path)))


def test_ablate_writes_one_row_per_variant(pipeline):
    assert run(["ablate", "--config", str(pipeline["config"])]) == EXIT_SUCCESS
    run_dir = pipeline["root"] / "run"
    results = json.loads((run_dir / "ablation.json").read_text())
    assert [entry["variant"] for entry in results] == ["full", "no-cross-cycle", "no-contextual"]
    assert len((run_dir / "ablation.csv").read_text().splitlines()) == 4
    assert (run_dir / "no-contextual" / CHECKPOINT_NAME).is_file()


def test_ablate_sharing_sweep_adds_one_row_per_prefix(pipeline, tmp_path):
    config = json.loads(pipeline["config"].read_text())
    config["output_dir"] = str(tmp_path / "sweep")
    sweep_config = tmp_path / "sweep.json"
    sweep_config.write_text(json.dumps(config))

    assert run(["ablate", "--config", str(sweep_config), "--sharing-sweep"]) == EXIT_SUCCESS
    results = json.loads((tmp_path / "sweep" / "ablation.json").read_text())
    depth = config["train"]["net"]["depth"]
    sweep = [entry for entry in results if entry["variant"].startswith("shared-prefix-")]
    assert [entry["variant"] for entry in sweep] == [f"shared-prefix-{k}" for k in range(1, depth + 1)]
    assert [entry["config"]["net"]["shared_prefix"] for entry in sweep] == list(range(1, depth + 1))
    rows = (tmp_path / "sweep" / "ablation.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 + depth
    assert [row.split(",")[0] for row in rows[-depth:]] == [entry["variant"] for entry in sweep]
