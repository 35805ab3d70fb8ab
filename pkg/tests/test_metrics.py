"""
Image and semantic metrics, the scene classifier and the evaluation
report.
"""

# Python core modules
import csv
from dataclasses import replace
import json
import math

# Third party packages
import numpy as np
import pytest

# pyexo2ego libs
from pyexo2ego.libs.metrics import (
    DECIBEL_CAP,
    EvaluationResult,
    MetricsException,
    MetricsOptions,
    MetricsReport,
    SceneClassifier,
    ego_generator,
    evaluate,
    kl_divergences,
    kl_score,
    psnr,
    sharpness_difference,
    ssim,
    top1_accuracy,
    topk_agreement,
    train_scene_classifier,
)
from pyexo2ego.libs.synthdata import build_manifest, load_split, write_dataset
from pyexo2ego.libs.trainer import build_model


def naive_ssim(a: np.ndarray, b: np.ndarray, window: int = 8) -> float:
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    values = []
    for i in range(a.shape[0] - window + 1):
        for j in range(a.shape[1] - window + 1):
            x = a[i:i + window, j:j + window]
            y = b[i:i + window, j:j + window]
            mx, my = x.mean(), y.mean()
            vx, vy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
            cov = ((x - mx) * (y - my)).mean()
            values.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(values))


def naive_kl(p: np.ndarray, q: np.ndarray) -> float:
    p = np.maximum(p, 1e-8)
    q = np.maximum(q, 1e-8)
    p, q = p / p.sum(), q / q.sum()
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))


# ------------------------
# Pixel Metrics
# ------------------------

def test_ssim_of_identical_images_is_one(rng):
    image = rng.random((3, 16, 16))
    assert ssim(image, image) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_windowed_definition(seed):
    image = np.random.default_rng(seed).random((12, 12))
    assert ssim(image, 1.0 - image) == pytest.approx(naive_ssim(image, 1.0 - image), abs=1e-9)


def test_ssim_rejects_small_or_mismatched_images():
    with pytest.raises(MetricsException, match="window"):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(MetricsException, match="shape"):
        ssim(np.zeros((8, 8)), np.zeros((9, 9)))


def test_psnr_values():
    assert psnr(np.zeros((8, 8)), np.full((8, 8), 0.1)) == pytest.approx(20.0)
    assert psnr(np.ones((3, 8, 8)), np.ones((3, 8, 8))) == DECIBEL_CAP


def test_sharpness_difference_of_a_single_edge():
    flat = np.zeros((1, 8, 8))
    edge = flat.copy()
    edge[:, :, 4:] = 0.5
    # One column of 0.5 gradients over 64 pixels
    assert sharpness_difference(flat, edge) == pytest.approx(10.0 * math.log10(16.0))
    assert sharpness_difference(edge, edge) == DECIBEL_CAP


def test_sharpness_difference_ignores_constant_offsets():
    image = np.random.default_rng(0).random((8, 8))
    assert sharpness_difference(image, image + 0.25) == pytest.approx(DECIBEL_CAP)


# ------------------------
# Semantic Metrics
# ------------------------

def test_kl_of_certain_against_uniform():
    mean, std = kl_score(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
    assert mean == pytest.approx(math.log(2.0), abs=1e-6)
    assert std == 0.0


def test_kl_direction_matters():
    certain, uniform = np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])
    reverse = kl_divergences(certain, uniform, "real_to_generated")[0]
    assert reverse > 5.0
    with pytest.raises(MetricsException, match="direction"):
        kl_divergences(certain, uniform, "sideways")


def test_kl_matches_naive_summation(rng):
    generated = rng.dirichlet(np.ones(8), size=20)
    real = rng.dirichlet(np.ones(8), size=20)
    real[0] = np.eye(8)[3]
    expected = [naive_kl(p, q) for p, q in zip(generated, real)]
    np.testing.assert_allclose(kl_divergences(generated, real), expected, rtol=1e-10)
    mean, std = kl_score(generated, real)
    assert mean == pytest.approx(np.mean(expected)) and std == pytest.approx(np.std(expected))


def test_kl_of_identical_sets_is_zero(rng):
    probabilities = rng.dirichlet(np.ones(8), size=5)
    mean, _ = kl_score(probabilities, probabilities)
    assert mean == pytest.approx(0.0, abs=1e-12)


def test_kl_rejects_mismatched_sets():
    with pytest.raises(MetricsException, match="3 generated vs 2 real"):
        kl_score(np.full((3, 4), 0.25), np.full((2, 4), 0.25))


GENERATED = np.array([[0.1, 0.6, 0.3], [0.5, 0.2, 0.3], [0.2, 0.2, 0.6]])
REAL = np.array([[0.1, 0.8, 0.1], [0.3, 0.3, 0.4], [0.9, 0.05, 0.05]])


def test_top1_agreement_by_hand():
    result = topk_agreement(GENERATED, REAL, 1)
    assert result.all == pytest.approx(100.0 / 3.0)
    assert result.confident == pytest.approx(50.0)
    assert (result.n, result.n_confident) == (3, 2)


def test_top2_agreement_breaks_ties_by_lowest_class():
    result = topk_agreement(GENERATED, REAL, 2)
    assert result.all == pytest.approx(100.0)
    assert result.confident == pytest.approx(100.0)


def test_topk_without_confident_pairs():
    result = topk_agreement(GENERATED, REAL, 1, confidence_threshold=0.95)
    assert result.n_confident == 0 and result.confident == 0.0


@pytest.mark.parametrize("k", [0, 3])
def test_topk_rejects_invalid_k(k):
    with pytest.raises(MetricsException, match="k must be"):
        topk_agreement(GENERATED, REAL, k)


# ------------------------
# Scene Classifier
# ------------------------

def test_classifier_probabilities(rng):
    classifier = SceneClassifier(16, seed=3)
    probabilities = classifier.predict_proba(rng.uniform(-1, 1, (5, 3, 16, 16)), batch_size=2)
    assert probabilities.shape == (5, 8)
    np.testing.assert_allclose(probabilities.sum(axis=1), 1.0)


def test_classifier_rejects_bad_sizes():
    with pytest.raises(MetricsException, match="multiple of 4"):
        SceneClassifier(18)
    with pytest.raises(MetricsException, match="expects"):
        SceneClassifier(16).predict_proba(np.zeros((2, 3, 8, 8)))


def test_classifier_file_round_trip(rng, tmp_path):
    classifier = SceneClassifier(16, seed=3)
    path = classifier.save(tmp_path / "classifier.pgan")
    images = rng.uniform(-1, 1, (4, 3, 16, 16))
    np.testing.assert_array_equal(
        SceneClassifier.load(path).predict_proba(images), classifier.predict_proba(images)
    )


def test_classifier_training_needs_labels(rng):
    images = rng.uniform(-1, 1, (4, 3, 16, 16))
    with pytest.raises(MetricsException, match="without labels"):
        train_scene_classifier(images, None)
    with pytest.raises(MetricsException, match="4 images but 3 labels"):
        train_scene_classifier(images, np.zeros(3, dtype=int))


def test_classifier_training_is_deterministic(tiny_dataset):
    _, records = load_split(tiny_dataset, "train")
    images = np.stack([pair.ego_image for pair in records])
    labels = np.array([pair.class_id for pair in records])
    first = train_scene_classifier(images, labels, epochs=2, seed=4, batch_size=4)
    second = train_scene_classifier(images, labels, epochs=2, seed=4, batch_size=4)
    np.testing.assert_array_equal(first.predict_proba(images), second.predict_proba(images))


@pytest.mark.slow
def test_classifier_reaches_held_out_accuracy_at_defaults(tmp_path):
    write_dataset(build_manifest("side2ego", 32, train_size=512, test_size=128, seed=9), tmp_path)
    _, train_records = load_split(tmp_path, "train")
    _, test_records = load_split(tmp_path, "test")
    classifier = train_scene_classifier(
        np.stack([p.ego_image for p in train_records]),
        np.array([p.class_id for p in train_records]),
    )
    accuracy = top1_accuracy(
        classifier, np.stack([p.ego_image for p in test_records]), np.array([p.class_id for p in test_records])
    )
    print(f"held-out top-1 {accuracy:.1f}%")
    assert accuracy >= 90.0


# ------------------------
# Evaluation
# ------------------------

def test_evaluating_real_views_gives_perfect_scores(tiny_dataset):
    _, records = load_split(tiny_dataset, "test")
    result = evaluate(lambda pairs: np.stack([p.ego_image for p in pairs]), records, SceneClassifier(16))
    report = result.report
    assert report.n == 4
    assert report.ssim_mean == pytest.approx(1.0)
    assert report.psnr_mean == DECIBEL_CAP and report.sd_mean == DECIBEL_CAP
    assert report.kl_mean == pytest.approx(0.0, abs=1e-12)
    assert report.top1_all == 100.0 and report.top5_all == 100.0
    assert result.ego_l1 == 0.0
    assert result.train_reconstruction is None


def test_evaluating_a_model(tiny_dataset, tiny_train_config):
    _, records = load_split(tiny_dataset, "test")
    model = build_model(tiny_train_config)
    options = MetricsOptions(batch_size=3)
    result = evaluate(ego_generator(model, False), records, SceneClassifier(16), options)
    assert result.report.n == 4
    assert all(math.isfinite(value) for value in result.report.to_dict().values())
    assert 0.0 <= result.report.top1_all <= result.report.top5_all <= 100.0
    assert result.report.psnr_mean < DECIBEL_CAP
    assert 0 <= result.n_confident <= 4
    assert result.ego_l1 > 0.0


def test_evaluate_rejects_empty_sets_and_bad_options():
    with pytest.raises(MetricsException, match="empty"):
        evaluate(lambda pairs: None, [], SceneClassifier(16))
    with pytest.raises(MetricsException, match="kl_direction"):
        evaluate(lambda pairs: None, [], SceneClassifier(16), MetricsOptions(kl_direction="up"))


@pytest.mark.parametrize("changes", [
    {"confidence_threshold": 1.0},
    {"classifier_epochs": 0},
    {"batch_size": 0},
])
def test_metrics_options_validation(changes):
    with pytest.raises(MetricsException):
        replace(MetricsOptions(), **changes).validate()


REPORT_COLUMNS = [
    "ssim_mean", "psnr_mean", "sd_mean", "kl_mean", "kl_std",
    "top1_all", "top1_confident", "top5_all", "top5_confident", "n",
]


def test_report_files(tmp_path):
    report = MetricsReport(**{name: 4 if name == "n" else 0.5 for name in REPORT_COLUMNS})
    data = json.loads(report.write_json(tmp_path / "report.json").read_text())
    assert list(data) == REPORT_COLUMNS
    with open(report.write_csv(tmp_path / "report.csv"), newline="") as handle:
        header, row = list(csv.reader(handle))
    assert header == REPORT_COLUMNS
    assert row == ["0.5"] * 9 + ["4"]


def test_evaluation_result_keeps_extras_out_of_the_report():
    report = MetricsReport(**{name: 4 if name == "n" else 0.5 for name in REPORT_COLUMNS})
    result = EvaluationResult(report, n_confident=3, ego_l1=0.25)
    assert list(result.to_dict()) == [*REPORT_COLUMNS, "n_confident", "ego_l1", "train_reconstruction"]
    assert list(result.report.to_dict()) == REPORT_COLUMNS
