"""
Synthetic scenes: sampling, exo/ego rasterization, augmentation and the
on-disk dataset format.
"""

# Python core modules
import colorsys
from dataclasses import replace
import math

# Third party packages
from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

# pyexo2ego libs
from pyexo2ego.libs.synthdata import (
    CLASS_HUE_JITTER,
    FLOOR_MARGIN,
    NUM_CLASSES,
    OBJECT_SIZE_RANGE,
    SEG_BACKGROUND,
    SEG_CLASS_OF_SHAPE,
    Agent,
    DatasetException,
    SceneObject,
    SceneSpec,
    ViewPair,
    augment,
    build_manifest,
    class_color,
    class_shapes,
    dequantize,
    load_split,
    quantize,
    read_dataset,
    read_manifest,
    render_ego,
    render_exo,
    render_pair,
    sample_scene,
    scene_class,
    stack_batch,
    write_dataset,
)

RED = (0.9, 0.1, 0.1)


def _scene(*objects: SceneObject, agent: Agent = Agent((0.5, 0.1), math.pi / 2), seed: int = 7) -> SceneSpec:
    return SceneSpec(seed=seed, class_id=scene_class(objects), objects=objects, agent=agent)


def _view_color(color: tuple[float, float, float]) -> np.ndarray:
    return (np.array(color) * 2.0 - 1.0).astype(np.float32)


def _occupied_columns(seg: np.ndarray, label: int) -> int:
    return int(np.any(seg == label, axis=0).sum())


# ------------------------
# Scene Sampling
# ------------------------

def test_sample_scene_is_deterministic():
    assert sample_scene(42) == sample_scene(42)
    assert sample_scene(42) != sample_scene(43)


@settings(max_examples=200)
@given(st.integers(0, 2 ** 40))
def test_sampled_scenes_respect_bounds(seed):
    scene = sample_scene(seed)
    assert 1 <= len(scene.objects) <= 5
    assert 0 <= scene.class_id < NUM_CLASSES
    assert scene.class_id == scene_class(scene.objects)
    for obj in scene.objects:
        assert OBJECT_SIZE_RANGE[0] <= obj.size <= OBJECT_SIZE_RANGE[1]
        assert all(FLOOR_MARGIN - 1e-9 <= c <= 1.0 - FLOOR_MARGIN + 1e-9 for c in obj.position)


def test_class_histogram_covers_every_class():
    classes = {sample_scene(seed).class_id for seed in range(10_000)}
    assert classes == set(range(NUM_CLASSES))


def test_scene_class_encoding():
    box = SceneObject("box", RED, (0.5, 0.5), 0.1)
    disc = SceneObject("disc", RED, (0.5, 0.5), 0.1)
    triangle = SceneObject("triangle", RED, (0.5, 0.5), 0.1)
    assert scene_class((triangle,)) == 0
    assert scene_class((box,)) == 1
    assert scene_class((disc, triangle)) == 2
    assert scene_class((box, disc, triangle)) == 7


@pytest.mark.parametrize("class_id", range(NUM_CLASSES))
def test_class_shapes_realize_their_class(class_id):
    rng = np.random.default_rng(class_id)
    for _ in range(50):
        shapes = class_shapes(class_id, rng)
        objects = tuple(SceneObject(shape, RED, (0.5, 0.5), 0.1) for shape in shapes)
        assert 1 <= len(shapes) <= 5
        assert scene_class(objects) == class_id


def test_class_shapes_rejects_unknown_class():
    with pytest.raises(DatasetException, match="0..7"):
        class_shapes(NUM_CLASSES, np.random.default_rng(0))


@settings(max_examples=200)
@given(st.integers(0, NUM_CLASSES - 1), st.integers(0, 2 ** 32))
def test_class_colors_stay_in_their_hue_sector(class_id, seed):
    color = class_color(class_id, np.random.default_rng(seed))
    hue, saturation, _ = colorsys.rgb_to_hsv(*color)
    sector = hue * NUM_CLASSES
    distance = min(abs(sector - class_id), NUM_CLASSES - abs(sector - class_id))
    assert distance <= CLASS_HUE_JITTER + 1e-9
    assert saturation >= 0.7 - 1e-9
    assert all(0.0 <= c <= 1.0 for c in color)


def test_sampled_objects_share_the_class_hue():
    for seed in range(200):
        scene = sample_scene(seed)
        for obj in scene.objects:
            sector = colorsys.rgb_to_hsv(*obj.color)[0] * NUM_CLASSES
            assert min(abs(sector - scene.class_id), NUM_CLASSES - abs(sector - scene.class_id)) <= 0.5


# ------------------------
# Exocentric Views
# ------------------------

@pytest.mark.parametrize("mode", ["top", "side"])
def test_empty_scene_is_pure_floor(mode):
    image, seg = render_exo(_scene(), mode, 16)
    assert image.shape == (3, 16, 16) and image.dtype == np.float32
    assert np.all(seg == SEG_BACKGROUND)
    assert np.all((image >= -1.0) & (image <= 1.0))


def test_centered_disc_in_top_view():
    disc = SceneObject("disc", RED, (0.5, 0.5), 0.2)
    image, seg = render_exo(_scene(disc), "top", 16)
    rows, cols = np.nonzero(seg == SEG_CLASS_OF_SHAPE["disc"])
    assert rows.size > 0
    assert rows.mean() == pytest.approx(7.5) and cols.mean() == pytest.approx(7.5)
    assert np.all(image[:, rows, cols] == _view_color(RED)[:, None])
    assert set(np.unique(seg)) == {0, SEG_CLASS_OF_SHAPE["disc"]}


@pytest.mark.parametrize("mode", ["top", "side"])
def test_exo_rendering_is_bit_identical(mode):
    scene = sample_scene(11)
    first, second = render_exo(scene, mode, 32), render_exo(scene, mode, 32)
    assert first[0].tobytes() == second[0].tobytes()
    assert first[1].tobytes() == second[1].tobytes()


def test_side_view_draws_near_objects_over_far_ones():
    far = SceneObject("box", (0.1, 0.1, 0.9), (0.5, 0.8), 0.1)
    near = SceneObject("disc", RED, (0.5, 0.3), 0.1)
    _, seg = render_exo(_scene(far, near), "side", 32)
    assert (seg == SEG_CLASS_OF_SHAPE["disc"]).any()
    # The near object stands lower on screen
    disc_rows = np.nonzero(seg == SEG_CLASS_OF_SHAPE["disc"])[0]
    box_rows = np.nonzero(seg == SEG_CLASS_OF_SHAPE["box"])[0]
    assert disc_rows.max() > box_rows.max()


def test_unknown_exo_view_is_rejected():
    with pytest.raises(DatasetException):
        render_exo(_scene(), "front", 16)


# ------------------------
# Egocentric View
# ------------------------

def test_on_screen_size_scales_inversely_with_distance():
    near = SceneObject("box", RED, (0.5, 0.3), 0.05)
    far = SceneObject("box", RED, (0.5, 0.5), 0.05)
    near_width = _occupied_columns(render_ego(_scene(near), 64)[1], 1)
    far_width = _occupied_columns(render_ego(_scene(far), 64)[1], 1)
    assert far_width > 0
    assert abs(near_width - 2 * far_width) <= 1


def test_objects_behind_the_agent_are_not_drawn():
    behind = SceneObject("disc", RED, (0.5, 0.05), 0.1)
    agent = Agent((0.5, 0.3), math.pi / 2)
    image, seg = render_ego(_scene(behind, agent=agent), 32)
    assert not seg.any()
    assert not np.any(np.all(image == _view_color(RED)[:, None, None], axis=0))


def test_full_turn_gives_identical_raster():
    scene = sample_scene(21)
    turned = replace(scene, agent=replace(scene.agent, heading=scene.agent.heading + 2.0 * math.pi))
    first, second = render_ego(scene, 32), render_ego(turned, 32)
    assert first[0].tobytes() == second[0].tobytes()
    assert first[1].tobytes() == second[1].tobytes()


@pytest.mark.parametrize("seed", range(8))
def test_both_views_share_object_colors(seed):
    scene = sample_scene(seed)
    pair = render_pair(seed, "top2ego", 32)
    palette = {tuple(_view_color(obj.color)) for obj in scene.objects}
    for image, seg in ((pair.exo_image, pair.exo_seg), (pair.ego_image, pair.ego_seg)):
        rows, cols = np.nonzero(seg)
        for r, c in zip(rows, cols):
            assert tuple(image[:, r, c]) in palette


def test_render_pair_rejects_unknown_mode():
    with pytest.raises(DatasetException, match="front2ego"):
        render_pair(0, "front2ego")


# ------------------------
# Augmentation
# ------------------------

def _marker_pair(side: int = 32) -> ViewPair:
    image = -np.ones((3, side, side), dtype=np.float32)
    seg = np.zeros((side, side), dtype=np.uint8)
    image[:, 8:12, 20:24] = 1.0
    seg[8:12, 20:24] = 2
    return ViewPair(image, image.copy(), seg, seg.copy(), class_id=3, scene_seed=0)


def test_forced_flip_is_an_involution():
    pair = render_pair(5, "side2ego", 16)
    rng = np.random.default_rng(0)
    twice = augment(augment(pair, rng, crop_fraction=1.0, force_flip=True), rng, crop_fraction=1.0, force_flip=True)
    np.testing.assert_array_equal(twice.exo_image, pair.exo_image)
    np.testing.assert_array_equal(twice.ego_seg, pair.ego_seg)


def test_identity_draw_leaves_pair_unchanged():
    pair = render_pair(5, "side2ego", 16)
    same = augment(pair, np.random.default_rng(0), crop_fraction=1.0, jitter=False, force_flip=False)
    for name in ("exo_image", "ego_image", "exo_seg", "ego_seg"):
        np.testing.assert_array_equal(getattr(same, name), getattr(pair, name))
    assert same.class_id == pair.class_id


def test_flip_mirrors_images_and_segmentation_together():
    flipped = augment(_marker_pair(), np.random.default_rng(0), crop_fraction=1.0, force_flip=True)
    assert np.all(flipped.exo_seg[8:12, 8:12] == 2)
    assert np.all(flipped.exo_image[:, 8:12, 8:12] == 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_crop_moves_marker_identically_in_image_and_segmentation(seed):
    out = augment(_marker_pair(), np.random.default_rng(seed))
    assert out.class_id == 3
    for image, seg in ((out.exo_image, out.exo_seg), (out.ego_image, out.ego_seg)):
        weights = image[0].astype(np.float64) + 1.0
        rows, cols = np.indices(weights.shape)
        image_center = (np.sum(rows * weights) / weights.sum(), np.sum(cols * weights) / weights.sum())
        seg_rows, seg_cols = np.nonzero(seg == 2)
        assert abs(seg_rows.mean() - image_center[0]) < 1.0
        assert abs(seg_cols.mean() - image_center[1]) < 1.0


def test_stack_batch_shapes():
    batch = stack_batch([render_pair(seed, "side2ego", 16) for seed in range(3)])
    assert len(batch) == 3
    assert batch.exo.shape == (3, 3, 16, 16) and batch.ego_seg.shape == (3, 16, 16)
    assert list(batch.seeds) == [0, 1, 2]


def test_quantization_endpoints():
    view = np.stack([np.full((2, 2), -1.0), np.zeros((2, 2)), np.ones((2, 2))]).astype(np.float32)
    raster = quantize(view)
    assert raster.shape == (2, 2, 3)
    assert list(raster[0, 0]) == [0, 128, 255]
    assert dequantize(raster)[2, 0, 0] == 1.0


# ------------------------
# Dataset Files
# ------------------------

def test_manifest_splits_use_disjoint_seeds():
    manifest = build_manifest("top2ego", 16, train_size=5, test_size=3, seed=2)
    train = {r.seed for r in manifest.split_records("train")}
    test = {r.seed for r in manifest.split_records("test")}
    assert len(train) == 5 and len(test) == 3
    assert not train & test
    assert min(train) == 2_000_000


@pytest.mark.parametrize("kwargs", [
    {"mode": "front2ego"},
    {"resolution": 4},
    {"train_size": 0, "test_size": 0},
    {"train_size": -1},
])
def test_build_manifest_rejects_bad_arguments(kwargs):
    with pytest.raises(DatasetException):
        build_manifest(**kwargs)


def test_dataset_round_trip_is_lossless_at_eight_bits(tmp_path):
    manifest = build_manifest("side2ego", 16, train_size=12, test_size=4, seed=1)
    write_dataset(manifest, tmp_path)
    loaded, records = read_dataset(tmp_path)
    records = list(records)
    assert [r.scene_seed for r in records] == [r.seed for r in manifest.records]
    for entry, pair in zip(manifest.records, records):
        original = render_pair(entry.seed, "side2ego", 16)
        assert pair.class_id == original.class_id == entry.class_id
        np.testing.assert_array_equal(quantize(pair.exo_image), quantize(original.exo_image))
        np.testing.assert_array_equal(quantize(pair.ego_image), quantize(original.ego_image))
        np.testing.assert_array_equal(pair.ego_seg, original.ego_seg)
    assert loaded == manifest


def test_identical_seeds_write_byte_identical_files(tmp_path):
    manifest = build_manifest("top2ego", 8, train_size=3, test_size=2, seed=4)
    write_dataset(manifest, tmp_path / "a")
    write_dataset(manifest, tmp_path / "b", workers=3)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 5 * 4 + 1
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_file_names_the_record(tmp_path):
    manifest = build_manifest("side2ego", 8, train_size=3, test_size=1, seed=0)
    write_dataset(manifest, tmp_path)
    record = manifest.records[2]
    (tmp_path / record.ego_seg).unlink()
    with pytest.raises(DatasetException, match=f"Record 2 \\(seed {record.seed}\\)"):
        read_dataset(tmp_path)


def test_corrupt_image_is_reported(tmp_path):
    manifest = build_manifest("side2ego", 8, train_size=2, test_size=1, seed=0)
    write_dataset(manifest, tmp_path)
    (tmp_path / manifest.records[0].exo).write_bytes(b"not a png")
    with pytest.raises(DatasetException, match="Corrupt image"):
        load_split(tmp_path, "train")


def test_missing_manifest_is_reported(tmp_path):
    with pytest.raises(DatasetException, match="manifest.json"):
        read_manifest(tmp_path)


def test_load_split_rejects_unknown_split(tiny_dataset):
    with pytest.raises(DatasetException, match="validation"):
        load_split(tiny_dataset, "validation")


def test_load_split_returns_only_that_split(tiny_dataset):
    manifest, records = load_split(tiny_dataset, "test")
    assert len(records) == manifest.splits["test"] == 4
    assert records[0].exo_image.shape == (3, 16, 16)
