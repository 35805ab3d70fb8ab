#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides the synthetic paired-view dataset:
- Seeded scenes of flat-colored boxes, discs and triangles placed on a
  textured floor in front of an agent; the scene class fixes both the
  shape signature and the hue sector of the object colors
- Exocentric renders (orthographic top view or oblique side view) and
  the egocentric perspective render from the agent, each with a
  segmentation map
- Training augmentation (horizontal flip, random crop and resize)
- Dataset files: 8-bit PNG rasters plus a manifest.json index

Everything is a pure function of the scene seed, so a dataset is fully
reproducible from (seed, mode, resolution).

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
import colorsys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path
from typing import Any, Iterator, Optional, Union

# Third party packages
import numpy as np
from PIL import Image, UnidentifiedImageError
import proglog
from scipy import ndimage

# pyexo2ego libs
from pyexo2ego.libs.exceptions import AppBaseException
from pyexo2ego.libs.logger import logger
from pyexo2ego.libs.utils import make_rng

# ------------------------
# Constants
# ------------------------

MODES = ("side2ego", "top2ego")
EXO_VIEW_OF_MODE = {"side2ego": "side", "top2ego": "top"}
SPLITS = ("train", "test")

SHAPES = ("box", "disc", "triangle")
SEG_BACKGROUND = 0
SEG_CLASS_OF_SHAPE = {"box": 1, "disc": 2, "triangle": 3}
NUM_SEG_CLASSES = 4
NUM_CLASSES = 8

DEFAULT_RESOLUTION = 32
DEFAULT_TRAIN_SIZE = 512
DEFAULT_TEST_SIZE = 128
SEED_BLOCK = 1_000_000          # Record seeds of dataset seed s start at s·SEED_BLOCK

# Scene layout (floor units, the floor is the unit square)
MIN_OBJECTS, MAX_OBJECTS = 1, 5
CROWDED_COUNT = 3                       # Scenes with at least this many objects set class bit 4
OBJECT_SIZE_RANGE = (0.06, 0.11)
OBJECT_DISTANCE_RANGE = (0.15, 0.45)
WEDGE_HALF_ANGLE = math.radians(35.0)   # Inside the 90° field of view
AGENT_RANGE = (0.25, 0.75)
FLOOR_MARGIN = 0.05
MAX_PLACEMENT_TRIES = 100

# Object colors: class k draws hues around k/NUM_CLASSES of the color wheel
CLASS_HUE_JITTER = 0.2                  # In hue sectors, keeps a gap between classes
OBJECT_SATURATION_RANGE = (0.7, 1.0)
OBJECT_VALUE_RANGE = (0.65, 1.0)
FLOOR_RANGE = (0.42, 0.58)
BACKDROP_RANGE = (0.72, 0.88)

# Cameras
CAMERA_HEIGHT = 0.08
NEAR_PLANE = 0.02
SIDE_FORESHORTENING = 0.5
NOISE_GRID = 6
OUTSIDE_FLOOR_COLOR = (0.25, 0.25, 0.25)

# Augmentation
FLIP_PROBABILITY = 0.5
CROP_FRACTION = 7 / 8

MANIFEST_NAME = "manifest.json"

# Random streams derived from a scene seed
_STREAM_SCENE = 1
_STREAM_FLOOR = 2

# ------------------------
# Exceptions
# ------------------------

class DatasetException(AppBaseException):
    """
    Raised for dataset I/O failures: missing or corrupt files, and
    manifests that disagree with the files on disk.
    """
    pass


# ------------------------
# Domain Types
# ------------------------

@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: tuple[float, float, float]
    position: tuple[float, float]
    size: float


@dataclass(frozen=True)
class Agent:
    position: tuple[float, float]
    heading: float


@dataclass(frozen=True)
class SceneSpec:
    """
    A scene: objects on the floor square and the agent wearing the camera.

    Attributes:
        seed (int): Seed the scene (and its floor texture) derive from
        class_id (int): Scene class derived from the objects
        objects (tuple[SceneObject, ...]): 1 to 5 objects
        agent (Agent): Egocentric camera position and heading (radians)
    """

    seed: int
    class_id: int
    objects: tuple[SceneObject, ...]
    agent: Agent


@dataclass
class ViewPair:
    """
    One training record.

    Attributes:
        exo_image (np.ndarray): (3,H,W) float32 in [-1,1]
        ego_image (np.ndarray): (3,H,W) float32 in [-1,1]
        exo_seg (np.ndarray): (H,W) uint8 segmentation classes
        ego_seg (np.ndarray): (H,W) uint8 segmentation classes
        class_id (int): Scene class
        scene_seed (int): Seed the pair was rendered from
    """

    exo_image: np.ndarray
    ego_image: np.ndarray
    exo_seg: np.ndarray
    ego_seg: np.ndarray
    class_id: int
    scene_seed: int


@dataclass
class ViewBatch:
    """
    Records stacked along a leading batch axis.
    """

    exo: np.ndarray
    ego: np.ndarray
    exo_seg: np.ndarray
    ego_seg: np.ndarray
    class_ids: np.ndarray
    seeds: np.ndarray


    def __len__(self) -> int:
        return self.exo.shape[0]


@dataclass
class RecordEntry:
    split: str
    exo: str
    ego: str
    exo_seg: str
    ego_seg: str
    class_id: int
    seed: int


@dataclass
class DatasetManifest:
    """
    Index of a dataset directory (manifest.json).

    Attributes:
        mode (str): "side2ego" or "top2ego"
        resolution (int): Raster side
        num_classes (int): Scene classes
        num_seg_classes (int): Segmentation classes
        seed (int): Dataset seed
        splits (dict[str, int]): Record count per split
        records (list[RecordEntry]): Records, train split first
    """

    mode: str
    resolution: int
    num_classes: int = NUM_CLASSES
    num_seg_classes: int = NUM_SEG_CLASSES
    seed: int = 0
    splits: dict[str, int] = field(default_factory=dict)
    records: list[RecordEntry] = field(default_factory=list)


    def split_records(self, split: str) -> list[RecordEntry]:
        return [record for record in self.records if record.split == split]


    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DatasetManifest":
        try:
            records = [RecordEntry(**entry) for entry in data["records"]]
            return cls(
                mode=data["mode"],
                resolution=int(data["resolution"]),
                num_classes=int(data["num_classes"]),
                num_seg_classes=int(data.get("num_seg_classes", NUM_SEG_CLASSES)),
                seed=int(data.get("seed", 0)),
                splits=dict(data.get("splits", {})),
                records=records,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetException(f"Malformed manifest: {exc}") from exc


# ------------------------
# Scene Sampling
# ------------------------

def scene_class(objects: tuple[SceneObject, ...]) -> int:
    """
    Scene class from the object multiset:
    has_box + 2·has_disc + 4·(at least 3 objects), 8 classes.
    """

    shapes = {obj.shape for obj in objects}
    return int("box" in shapes) + 2 * int("disc" in shapes) + 4 * int(len(objects) >= CROWDED_COUNT)


def class_shapes(class_id: int, rng: np.random.Generator) -> list[str]:
    """
    Draw an object multiset whose scene_class is class_id, in random order.

    Boxes and discs appear only when their class bit is set; triangles
    fill the remaining slots of the drawn count.

    Raises:
        DatasetException: If class_id is not in 0..NUM_CLASSES-1
    """

    if not 0 <= class_id < NUM_CLASSES:
        raise DatasetException(f"Scene class must lie in 0..{NUM_CLASSES - 1}, got {class_id}")
    required = [shape for bit, shape in ((1, "box"), (2, "disc")) if class_id & bit]
    allowed = ["triangle", *required]
    if class_id & 4:
        low, high = CROWDED_COUNT, MAX_OBJECTS
    else:
        low, high = max(MIN_OBJECTS, len(required)), CROWDED_COUNT - 1
    count = int(rng.integers(low, high + 1))
    shapes = required + [allowed[int(rng.integers(0, len(allowed)))] for _ in range(count - len(required))]
    return [shapes[index] for index in rng.permutation(count)]


def class_color(class_id: int, rng: np.random.Generator) -> tuple[float, float, float]:
    """
    Saturated RGB color from the hue sector of a scene class.
    """

    hue = ((class_id + rng.uniform(-CLASS_HUE_JITTER, CLASS_HUE_JITTER)) / NUM_CLASSES) % 1.0
    saturation = rng.uniform(*OBJECT_SATURATION_RANGE)
    value = rng.uniform(*OBJECT_VALUE_RANGE)
    return tuple(float(c) for c in colorsys.hsv_to_rgb(hue, saturation, value))


def sample_scene(seed: int) -> SceneSpec:
    """
    Draw a scene from its seed.

    The class is drawn first (uniformly), then an object multiset with
    that shape signature, colored from the class hue sector. Objects are
    placed at 0.15 to 0.45 floor units in front of the agent, within ±35°
    of its heading, and inside the floor square.

    Args:
        seed (int): Scene seed

    Returns:
        SceneSpec: Identical for identical seeds
    """

    rng = make_rng(seed, _STREAM_SCENE)
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    agent_xy = rng.uniform(*AGENT_RANGE, size=2)
    class_id = int(rng.integers(0, NUM_CLASSES))

    objects = []
    for shape in class_shapes(class_id, rng):
        color = class_color(class_id, rng)
        size = float(rng.uniform(*OBJECT_SIZE_RANGE))
        for _ in range(MAX_PLACEMENT_TRIES):
            distance = rng.uniform(*OBJECT_DISTANCE_RANGE)
            angle = heading + rng.uniform(-WEDGE_HALF_ANGLE, WEDGE_HALF_ANGLE)
            position = agent_xy + distance * np.array([math.cos(angle), math.sin(angle)])
            if np.all((position >= FLOOR_MARGIN) & (position <= 1.0 - FLOOR_MARGIN)):
                break
        else:
            # Straight ahead at minimum distance always fits
            position = agent_xy + OBJECT_DISTANCE_RANGE[0] \
                * np.array([math.cos(heading), math.sin(heading)])
        objects.append(SceneObject(
            shape, color, (float(position[0]), float(position[1])), size
        ))

    objects = tuple(objects)
    return SceneSpec(
        seed=seed,
        class_id=scene_class(objects),
        objects=objects,
        agent=Agent((float(agent_xy[0]), float(agent_xy[1])), heading),
    )


# ------------------------
# Rasterization Helpers
# ------------------------

def _pixel_grid(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Pixel-center coordinates in [0,1]: (u columns, v rows).
    """

    centers = (np.arange(resolution) + 0.5) / resolution
    return np.meshgrid(centers, centers)


def _scene_palette(seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Floor base color, backdrop color and value-noise grid of a scene.
    """

    rng = make_rng(seed, _STREAM_FLOOR)
    floor = rng.uniform(*FLOOR_RANGE, size=3)
    backdrop = rng.uniform(*BACKDROP_RANGE, size=3)
    noise = rng.uniform(0.0, 1.0, size=(NOISE_GRID, NOISE_GRID))
    return floor, backdrop, noise


def _floor_color(seed: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Textured floor color at floor coordinates (x, y), shape (..., 3).
    """

    floor, _, noise = _scene_palette(seed)
    coords = np.stack([np.clip(y, 0, 1) * (NOISE_GRID - 1), np.clip(x, 0, 1) * (NOISE_GRID - 1)])
    value = ndimage.map_coordinates(noise, coords.reshape(2, -1), order=1, mode="nearest")
    shade = 0.7 + 0.3 * value.reshape(x.shape)
    return shade[..., None] * floor


def _footprint(shape: str, dx: np.ndarray, dy: np.ndarray, size: float) -> np.ndarray:
    """
    Top-view footprint; the triangle apex points to -y.
    """

    if shape == "box":
        return (np.abs(dx) <= size) & (np.abs(dy) <= size)
    if shape == "disc":
        return dx * dx + dy * dy <= size * size
    return (dy >= -size) & (dy <= size) & (np.abs(dx) <= (dy + size) / 2)


def _billboard(shape: str, u: np.ndarray, v: np.ndarray, center_u: float, base_v: float, half_width: float) -> np.ndarray:
    """
    Upright square silhouette standing on screen row base_v.
    """

    height = 2.0 * half_width
    top_v = base_v - height
    du = u - center_u
    if shape == "box":
        return (np.abs(du) <= half_width) & (v >= top_v) & (v <= base_v)
    if shape == "disc":
        dv = v - (base_v - half_width)
        return du * du + dv * dv <= half_width * half_width
    return (v >= top_v) & (v <= base_v) & (np.abs(du) <= half_width * (v - top_v) / height)


def _paint(image: np.ndarray, seg: np.ndarray, mask: np.ndarray, obj: SceneObject) -> None:
    image[mask] = obj.color
    seg[mask] = SEG_CLASS_OF_SHAPE[obj.shape]


def _to_view(image: np.ndarray) -> np.ndarray:
    """
    (H,W,3) in [0,1] -> (3,H,W) float32 in [-1,1].
    """

    return (np.transpose(image, (2, 0, 1)) * 2.0 - 1.0).astype(np.float32)


# ------------------------
# Renderers
# ------------------------

def render_exo(scene: SceneSpec, mode: str, resolution: int = DEFAULT_RESOLUTION) -> tuple[np.ndarray, np.ndarray]:
    """
    Render the exocentric view of a scene.

    - top: orthographic overhead view; column ↔ x, row ↔ y.
    - side: oblique view from the y = 0 edge; the floor fills the lower
      half (row v = 1 − 0.5·y) and objects stand as upright silhouettes,
      drawn far to near.

    Args:
        scene (SceneSpec): Scene
        mode (str): "top" or "side"
        resolution (int, optional): Raster side. Defaults to 32.

    Returns:
        tuple[np.ndarray, np.ndarray]: (3,H,W) image in [-1,1] and
            (H,W) uint8 segmentation

    Raises:
        DatasetException: On unknown mode
    """

    u, v = _pixel_grid(resolution)
    seg = np.zeros((resolution, resolution), dtype=np.uint8)

    if mode == "top":
        image = _floor_color(scene.seed, u, v)
        for obj in scene.objects:
            mask = _footprint(obj.shape, u - obj.position[0], v - obj.position[1], obj.size)
            _paint(image, seg, mask, obj)
        return _to_view(image), seg

    if mode == "side":
        _, backdrop, _ = _scene_palette(scene.seed)
        horizon = 1.0 - SIDE_FORESHORTENING
        floor = _floor_color(scene.seed, u, (1.0 - v) / SIDE_FORESHORTENING)
        image = np.where((v >= horizon)[..., None], floor, backdrop)
        for obj in sorted(scene.objects, key=lambda o: -o.position[1]):
            base_v = 1.0 - SIDE_FORESHORTENING * obj.position[1]
            mask = _billboard(obj.shape, u, v, obj.position[0], base_v, obj.size)
            _paint(image, seg, mask, obj)
        return _to_view(image), seg

    raise DatasetException(f"Unknown exocentric view '{mode}', expected 'top' or 'side'")


def render_ego(scene: SceneSpec, resolution: int = DEFAULT_RESOLUTION) -> tuple[np.ndarray, np.ndarray]:
    """
    Render the egocentric view: planar perspective from the agent with a
    90° field of view, camera height 0.08 and horizon at mid-image.

    A point at depth z and lateral offset l maps to column
    u = 0.5 + 0.5·l/z, so on-screen sizes scale with 1/z. Objects at
    depth below the near plane (behind the agent) are not drawn.

    Args:
        scene (SceneSpec): Scene
        resolution (int, optional): Raster side. Defaults to 32.

    Returns:
        tuple[np.ndarray, np.ndarray]: (3,H,W) image in [-1,1] and
            (H,W) uint8 segmentation
    """

    u, v = _pixel_grid(resolution)
    seg = np.zeros((resolution, resolution), dtype=np.uint8)
    _, backdrop, _ = _scene_palette(scene.seed)

    # Rounding after the modulo makes headings θ and θ + 2π identical
    theta = round(scene.agent.heading % (2.0 * math.pi), 9)
    forward = np.array([math.cos(theta), math.sin(theta)])
    lateral = np.array([-math.sin(theta), math.cos(theta)])
    agent = np.array(scene.agent.position)

    below = v > 0.5
    depth = np.where(below, 0.5 * CAMERA_HEIGHT / np.where(below, v - 0.5, 1.0), 0.0)
    offset = (u - 0.5) * 2.0 * depth
    world_x = agent[0] + depth * forward[0] + offset * lateral[0]
    world_y = agent[1] + depth * forward[1] + offset * lateral[1]
    on_floor = below & (world_x >= 0) & (world_x <= 1) & (world_y >= 0) & (world_y <= 1)
    image = np.where(below[..., None], np.array(OUTSIDE_FLOOR_COLOR), backdrop)
    image = np.where(on_floor[..., None], _floor_color(scene.seed, world_x, world_y), image)

    visible = []
    for obj in scene.objects:
        relative = np.array(obj.position) - agent
        z = float(relative @ forward)
        if z > NEAR_PLANE:
            visible.append((z, float(relative @ lateral), obj))
    for z, lat, obj in sorted(visible, key=lambda item: -item[0]):
        center_u = 0.5 + 0.5 * lat / z
        base_v = 0.5 + 0.5 * CAMERA_HEIGHT / z
        mask = _billboard(obj.shape, u, v, center_u, base_v, 0.5 * obj.size / z)
        _paint(image, seg, mask, obj)

    return _to_view(image), seg


def render_pair(seed: int, mode: str = "side2ego", resolution: int = DEFAULT_RESOLUTION) -> ViewPair:
    """
    Sample the scene of a seed and render both views.

    Raises:
        DatasetException: On unknown mode
    """

    if mode not in MODES:
        raise DatasetException(f"Unknown dataset mode '{mode}', expected one of {MODES}")
    scene = sample_scene(seed)
    exo_image, exo_seg = render_exo(scene, EXO_VIEW_OF_MODE[mode], resolution)
    ego_image, ego_seg = render_ego(scene, resolution)
    return ViewPair(exo_image, ego_image, exo_seg, ego_seg, scene.class_id, seed)


# ------------------------
# Augmentation
# ------------------------

def _crop_resize(view: np.ndarray, box: tuple[int, int, int, int], resample: Image.Resampling) -> np.ndarray:
    """
    Crop box (left, top, right, bottom) and resize back to full size.

    view is (C,H,W) float or (H,W) uint8; images go through Pillow "F"
    planes to keep float precision.
    """

    if view.ndim == 2:
        plane = Image.fromarray(view)
        return np.asarray(plane.resize(plane.size, resample, box=box)).copy()
    planes = []
    for channel in view:
        plane = Image.fromarray(channel.astype(np.float32))
        planes.append(np.asarray(plane.resize(plane.size, resample, box=box)))
    return np.stack(planes).astype(view.dtype)


def augment(
    pair: ViewPair,
    rng: np.random.Generator,
    flip_probability: float = FLIP_PROBABILITY,
    crop_fraction: float = CROP_FRACTION,
    jitter: bool = True,
    force_flip: Optional[bool] = None
) -> ViewPair:
    """
    Random horizontal flip and crop-resize of a pair.

    The flip applies to both views and both segmentation maps. Each view
    then gets its own crop of crop_fraction of the side (offsets drawn
    independently per view, shared by the view's image and segmentation)
    resized back with bilinear (images) or nearest (segmentation)
    resampling. The label is preserved.

    Args:
        pair (ViewPair): Input pair
        rng (np.random.Generator): Draws
        flip_probability (float, optional): Defaults to 0.5.
        crop_fraction (float, optional): Crop side over full side; 1 disables
            cropping. Defaults to 7/8.
        jitter (bool, optional): Random crop offsets; centered when False.
            Defaults to True.
        force_flip (Optional[bool], optional): Override the flip draw.
            Defaults to None.

    Returns:
        ViewPair: New pair
    """

    flip = bool(rng.random() < flip_probability) if force_flip is None else force_flip
    views = [pair.exo_image, pair.exo_seg, pair.ego_image, pair.ego_seg]
    if flip:
        views = [np.ascontiguousarray(view[..., ::-1]) for view in views]

    resolution = pair.exo_seg.shape[-1]
    crop = int(round(resolution * crop_fraction))
    if crop < resolution:
        for index in (0, 2):
            if jitter:
                left, top = (int(x) for x in rng.integers(0, resolution - crop + 1, size=2))
            else:
                left = top = (resolution - crop) // 2
            box = (left, top, left + crop, top + crop)
            views[index] = _crop_resize(views[index], box, Image.Resampling.BILINEAR)
            views[index + 1] = _crop_resize(views[index + 1], box, Image.Resampling.NEAREST)

    return ViewPair(views[0], views[2], views[1], views[3], pair.class_id, pair.scene_seed)


# ------------------------
# Batching
# ------------------------

def stack_batch(pairs: list[ViewPair]) -> ViewBatch:
    return ViewBatch(
        exo=np.stack([p.exo_image for p in pairs]),
        ego=np.stack([p.ego_image for p in pairs]),
        exo_seg=np.stack([p.exo_seg for p in pairs]),
        ego_seg=np.stack([p.ego_seg for p in pairs]),
        class_ids=np.array([p.class_id for p in pairs], dtype=np.int64),
        seeds=np.array([p.scene_seed for p in pairs], dtype=np.int64),
    )


# ------------------------
# Dataset Files
# ------------------------

def quantize(view: np.ndarray) -> np.ndarray:
    """
    [-1,1] float (3,H,W) -> (H,W,3) uint8 via round((x+1)/2·255).
    """

    values = np.round((np.clip(view, -1.0, 1.0) + 1.0) / 2.0 * 255.0)
    return np.transpose(values, (1, 2, 0)).astype(np.uint8)


def dequantize(raster: np.ndarray) -> np.ndarray:
    """
    (H,W,3) uint8 -> (3,H,W) float32 in [-1,1].
    """

    return (np.transpose(raster, (2, 0, 1)).astype(np.float32) / 255.0 * 2.0 - 1.0).astype(np.float32)


def build_manifest(
    mode: str = "side2ego",
    resolution: int = DEFAULT_RESOLUTION,
    train_size: int = DEFAULT_TRAIN_SIZE,
    test_size: int = DEFAULT_TEST_SIZE,
    seed: int = 0
) -> DatasetManifest:
    """
    Plan a dataset: record seeds, file names and class ids.

    Train records use seeds seed·10⁶ + i, test records continue after
    them, so the two splits never share a scene.

    Raises:
        DatasetException: On unknown mode, bad sizes or resolution
    """

    if mode not in MODES:
        raise DatasetException(f"Unknown dataset mode '{mode}', expected one of {MODES}")
    if resolution < 8:
        raise DatasetException(f"Resolution must be >= 8, got {resolution}")
    if train_size < 0 or test_size < 0 or train_size + test_size < 1 \
        or train_size + test_size >= SEED_BLOCK:
        raise DatasetException(f"Invalid split sizes {train_size}/{test_size}")

    records = []
    base = seed * SEED_BLOCK
    for split, start, count in (("train", 0, train_size), ("test", train_size, test_size)):
        for index in range(count):
            scene_seed = base + start + index
            stem = f"{split}/{index:05d}"
            records.append(RecordEntry(
                split=split,
                exo=f"{stem}_exo.png",
                ego=f"{stem}_ego.png",
                exo_seg=f"{stem}_exo_seg.png",
                ego_seg=f"{stem}_ego_seg.png",
                class_id=sample_scene(scene_seed).class_id,
                seed=scene_seed,
            ))
    return DatasetManifest(
        mode=mode, resolution=resolution, seed=seed,
        splits={"train": train_size, "test": test_size}, records=records,
    )


def write_dataset(
    manifest: DatasetManifest,
    directory: Union[str, Path],
    workers: int = 1,
    bar_logger: Any = None
) -> Path:
    """
    Render every manifest record and write PNGs plus manifest.json.

    Rendering may run on a thread pool; files are written in manifest
    order.

    Args:
        manifest (DatasetManifest): Planned dataset
        directory (Union[str, Path]): Output directory (created)
        workers (int, optional): Rendering threads. Defaults to 1.
        bar_logger (Any, optional): proglog logger. Defaults to None.

    Returns:
        Path: The manifest path

    Raises:
        DatasetException: On I/O failure
    """

    directory = Path(directory)
    bar = proglog.default_bar_logger(bar_logger)
    try:
        for split in SPLITS:
            (directory / split).mkdir(parents=True, exist_ok=True)

        def render(record: RecordEntry) -> ViewPair:
            return render_pair(record.seed, manifest.mode, manifest.resolution)

        with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            pairs = executor.map(render, manifest.records)
            for record in bar.iter_bar(record=manifest.records):
                pair = next(pairs)
                Image.fromarray(quantize(pair.exo_image)).save(directory / record.exo)
                Image.fromarray(quantize(pair.ego_image)).save(directory / record.ego)
                Image.fromarray(pair.exo_seg).save(directory / record.exo_seg)
                Image.fromarray(pair.ego_seg).save(directory / record.ego_seg)

        manifest_path = directory / MANIFEST_NAME
        manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2))
    except OSError as exc:
        raise DatasetException(f"Cannot write dataset to '{directory}': {exc}") from exc

    logger.info(
        f"Wrote {manifest.mode} dataset to '{directory}': "
        + ", ".join(f"{count} {split}" for split, count in manifest.splits.items())
        + f" records at {manifest.resolution}x{manifest.resolution}"
    )
    return manifest_path


def read_manifest(directory: Union[str, Path]) -> DatasetManifest:
    """
    Load and check manifest.json; every referenced file must exist.

    Raises:
        DatasetException: On missing/malformed manifest or missing file,
            naming the record
    """

    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.is_file():
        raise DatasetException(f"No {MANIFEST_NAME} in dataset directory '{directory}'")
    try:
        manifest = DatasetManifest.from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise DatasetException(f"Corrupt manifest '{path}': {exc}") from exc

    for split in SPLITS:
        declared = manifest.splits.get(split)
        if declared is not None and declared != len(manifest.split_records(split)):
            raise DatasetException(
                f"Manifest declares {declared} {split} records but lists "
                + f"{len(manifest.split_records(split))}"
            )
    for index, record in enumerate(manifest.records):
        for name in (record.exo, record.ego, record.exo_seg, record.ego_seg):
            if not (directory / name).is_file():
                raise DatasetException(
                    f"Record {index} (seed {record.seed}): missing file '{name}'"
                )
    return manifest


def _load_raster(path: Path, mode: str, resolution: int) -> np.ndarray:
    try:
        with Image.open(path) as image:
            if image.mode != mode or image.size != (resolution, resolution):
                raise DatasetException(
                    f"'{path.name}' is {image.mode} {image.size[0]}x{image.size[1]}, "
                    + f"manifest expects {mode} {resolution}x{resolution}"
                )
            return np.asarray(image).copy()
    except (UnidentifiedImageError, OSError) as exc:
        raise DatasetException(f"Corrupt image '{path}': {exc}") from exc


def load_record(directory: Union[str, Path], manifest: DatasetManifest, record: RecordEntry) -> ViewPair:
    directory = Path(directory)
    resolution = manifest.resolution
    return ViewPair(
        exo_image=dequantize(_load_raster(directory / record.exo, "RGB", resolution)),
        ego_image=dequantize(_load_raster(directory / record.ego, "RGB", resolution)),
        exo_seg=_load_raster(directory / record.exo_seg, "L", resolution),
        ego_seg=_load_raster(directory / record.ego_seg, "L", resolution),
        class_id=record.class_id,
        scene_seed=record.seed,
    )


def read_dataset(directory: Union[str, Path], split: Optional[str] = None) -> tuple[DatasetManifest, Iterator[ViewPair]]:
    """
    Open a dataset directory.

    The manifest and file presence are checked immediately; images are
    decoded lazily by the returned iterator, in manifest order.

    Args:
        directory (Union[str, Path]): Dataset directory
        split (Optional[str], optional): "train", "test" or None for all.
            Defaults to None.

    Returns:
        tuple[DatasetManifest, Iterator[ViewPair]]: Manifest and records

    Raises:
        DatasetException: On missing/corrupt files or manifest mismatch
    """

    manifest = read_manifest(directory)
    records = manifest.records if split is None else manifest.split_records(split)

    def iterate() -> Iterator[ViewPair]:
        for record in records:
            yield load_record(directory, manifest, record)

    return manifest, iterate()


def load_split(directory: Union[str, Path], split: str) -> tuple[DatasetManifest, list[ViewPair]]:
    """
    Eagerly load one split.

    Raises:
        DatasetException: On unknown split, or as read_dataset
    """

    if split not in SPLITS:
        raise DatasetException(f"Unknown split '{split}', expected one of {SPLITS}")
    manifest, records = read_dataset(directory, split)
    return manifest, list(records)
