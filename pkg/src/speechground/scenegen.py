"""Deterministic synthetic 3D scenes, referring utterances, and proposal boxes.

A scene is a room with floor-standing axis-aligned boxes drawn from a small
class catalog.  Rejection sampling keeps objects nearly disjoint, so that one
box per object is an unambiguous grounding target.  Utterances follow the
template "the <attribute> <class> [<relation> the <anchor class>]" over the
closed vocabulary.  Proposal sets are ground-truth boxes plus jitter plus
random distractors, mimicking a detector of controllable quality.

All randomness flows through ``np.random.default_rng([stream, seed])`` so every
artifact is a pure function of its seed and configuration.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .phonetics import ATTRIBUTE_WORDS, CLASS_WORDS

_SCENE_STREAM = 21
_UTTER_STREAM = 22
_POINT_STREAM = 23
_PROP_STREAM = 24

# Pseudo-color palette per attribute; point colors get small Gaussian noise.
ATTRIBUTE_RGB = {
    "grey": (0.50, 0.50, 0.50),
    "white": (0.92, 0.92, 0.90),
    "brown": (0.45, 0.30, 0.15),
    "black": (0.08, 0.08, 0.08),
    "red": (0.80, 0.12, 0.10),
    "blue": (0.15, 0.25, 0.80),
}
FLOOR_RGB = (0.35, 0.28, 0.22)
COLOR_NOISE = 0.05
FLOOR_FRACTION = 0.2

# Per-class size ranges (min_xyz, max_xyz) in meters, desk-scale furniture.
CLASS_SIZE_RANGES = {
    "chair": ((0.45, 0.45, 0.80), (0.60, 0.60, 1.00)),
    "table": ((1.20, 0.70, 0.68), (1.80, 1.00, 0.80)),
    "bed": ((1.90, 1.40, 0.45), (2.10, 1.80, 0.65)),
    "sofa": ((1.60, 0.80, 0.70), (2.20, 1.00, 0.90)),
    "desk": ((1.10, 0.55, 0.70), (1.50, 0.75, 0.78)),
    "lamp": ((0.25, 0.25, 1.20), (0.40, 0.40, 1.70)),
    "shelf": ((0.80, 0.25, 1.50), (1.20, 0.40, 2.00)),
    "door": ((0.85, 0.08, 1.90), (1.00, 0.15, 2.05)),
}


class PlacementError(RuntimeError):
    """Raised when rejection sampling cannot place an object."""


class DatasetFormatError(ValueError):
    """Raised when a dataset file fails to parse or validate."""


@dataclass(eq=False)
class Box3D:
    """Axis-aligned box given by center and positive size, in meters."""

    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.size = np.asarray(self.size, dtype=np.float64)
        if self.center.shape != (3,) or self.size.shape != (3,):
            raise ValueError("center and size must be 3-vectors")
        if not np.all(self.size > 0):
            raise ValueError(f"box size must be positive, got {self.size}")

    def lo(self) -> np.ndarray:
        return self.center - self.size / 2.0

    def hi(self) -> np.ndarray:
        return self.center + self.size / 2.0

    def volume(self) -> float:
        return float(np.prod(self.size))

    def __eq__(self, other):
        return (
            isinstance(other, Box3D)
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.size, other.size)
        )


@dataclass
class SceneObject:
    instance_id: int
    box: Box3D
    class_id: int
    attribute_id: int


@dataclass(eq=False)
class Scene:
    scene_id: str
    objects: list[SceneObject]
    room_extent: np.ndarray

    def __post_init__(self):
        self.room_extent = np.asarray(self.room_extent, dtype=np.float64)

    def object_by_instance(self, instance_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.instance_id == instance_id:
                return obj
        raise ValueError(f"no instance {instance_id} in {self.scene_id}")

    def __eq__(self, other):
        return (
            isinstance(other, Scene)
            and self.scene_id == other.scene_id
            and self.objects == other.objects
            and np.array_equal(self.room_extent, other.room_extent)
        )


@dataclass
class Utterance:
    scene_id: str
    target_instance_id: int
    tokens: list[str]
    subset_tag: str
    corruption_seed: int


@dataclass
class PointCloud:
    """Points as (n, 3 + 3) rows: xyz position then rgb pseudo-color."""

    points: np.ndarray


@dataclass(eq=False)
class ProposalSet:
    """Candidate boxes; source_instance holds the object id or -1 (random)."""

    boxes: list[Box3D]
    source_instance: np.ndarray

    def __post_init__(self):
        self.source_instance = np.asarray(self.source_instance, dtype=np.int64)

    def __eq__(self, other):
        return (
            isinstance(other, ProposalSet)
            and self.boxes == other.boxes
            and np.array_equal(self.source_instance, other.source_instance)
        )


@dataclass
class Dataset:
    scenes: list[Scene]
    utterances: list[Utterance]

    def scenes_by_id(self) -> dict[str, Scene]:
        return {s.scene_id: s for s in self.scenes}

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.scenes == other.scenes
            and self.utterances == other.utterances
        )


@dataclass(frozen=True)
class GenerationConfig:
    room_extent: tuple = (6.0, 6.0, 3.0)
    n_objects_range: tuple = (4, 9)
    classes: tuple = CLASS_WORDS
    attributes: tuple = ATTRIBUTE_WORDS
    max_place_attempts: int = 150
    overlap_iou_max: float = 0.05
    relation_prob: float = 0.6


def iou(a: Box3D, b: Box3D) -> float:
    """Intersection over union of two axis-aligned boxes."""
    lo = np.maximum(a.lo(), b.lo())
    hi = np.minimum(a.hi(), b.hi())
    edges = hi - lo
    if np.any(edges <= 0):
        return 0.0
    inter = float(np.prod(edges))
    union = a.volume() + b.volume() - inter
    return inter / union


def points_in_box(points: np.ndarray, box: Box3D) -> np.ndarray:
    """Boolean mask of rows whose xyz lies inside the box (inclusive)."""
    xyz = points[:, :3]
    return np.all((xyz >= box.lo()) & (xyz <= box.hi()), axis=1)


def generate_scene(seed: int, cfg: GenerationConfig = GenerationConfig()) -> Scene:
    """Sample a scene; identical (seed, cfg) give identical scenes."""
    rng = np.random.default_rng([_SCENE_STREAM, seed])
    room = np.asarray(cfg.room_extent, dtype=np.float64)
    lo_n, hi_n = cfg.n_objects_range
    n = int(rng.integers(lo_n, hi_n + 1))
    objects: list[SceneObject] = []
    for i in range(n):
        class_id = int(rng.integers(len(cfg.classes)))
        attribute_id = int(rng.integers(len(cfg.attributes)))
        smin, smax = CLASS_SIZE_RANGES[cfg.classes[class_id]]
        placed = False
        for _ in range(cfg.max_place_attempts):
            size = rng.uniform(smin, smax)
            if rng.random() < 0.5:
                size = size[[1, 0, 2]]
            if np.any(size >= room):
                continue
            cx = rng.uniform(size[0] / 2, room[0] - size[0] / 2)
            cy = rng.uniform(size[1] / 2, room[1] - size[1] / 2)
            box = Box3D(center=(cx, cy, size[2] / 2), size=size)
            if all(iou(box, o.box) <= cfg.overlap_iou_max for o in objects):
                objects.append(
                    SceneObject(instance_id=i, box=box, class_id=class_id, attribute_id=attribute_id)
                )
                placed = True
                break
        if not placed:
            raise PlacementError(
                f"could not place object {i} ({cfg.classes[class_id]}) "
                f"after {cfg.max_place_attempts} attempts"
            )
    return Scene(scene_id=f"scene_{seed:06d}", objects=objects, room_extent=room)


def subset_label(scene: Scene, target_class_id: int) -> str:
    """"unique" if the class occurs once in the scene, else "multiple"."""
    count = sum(1 for o in scene.objects if o.class_id == target_class_id)
    if count == 0:
        raise ValueError(f"class {target_class_id} not present in {scene.scene_id}")
    return "unique" if count == 1 else "multiple"


def generate_utterance(
    scene: Scene,
    target_instance_id: int,
    seed: int,
    cfg: GenerationConfig = GenerationConfig(),
) -> Utterance:
    """Reference the target by attribute and class, optionally with a relation."""
    rng = np.random.default_rng([_UTTER_STREAM, seed])
    target = scene.object_by_instance(target_instance_id)
    tokens = ["the", cfg.attributes[target.attribute_id], cfg.classes[target.class_id]]
    others = [o for o in scene.objects if o.instance_id != target_instance_id]
    if others and rng.random() < cfg.relation_prob:
        anchor = min(
            others,
            key=lambda o: (
                float(np.linalg.norm((o.box.center - target.box.center)[:2])),
                o.instance_id,
            ),
        )
        d = target.box.center - anchor.box.center
        if math.hypot(d[0], d[1]) < 1.0:
            rel = "near" if rng.random() < 0.5 else "beside"
        elif abs(d[0]) >= abs(d[1]):
            rel = "right" if d[0] > 0 else "left"
        else:
            rel = "behind" if d[1] > 0 else "front"
        tokens += [rel, "the", cfg.classes[anchor.class_id]]
    return Utterance(
        scene_id=scene.scene_id,
        target_instance_id=target_instance_id,
        tokens=tokens,
        subset_tag=subset_label(scene, target.class_id),
        corruption_seed=int(rng.integers(1 << 31)),
    )


def sample_points(scene: Scene, n: int, seed: int) -> PointCloud:
    """Sample n colored points: objects weighted by volume, rest on the floor."""
    if n <= 0:
        raise ValueError("point count must be positive")
    rng = np.random.default_rng([_POINT_STREAM, seed])
    n_floor = int(round(n * FLOOR_FRACTION))
    n_obj_total = n - n_floor
    vols = np.array([o.box.volume() for o in scene.objects])
    frac = vols / vols.sum() * n_obj_total
    counts = np.floor(frac).astype(int)
    remainder = n_obj_total - counts.sum()
    order = np.argsort(-(frac - counts), kind="stable")
    counts[order[:remainder]] += 1
    attrs = tuple(ATTRIBUTE_RGB)
    chunks = []
    for obj, cnt in zip(scene.objects, counts):
        if cnt == 0:
            continue
        xyz = rng.uniform(obj.box.lo(), obj.box.hi(), size=(cnt, 3))
        rgb = np.array(ATTRIBUTE_RGB[attrs[obj.attribute_id]])
        colors = rgb + rng.standard_normal((cnt, 3)) * COLOR_NOISE
        chunks.append(np.hstack([xyz, colors]))
    if n_floor > 0:
        xy = rng.uniform(0, scene.room_extent[:2], size=(n_floor, 2))
        xyz = np.hstack([xy, np.zeros((n_floor, 1))])
        colors = np.array(FLOOR_RGB) + rng.standard_normal((n_floor, 3)) * COLOR_NOISE
        chunks.append(np.hstack([xyz, colors]))
    return PointCloud(points=np.vstack(chunks))


def propose_boxes(
    scene: Scene,
    target_instance_id: int,
    m: int,
    jitter: float,
    seed: int,
) -> ProposalSet:
    """Ground-truth boxes with jitter plus random distractors, m total.

    The target proposal is resampled until it keeps IoU >= 0.5 with the true
    box, so the set always contains a winnable candidate.
    """
    if m < len(scene.objects):
        raise ValueError(f"m={m} smaller than object count {len(scene.objects)}")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    target = scene.object_by_instance(target_instance_id)
    rng = np.random.default_rng([_PROP_STREAM, seed])
    room = scene.room_extent

    def jittered(box: Box3D) -> Box3D:
        center = box.center + rng.uniform(-jitter, jitter, 3)
        size = np.maximum(box.size + rng.uniform(-jitter, jitter, 3), 0.05)
        return Box3D(center=center, size=size)

    boxes: list[Box3D] = []
    source: list[int] = []
    for obj in scene.objects:
        if obj.instance_id == target_instance_id:
            cand = jittered(obj.box)
            for _ in range(1000):
                if iou(cand, obj.box) >= 0.5:
                    break
                cand = jittered(obj.box)
            else:
                cand = Box3D(center=obj.box.center.copy(), size=obj.box.size.copy())
            boxes.append(cand)
        else:
            boxes.append(jittered(obj.box))
        source.append(obj.instance_id)
    for _ in range(m - len(scene.objects)):
        size = rng.uniform(0.25, 1.4, 3)
        center = rng.uniform(size / 2, room - size / 2)
        boxes.append(Box3D(center=center, size=size))
        source.append(-1)
    assert iou(boxes[source.index(target_instance_id)], target.box) >= 0.5
    return ProposalSet(boxes=boxes, source_instance=np.array(source))


def _scene_to_json(scene: Scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "room_extent": list(scene.room_extent),
        "objects": [
            {
                "instance_id": o.instance_id,
                "class_id": o.class_id,
                "attribute_id": o.attribute_id,
                "center": list(o.box.center),
                "size": list(o.box.size),
            }
            for o in scene.objects
        ],
    }


def _scene_from_json(rec: dict) -> Scene:
    objects = [
        SceneObject(
            instance_id=int(o["instance_id"]),
            box=Box3D(center=o["center"], size=o["size"]),
            class_id=int(o["class_id"]),
            attribute_id=int(o["attribute_id"]),
        )
        for o in rec["objects"]
    ]
    return Scene(scene_id=rec["scene_id"], objects=objects, room_extent=rec["room_extent"])


def save_dataset(scenes: list[Scene], utterances: list[Utterance], path) -> None:
    """Write scenes.jsonl and utterances.jsonl under the given directory."""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "scenes.jsonl"), "w") as fh:
        for scene in scenes:
            fh.write(json.dumps(_scene_to_json(scene), separators=(",", ":")) + "\n")
    with open(os.path.join(path, "utterances.jsonl"), "w") as fh:
        for utt in utterances:
            rec = {
                "scene_id": utt.scene_id,
                "target_instance_id": utt.target_instance_id,
                "tokens": utt.tokens,
                "subset_tag": utt.subset_tag,
                "corruption_seed": utt.corruption_seed,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_dataset(path) -> Dataset:
    """Read a dataset directory; malformed lines raise DatasetFormatError."""
    scenes: list[Scene] = []
    utterances: list[Utterance] = []
    scenes_file = os.path.join(path, "scenes.jsonl")
    utts_file = os.path.join(path, "utterances.jsonl")
    for fname, sink, parse in (
        (scenes_file, scenes, _scene_from_json),
        (
            utts_file,
            utterances,
            lambda rec: Utterance(
                scene_id=rec["scene_id"],
                target_instance_id=int(rec["target_instance_id"]),
                tokens=list(rec["tokens"]),
                subset_tag=rec["subset_tag"],
                corruption_seed=int(rec["corruption_seed"]),
            ),
        ),
    ):
        with open(fname) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    sink.append(parse(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise DatasetFormatError(f"{fname}:{lineno}: {exc}") from exc
    seen = {s.scene_id for s in scenes}
    for i, utt in enumerate(utterances, 1):
        if utt.scene_id not in seen:
            raise DatasetFormatError(f"{utts_file}:{i}: unknown scene_id {utt.scene_id!r}")
    return Dataset(scenes=scenes, utterances=utterances)


def generate_dataset(
    n_scenes: int,
    utterances_per_scene: int,
    seed: int,
    cfg: GenerationConfig = GenerationConfig(),
) -> Dataset:
    """Generate scenes and a fixed number of utterances per scene.

    Scene seeds are derived from the dataset seed so different dataset seeds
    give disjoint scene streams; targets cycle over scene objects.
    """
    if n_scenes <= 0 or utterances_per_scene <= 0:
        raise ValueError("scene and utterance counts must be positive")
    rng = np.random.default_rng([_SCENE_STREAM, seed, 0])
    base = int(rng.integers(1 << 30))
    scenes = []
    utterances = []
    for i in range(n_scenes):
        scene = generate_scene(base + i, cfg)
        scenes.append(scene)
        for j in range(utterances_per_scene):
            target = scene.objects[j % len(scene.objects)].instance_id
            utterances.append(
                generate_utterance(scene, target, seed=base + i * 1000 + j, cfg=cfg)
            )
    return Dataset(scenes=scenes, utterances=utterances)
