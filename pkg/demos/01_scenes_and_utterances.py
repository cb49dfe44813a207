"""
Scenes, point clouds, and referring utterances
==============================================

Builds one synthetic room, prints its labeled boxes, samples a colored
point cloud, and phrases utterances that refer to each object.
"""

import numpy as np

from speechground import (
    generate_dataset,
    generate_scene,
    generate_utterance,
    iou,
    propose_boxes,
    sample_points,
    save_dataset,
    load_dataset,
)
from speechground.phonetics import ATTRIBUTE_WORDS, CLASS_WORDS

# A scene is a room with floor-standing boxes; each box carries a class and
# an attribute (a color the point cloud will echo).
scene = generate_scene(seed=4)
print(f"scene {scene.scene_id}: room {scene.room_extent}, {len(scene.objects)} objects")
for obj in scene.objects:
    name = f"{ATTRIBUTE_WORDS[obj.attribute_id]} {CLASS_WORDS[obj.class_id]}"
    print(f"  #{obj.instance_id} {name:14s} center={obj.box.center} size={obj.box.size}")

# Boxes never overlap by more than a small IoU.
worst = max(
    iou(a.box, b.box)
    for i, a in enumerate(scene.objects)
    for b in scene.objects[i + 1 :]
)
print(f"worst pairwise IoU: {worst:.4f}")

# Points: 20% on the floor, the rest spread over objects by volume, with the
# object's attribute color plus noise in channels 3:6.
cloud = sample_points(scene, n=2048, seed=0)
print(f"cloud {cloud.points.shape}, {int((cloud.points[:, 2] == 0).sum())} floor points")

# Utterances name the target by attribute and class, sometimes anchored to a
# neighbor by a spatial relation read off the geometry.
for obj in scene.objects[:4]:
    utt = generate_utterance(scene, obj.instance_id, seed=obj.instance_id)
    print(f"  -> {' '.join(utt.tokens)!r}  (subset: {utt.subset_tag})")

# Proposals are jittered copies of every object box plus random distractors;
# the target's own proposal always keeps IoU >= 0.5 so grounding is winnable.
target = scene.objects[0]
props = propose_boxes(scene, target.instance_id, m=16, jitter=0.1, seed=1)
own = int(np.argmax(props.source_instance == target.instance_id))
print(f"16 proposals, target proposal IoU {iou(props.boxes[own], target.box):.3f}")

# Datasets round-trip through JSON lines files, byte for byte.
ds = generate_dataset(n_scenes=3, utterances_per_scene=4, seed=0)
save_dataset(ds.scenes, ds.utterances, "demos/out/tiny_dataset")
back = load_dataset("demos/out/tiny_dataset")
assert back.scenes == ds.scenes and back.utterances == ds.utterances
print(f"saved and reloaded {len(back.scenes)} scenes, {len(back.utterances)} utterances")
