"""
From utterance to scored proposals
==================================

Walks one compiled item through the untrained model: speech and text branch
score distributions, convex fusion at several weights, box selection, and
the loss components over a small batch.
"""

import numpy as np

from speechground import (
    GroundingModel,
    TrainConfig,
    compile_dataset,
    fuse_scores,
    generate_dataset,
    select_box,
)

cfg = TrainConfig(dim=32, n_heads=2, n_points=512, proposals_m=12, error_rate=0.3)
ds = generate_dataset(n_scenes=3, utterances_per_scene=4, seed=2)
split = compile_dataset(ds, cfg)
model = GroundingModel(cfg)

# Compilation freezes everything the model consumes: the rendered speech of
# the true tokens, the corrupted transcription, the shared scene cloud, and
# the proposal set with its soft-label target.
item = split.items[0]
print(f"mel {item.mel_bins.shape}, {len(item.token_ids)} text tokens, "
      f"{len(item.proposals.boxes)} proposals")
print(f"label argmax {int(np.argmax(item.labels))}, "
      f"IoU of that proposal {item.iou_vs_gt[np.argmax(item.labels)]:.3f}")

# Both branches score every proposal; speech hears the true words while text
# reads the possibly-corrupted transcription.
ss, st, _, _ = model.branch_scores(item, split.clouds)
np.set_printoptions(precision=3, suppress=True)
print("\nspeech scores:", ss)
print("text scores:  ", st)

# Fusion is a convex mix; beta=0 trusts text alone, beta=1 speech alone.
for beta in (0.0, 0.5, 1.0):
    fused = fuse_scores(ss, st, beta)
    idx, box = select_box(fused, item.proposals)
    print(f"beta={beta:.1f}: pick proposal {idx}, IoU vs truth {item.iou_vs_gt[idx]:.3f}")

# The training loss mixes three weighted terms: reference CE on both
# branches, class CE on the pooled speech vector, and the symmetrized
# InfoNCE over speech, text, and object features. The parts printed below
# are the raw term values; the total applies the configured weights.
loss, parts = model.batch_loss(split.items[:8], split.clouds, with_grad=False)
print(f"\nuntrained batch loss {loss:.3f} "
      f"(cls {parts['cls']:.3f}, ref {parts['ref']:.3f}, con {parts['con']:.3f})")
ln = np.log
print(f"chance levels: cls ln8={ln(8):.3f}, ref 2*ln12={2 * ln(12):.3f}")
