"""
Phoneme lexicon, confusion weights, and transcription errors
============================================================

Shows how word-level substitution errors are drawn: phonetic edit distance
over a small lexicon, exponential confusion weights, then corruption of a
referring utterance at a chosen error rate.
"""

import collections

import numpy as np

from speechground import (
    corrupt_transcription,
    g2p,
    load_confusion_table,
    phonetic_distance,
    vocabulary,
)

# Every vocabulary word maps to a phoneme string.
for word in ("the", "grey", "grain", "white", "wide", "bed", "bat"):
    print(f"{word:6s} -> {' '.join(g2p(word))}")

# Distance is length-normalized phoneme edit distance, so homophones sit at
# exactly zero and short words move in big steps.
pairs = [("grey", "grain"), ("white", "wide"), ("bed", "bat"), ("blue", "blew"), ("bed", "door")]
for a, b in pairs:
    print(f"d({a}, {b}) = {phonetic_distance(a, b):.4f}")

# The shipped confusion table keeps neighbors within distance 0.7 and weights
# them by exp(-4 d); nearest neighbors dominate.
table = load_confusion_table()
print(f"\nconfusion table: {len(table.entries)} source words of {len(vocabulary())}")
for src in ("grey", "white", "bed"):
    cands = table.entries[src]
    shown = ", ".join(f"{w} ({wt:.3f})" for w, wt in cands)
    print(f"  {src} -> {shown}")

# Corrupting an utterance flips each confusable word with the error-rate
# probability; function words have no neighbors and never flip.
tokens = ["the", "grey", "chair", "near", "the", "bed"]
print(f"\nclean: {' '.join(tokens)}")
for seed in range(6):
    out = corrupt_transcription(tokens, 0.5, table, seed)
    print(f"  rate 0.5, seed {seed}: {' '.join(out)}")

# Over many draws the flip frequency tracks the requested rate and the
# replacement distribution follows the weights.
counts = collections.Counter()
n = 4000
for seed in range(n):
    out = corrupt_transcription(["the", "grey", "chair"], 0.3, table, seed)
    counts[out[1]] += 1
flipped = 1.0 - counts["grey"] / n
print(f"\nobserved flip rate for 'grey' at 0.3: {flipped:.3f}")
weights = dict(table.entries["grey"])
total = sum(weights.values())
for word, count in counts.most_common():
    if word == "grey":
        continue
    expect = 0.3 * weights[word] / total
    print(f"  -> {word}: observed {count / n:.3f}, expected {expect:.3f}")
