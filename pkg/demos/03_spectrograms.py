"""
Speech rendering and the mel front end
======================================

Renders utterances to log-mel spectrograms from phoneme templates, checks
the frame-count arithmetic of the waveform front end on a pure tone, and
writes both pictures to demos/out/.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from speechground import mel_spectrogram, synth_spectrogram, utterance_phonemes
from speechground.phonetics import FRAME_HOP, FRAME_LEN, SAMPLE_RATE

os.makedirs("demos/out", exist_ok=True)

# Utterances render phoneme by phoneme; each phoneme holds its mel template
# for a few frames with silence gaps between words.
phonemes = utterance_phonemes(["the", "grey", "chair"])
print("phonemes:", " ".join(phonemes))
mel = synth_spectrogram(phonemes, seed=3)
print(f"spectrogram: {mel.bins.shape} (mel bins x frames)")

# Confusable words share most phonemes, so their renderings look alike; an
# unrelated word does not.
grain = synth_spectrogram(utterance_phonemes(["the", "grain", "chair"]), seed=4)
door = synth_spectrogram(utterance_phonemes(["the", "door", "chair"]), seed=5)

fig, axes = plt.subplots(1, 3, figsize=(12, 3), sharey=True)
for ax, (m, title) in zip(
    axes, [(mel, "the grey chair"), (grain, "the grain chair"), (door, "the door chair")]
):
    ax.imshow(m.bins, origin="lower", aspect="auto", cmap="magma")
    ax.set_title(title)
    ax.set_xlabel("frame")
axes[0].set_ylabel("mel bin")
fig.tight_layout()
fig.savefig("demos/out/spectrograms.svg")
plt.close(fig)
print("wrote demos/out/spectrograms.svg")

# The waveform front end frames with a 400-sample window and 160-sample hop:
# L = 1 + floor((len - 400) / 160).
for n in (400, 560, 16000):
    frames = mel_spectrogram(np.zeros(n)).bins.shape[1]
    print(f"len {n:6d} -> {frames} frames (formula {1 + (n - FRAME_LEN) // FRAME_HOP})")

# A pure tone concentrates its energy in one mel bin.
t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
tone = np.sin(2 * np.pi * 440.0 * t)
bins = mel_spectrogram(tone).bins
peak = int(np.argmax(bins.mean(axis=1)))
print(f"440 Hz tone peaks in mel bin {peak}")

fig, ax = plt.subplots(figsize=(6, 3))
ax.plot(bins.mean(axis=1))
ax.axvline(peak, color="r", ls="--", label=f"bin {peak}")
ax.set_xlabel("mel bin")
ax.set_ylabel("mean log energy")
ax.legend()
fig.tight_layout()
fig.savefig("demos/out/tone_profile.svg")
plt.close(fig)
print("wrote demos/out/tone_profile.svg")
