"""Speech, text, and visual encoders producing a shared feature width.

The speech path stacks groups of four mel frames, projects them, and refines
the resulting sequence with self-attention over phonetic content; a max pool
over refined frames gives one utterance-level vector for classification and
alignment.  The text path is embeddings plus self-attention with a mean
sentence vector.  The visual path projects colored points, pools them per
proposal box, and keeps the target object feature as an anchor for alignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .phonetics import MelSpectrogram, N_MELS
from .scenegen import Box3D, PointCloud, ProposalSet, points_in_box

FRAME_STACK = 4


@dataclass
class SpeechFeatures:
    """Per-frame speech features, shape (n_frames, dim)."""

    frames: np.ndarray


@dataclass
class GlobalSpeechFeature:
    """Pooled utterance feature (dim,) and its copy stacked to (m, dim)."""

    vector: np.ndarray
    stacked: np.ndarray


@dataclass
class ClassScores:
    """Class probabilities for an utterance target, shape (n_classes,)."""

    probs: np.ndarray
    target: np.ndarray | None = None


@dataclass
class TextFeatures:
    """Per-token features (n_tokens, dim) and mean sentence vector (dim,)."""

    token_feats: np.ndarray
    sentence: np.ndarray


@dataclass
class VisualFeatures:
    """Per-proposal features (m, dim) and the target object anchor (dim,)."""

    proposal_feats: np.ndarray
    object_anchor: np.ndarray


def stack_frames(bins: np.ndarray) -> np.ndarray:
    """Group mel frames (n_mels, L) into rows of four, zero-padding the tail.

    Output shape is (ceil(L / 4), 4 * n_mels).
    """
    n_mels, length = bins.shape
    n_groups = -(-length // FRAME_STACK)
    padded = np.zeros((n_groups * FRAME_STACK, n_mels))
    padded[:length] = bins.T
    return padded.reshape(n_groups, FRAME_STACK * n_mels)


class SpeechFrontEnd:
    """Linear projection of stacked mel frames to the model width."""

    def __init__(self, store, dim, rng):
        self.proj = nn.Linear(store, "frontend.proj", FRAME_STACK * N_MELS, dim, rng)

    def forward(self, stacked: np.ndarray):
        return self.proj.forward(stacked), stacked

    def backward(self, cache, dout):
        self.proj.backward(cache, dout)


class RefineBlock:
    """Residual self-attention over speech frames with positional encoding."""

    def __init__(self, store, dim, n_heads, rng):
        self.dim = dim
        self.lin = nn.Linear(store, "refine.lin", dim, dim, rng)
        self.attn = nn.MultiHeadAttention(store, "refine.attn", dim, n_heads, rng)

    def forward(self, frames: np.ndarray):
        h = self.lin.forward(frames) + nn.sinusoid_positions(frames.shape[0], self.dim)
        a, attn_cache = self.attn.forward(h, h)
        return h + a, (frames, attn_cache)

    def backward(self, cache, dout):
        frames, attn_cache = cache
        dq, dkv = self.attn.backward(attn_cache, dout)
        return self.lin.backward(frames, dout + dq + dkv)


class ClassifierHead:
    """Softmax classifier over the pooled speech feature."""

    def __init__(self, store, dim, n_classes, rng):
        self.lin = nn.Linear(store, "cls_head", dim, n_classes, rng)

    def forward(self, vector: np.ndarray):
        probs = nn.softmax(self.lin.forward(vector[None, :]))[0]
        return probs, (vector, probs)

    def backward(self, cache, dprobs):
        vector, probs = cache
        dlogits = nn.softmax_vjp(probs[None, :], dprobs[None, :])
        return self.lin.backward(vector[None, :], dlogits)[0]


class TextEncoder:
    """Token embeddings with residual self-attention; OOV tokens are errors."""

    def __init__(self, store, dim, n_heads, vocab, rng):
        self.store = store
        self.dim = dim
        self.vocab_index = {w: i for i, w in enumerate(vocab)}
        store.add("text.emb", rng.standard_normal((len(vocab), dim)) / np.sqrt(dim))
        self.attn = nn.MultiHeadAttention(store, "text.attn", dim, n_heads, rng)

    def token_ids(self, tokens: list[str]) -> np.ndarray:
        try:
            return np.array([self.vocab_index[t] for t in tokens], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"token outside vocabulary: {exc.args[0]!r}") from exc

    def forward(self, ids: np.ndarray):
        if ids.size == 0:
            raise ValueError("empty token sequence")
        x = self.store.params["text.emb"][ids] + nn.sinusoid_positions(ids.size, self.dim)
        a, attn_cache = self.attn.forward(x, x)
        out = x + a
        return out, out.mean(axis=0), (ids, attn_cache)

    def backward(self, cache, dtokens, dsentence):
        ids, attn_cache = cache
        dout = dtokens + dsentence[None, :] / ids.size
        dq, dkv = self.attn.backward(attn_cache, dout)
        dx = dout + dq + dkv
        np.add.at(self.store.grads["text.emb"], ids, dx)


class VisualEncoder:
    """Pointwise projection with tanh, max-pooled inside each box."""

    def __init__(self, store, dim, rng, in_dim=6):
        self.store = store
        self.dim = dim
        self.proj = nn.Linear(store, "visual.proj", in_dim, dim, rng)
        store.add("visual.empty", rng.standard_normal(dim) * 0.1)

    def forward(self, cloud: np.ndarray, index_lists: list[np.ndarray]):
        h = np.tanh(self.proj.forward(cloud))
        feats = np.empty((len(index_lists), self.dim))
        arg_rows = []
        for i, idx in enumerate(index_lists):
            if idx.size == 0:
                feats[i] = self.store.params["visual.empty"]
                arg_rows.append(None)
            else:
                sub = h[idx]
                local, arg = nn.maxpool_rows(sub)
                feats[i] = local
                arg_rows.append(idx[arg])
        return feats, (cloud, h, arg_rows)

    def backward(self, cache, dfeats):
        cloud, h, arg_rows = cache
        dh = np.zeros_like(h)
        cols = np.arange(self.dim)
        for i, rows in enumerate(arg_rows):
            if rows is None:
                self.store.grads["visual.empty"] += dfeats[i]
            else:
                np.add.at(dh, (rows, cols), dfeats[i])
        self.proj.backward(cloud, dh * (1.0 - h * h))


def box_point_indices(cloud: PointCloud, boxes: list[Box3D]) -> list[np.ndarray]:
    """Index arrays of cloud rows falling inside each box."""
    return [np.flatnonzero(points_in_box(cloud.points, b)) for b in boxes]


def speech_frontend(mel: MelSpectrogram, frontend: SpeechFrontEnd) -> SpeechFeatures:
    frames, _ = frontend.forward(stack_frames(mel.bins))
    return SpeechFeatures(frames=frames)


def phonetic_refine(feats: SpeechFeatures, block: RefineBlock) -> SpeechFeatures:
    refined, _ = block.forward(feats.frames)
    return SpeechFeatures(frames=refined)


def pool_and_stack(feats: SpeechFeatures, m: int) -> GlobalSpeechFeature:
    """Max over frames, then the same vector repeated m times."""
    if m <= 0:
        raise ValueError("m must be positive")
    vector, _ = nn.maxpool_rows(feats.frames)
    return GlobalSpeechFeature(vector=vector, stacked=np.tile(vector, (m, 1)))


def classify_speech(feats: GlobalSpeechFeature, head: ClassifierHead) -> ClassScores:
    probs, _ = head.forward(feats.vector)
    return ClassScores(probs=probs)


def encode_text(tokens: list[str], encoder: TextEncoder) -> TextFeatures:
    token_feats, sentence, _ = encoder.forward(encoder.token_ids(tokens))
    return TextFeatures(token_feats=token_feats, sentence=sentence)


def encode_visual(
    cloud: PointCloud,
    proposals: ProposalSet,
    target_box: Box3D,
    encoder: VisualEncoder,
) -> VisualFeatures:
    """Features for every proposal plus the target object anchor.

    The anchor is the feature of the ground-truth target box, the mean over
    the single target in each sample.
    """
    idx = box_point_indices(cloud, proposals.boxes + [target_box])
    feats, _ = encoder.forward(cloud.points, idx)
    return VisualFeatures(proposal_feats=feats[:-1], object_anchor=feats[-1])
