"""Cross-modal matching between proposals and language, and score fusion.

One match block plus score head turns proposal features and a language
sequence (text tokens or refined speech frames) into a probability over
proposals.  By default the same parameters serve both branches, so the two
branches differ only in the language sequence they attend to.  Fused scores
are a convex combination of the speech and text probabilities.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .scenegen import Box3D, ProposalSet


class MatchBlock:
    """Residual cross-attention from proposals into language, then MLP."""

    def __init__(self, store, name, dim, n_heads, rng):
        self.attn = nn.MultiHeadAttention(store, name + ".attn", dim, n_heads, rng)
        self.ffn = nn.FeedForward(store, name + ".ffn", dim, dim, rng)

    def forward(self, prop_feats: np.ndarray, lang_seq: np.ndarray):
        if lang_seq.shape[0] == 0:
            raise ValueError("empty language sequence")
        a_out, attn_cache = self.attn.forward(prop_feats, lang_seq)
        a = prop_feats + a_out
        f_out, ffn_cache = self.ffn.forward(a)
        return a + f_out, (attn_cache, ffn_cache)

    def backward(self, cache, dfused):
        attn_cache, ffn_cache = cache
        da = dfused + self.ffn.backward(ffn_cache, dfused)
        dq, dlang = self.attn.backward(attn_cache, da)
        return da + dq, dlang


class ScoreHead:
    """Two-layer scorer ending in a softmax over proposals."""

    def __init__(self, store, name, dim, rng):
        self.lin1 = nn.Linear(store, name + ".lin1", dim, dim, rng)
        self.lin2 = nn.Linear(store, name + ".lin2", dim, 1, rng)

    def forward(self, fused: np.ndarray):
        a = np.tanh(self.lin1.forward(fused))
        logits = self.lin2.forward(a).ravel()
        probs = nn.softmax(logits)
        return probs, (fused, a, logits, probs)

    def backward(self, cache, dprobs):
        fused, a, _, probs = cache
        dlogits = nn.softmax_vjp(probs, dprobs)
        da = self.lin2.backward(a, dlogits[:, None])
        return self.lin1.backward(fused, da * (1.0 - a * a))


def cross_modal_match(
    prop_feats: np.ndarray,
    lang_seq: np.ndarray,
    block: MatchBlock,
) -> np.ndarray:
    fused, _ = block.forward(prop_feats, lang_seq)
    return fused


def score_proposals(fused: np.ndarray, head: ScoreHead) -> np.ndarray:
    probs, _ = head.forward(fused)
    return probs


def fuse_scores(speech_scores, text_scores, beta: float) -> np.ndarray:
    """beta * speech + (1 - beta) * text, elementwise over proposals."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta out of range: {beta}")
    s = np.asarray(speech_scores, dtype=np.float64)
    t = np.asarray(text_scores, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"score shapes differ: {s.shape} vs {t.shape}")
    return beta * s + (1.0 - beta) * t


def select_box(scores: np.ndarray, proposals: ProposalSet) -> tuple[int, Box3D]:
    """Index and box of the highest score; ties go to the lowest index."""
    scores = np.asarray(scores)
    if scores.shape[0] != len(proposals.boxes):
        raise ValueError("score length does not match proposal count")
    idx = int(np.argmax(scores))
    return idx, proposals.boxes[idx]
