"""Training losses: reference CE, speech classification CE, contrastive.

Reference losses are cross-entropy between proposal score distributions and a
one-hot label at the proposal with highest IoU against the ground-truth box.
The contrastive loss is an InfoNCE over cosine similarities at a fixed
temperature, taken in both directions for each enabled pair among text,
speech, and object features, and averaged over the directional terms with
each term itself a mean over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenegen import Box3D, ProposalSet, iou

LOG_EPS = 1e-12

ALIGNMENT_PAIRS = ("T&S", "S&O", "T&O")


@dataclass
class LossConfig:
    # alignment-dominant balance: the contrastive term carries most of the
    # cross-modal shaping, the classifier term stays mild so the speech
    # features keep their word-level structure instead of collapsing
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta: float = 0.5
    gamma1: float = 3.0
    gamma2: float = 1.0
    gamma3: float = 0.5
    temperature: float = 0.07

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive: {self.temperature}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta out of range: {self.beta}")


def cross_entropy(probs: np.ndarray, target: np.ndarray) -> float:
    """-sum(target * log probs) with the log clamped at LOG_EPS."""
    return float(-np.sum(target * np.log(np.maximum(probs, LOG_EPS))))


def cross_entropy_grad(probs: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient wrt probs; zero where the clamp is active."""
    return np.where(probs > LOG_EPS, -target / np.maximum(probs, LOG_EPS), 0.0)


def cls_loss(scores, target_onehot: np.ndarray) -> float:
    """Cross-entropy of predicted class probabilities against the target."""
    probs = scores.probs if hasattr(scores, "probs") else np.asarray(scores)
    return cross_entropy(probs, target_onehot)


def make_ref_labels(proposals: ProposalSet, gt_box: Box3D) -> np.ndarray:
    """One-hot label at the proposal with maximum IoU against the target."""
    ious = np.array([iou(b, gt_box) for b in proposals.boxes])
    labels = np.zeros(len(proposals.boxes))
    labels[int(np.argmax(ious))] = 1.0
    return labels


def ref_loss(
    speech_scores,
    text_scores,
    labels: np.ndarray,
    alpha1: float = 1.0,
    alpha2: float = 1.0,
) -> float:
    """alpha1 * CE(speech branch) + alpha2 * CE(text branch).

    The speech side may be None when score fusion is disabled; its term is
    then zero.
    """
    total = 0.0
    if speech_scores is not None:
        total += alpha1 * cross_entropy(np.asarray(speech_scores), labels)
    total += alpha2 * cross_entropy(np.asarray(text_scores), labels)
    return float(total)


def _normalize_rows(x: np.ndarray):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm row in contrastive features")
    return x / norms, norms


def contrastive_directional(a: np.ndarray, b: np.ndarray, temperature: float) -> float:
    """InfoNCE with rows of a as anchors and rows of b as candidates.

    Mean over anchors of -log softmax of the matching pair, with cosine
    similarity over temperature as the logit.  Batches of one score zero.
    """
    loss, _, _ = contrastive_directional_grad(a, b, temperature)
    return loss


def contrastive_directional_grad(a: np.ndarray, b: np.ndarray, temperature: float):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"feature shapes differ: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if n == 1:
        return 0.0, np.zeros_like(a), np.zeros_like(b)
    an, na = _normalize_rows(a)
    bn, nb = _normalize_rows(b)
    logits = an @ bn.T / temperature
    shift = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shift), axis=1)) + logits.max(axis=1)
    loss = float(np.mean(lse - np.diag(logits)))
    p = np.exp(shift)
    p /= p.sum(axis=1, keepdims=True)
    dlogits = (p - np.eye(n)) / n
    dan = dlogits @ bn / temperature
    dbn = dlogits.T @ an / temperature
    da = (dan - an * np.sum(dan * an, axis=1, keepdims=True)) / na
    db = (dbn - bn * np.sum(dbn * bn, axis=1, keepdims=True)) / nb
    return loss, da, db


def contrastive_total(
    speech: np.ndarray,
    text: np.ndarray,
    objects: np.ndarray,
    temperature: float = 0.07,
    include: tuple = ALIGNMENT_PAIRS,
    grouping: str = "six",
) -> float:
    loss, _, _, _ = contrastive_total_grad(speech, text, objects, temperature, include, grouping)
    return loss


def contrastive_total_grad(
    speech: np.ndarray,
    text: np.ndarray,
    objects: np.ndarray,
    temperature: float = 0.07,
    include: tuple = ALIGNMENT_PAIRS,
    grouping: str = "six",
):
    """Directional InfoNCE terms for the enabled pairs, averaged.

    Pairs are named over the feature roles: "T&S" text with speech, "S&O"
    speech with objects, "T&O" text with objects.  Each pair contributes both
    directions.  Grouping "six" averages the six directional terms; grouping
    "four" groups the object-anchored terms as in a two-term formulation and
    divides by four, which only changes the overall scale.
    """
    include = tuple(include)
    for pair in include:
        if pair not in ALIGNMENT_PAIRS:
            raise ValueError(f"unknown alignment pair {pair!r}")
    if grouping not in ("six", "four"):
        raise ValueError(f"unknown grouping {grouping!r}")
    if grouping == "four" and set(include) != set(ALIGNMENT_PAIRS):
        raise ValueError("grouping 'four' requires all alignment pairs")
    feats = {"S": np.asarray(speech, float), "T": np.asarray(text, float), "O": np.asarray(objects, float)}
    grads = {k: np.zeros_like(v) for k, v in feats.items()}
    directions = {
        "T&S": (("T", "S"), ("S", "T")),
        "S&O": (("S", "O"), ("O", "S")),
        "T&O": (("T", "O"), ("O", "T")),
    }
    terms = []
    term_grads = []
    for pair in ALIGNMENT_PAIRS:
        if pair not in include:
            continue
        for src, dst in directions[pair]:
            loss, dsrc, ddst = contrastive_directional_grad(feats[src], feats[dst], temperature)
            terms.append(loss)
            term_grads.append(((src, dsrc), (dst, ddst)))
    if not terms:
        return 0.0, grads["S"], grads["T"], grads["O"]
    denom = 4.0 if grouping == "four" else float(len(terms))
    for (src, dsrc), (dst, ddst) in term_grads:
        grads[src] += dsrc / denom
        grads[dst] += ddst / denom
    total = float(np.sum(terms) / denom)
    return total, grads["S"], grads["T"], grads["O"]


def total_loss(
    cls_value: float,
    ref_value: float,
    contrastive_value: float,
    cfg: LossConfig = LossConfig(),
) -> float:
    """Weighted sum of the trainable loss terms.

    The detection term of the full objective is identically zero here because
    proposals come from the synthetic pipeline, not a trained detector.
    """
    return float(
        cfg.gamma1 * contrastive_value + cfg.gamma2 * ref_value + cfg.gamma3 * cls_value
    )
