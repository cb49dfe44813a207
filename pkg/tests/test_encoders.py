"""Speech, text, and visual encoder behavior and gradients."""

import numpy as np
import pytest

from speechground import nn
from speechground.encoders import (
    FRAME_STACK,
    ClassifierHead,
    RefineBlock,
    SpeechFrontEnd,
    TextEncoder,
    VisualEncoder,
    box_point_indices,
    classify_speech,
    encode_text,
    encode_visual,
    phonetic_refine,
    pool_and_stack,
    speech_frontend,
    stack_frames,
)
from speechground.phonetics import N_MELS, MelSpectrogram
from speechground.scenegen import Box3D, PointCloud, ProposalSet


def test_stack_frames_shapes_and_padding():
    bins = np.arange(N_MELS * 98, dtype=np.float64).reshape(N_MELS, 98)
    stacked = stack_frames(bins)
    assert stacked.shape == (25, FRAME_STACK * N_MELS)
    # first row is frames 0..3 laid out frame-major
    assert np.array_equal(stacked[0], bins[:, :4].T.reshape(-1))
    # 98 = 24*4 + 2, so the last row carries two real frames then zeros
    assert np.array_equal(stacked[-1, : 2 * N_MELS], bins[:, 96:98].T.reshape(-1))
    assert np.all(stacked[-1, 2 * N_MELS :] == 0.0)
    assert stack_frames(np.ones((N_MELS, 4))).shape == (1, 4 * N_MELS)


def test_zero_mel_gives_zero_frames():
    store = nn.ParamStore()
    fe = SpeechFrontEnd(store, 16, np.random.default_rng(0))
    mel = MelSpectrogram(bins=np.zeros((N_MELS, 12)))
    feats = speech_frontend(mel, fe)
    assert feats.frames.shape == (3, 16)
    assert np.all(feats.frames == 0.0)  # fresh bias is zero


def test_refine_is_linear_plus_positions_when_attention_silenced():
    store = nn.ParamStore()
    rng = np.random.default_rng(1)
    block = RefineBlock(store, 16, 2, rng)
    store.params["refine.attn.wo.w"][...] = 0.0
    frames = rng.standard_normal((7, 16))
    from speechground.encoders import SpeechFeatures

    out = phonetic_refine(SpeechFeatures(frames=frames), block)
    want = block.lin.forward(frames) + nn.sinusoid_positions(7, 16)
    assert np.allclose(out.frames, want, atol=1e-12)


def test_refine_gradients():
    store = nn.ParamStore()
    rng = np.random.default_rng(2)
    block = RefineBlock(store, 8, 2, rng)
    frames = rng.standard_normal((5, 8))
    probe = rng.standard_normal((5, 8))

    def loss_fn():
        out, _ = block.forward(frames)
        return float((out * probe).sum())

    def grad_fn():
        out, cache = block.forward(frames)
        block.backward(cache, probe)

    report = nn.finite_difference_check(store, loss_fn, grad_fn)
    assert report.max_rel_error < 1e-4


def test_pool_and_stack():
    from speechground.encoders import SpeechFeatures

    feats = SpeechFeatures(frames=np.array([[1.0, 5.0], [3.0, 2.0]]))
    g = pool_and_stack(feats, m=3)
    assert g.vector.tolist() == [3.0, 5.0]
    assert g.stacked.shape == (3, 2)
    assert np.all(g.stacked == g.vector)
    with pytest.raises(ValueError):
        pool_and_stack(feats, m=0)


def test_classifier_probs():
    store = nn.ParamStore()
    rng = np.random.default_rng(3)
    head = ClassifierHead(store, 16, 8, rng)
    from speechground.encoders import GlobalSpeechFeature

    vec = rng.standard_normal(16)
    scores = classify_speech(GlobalSpeechFeature(vector=vec, stacked=np.tile(vec, (2, 1))), head)
    assert scores.probs.shape == (8,)
    assert scores.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(scores.probs > 0.0)
    # adding a constant to every logit leaves the distribution unchanged
    before = scores.probs.copy()
    store.params["cls_head.b"][...] += 7.0
    after = classify_speech(
        GlobalSpeechFeature(vector=vec, stacked=np.tile(vec, (2, 1))), head
    ).probs
    assert np.allclose(after, before, atol=1e-12)


def test_text_encoder_basics():
    store = nn.ParamStore()
    rng = np.random.default_rng(4)
    vocab = ("the", "grey", "chair", "near")
    enc = TextEncoder(store, 8, 2, vocab, rng)
    feats = encode_text(["the", "grey", "chair"], enc)
    assert feats.token_feats.shape == (3, 8)
    assert np.allclose(feats.sentence, feats.token_feats.mean(axis=0), atol=1e-12)
    single = encode_text(["chair"], enc)
    assert np.allclose(single.sentence, single.token_feats[0], atol=1e-12)
    with pytest.raises(ValueError):
        encode_text(["sofa"], enc)
    with pytest.raises(ValueError):
        enc.forward(np.array([], dtype=np.int64))


def test_text_encoder_gradients_with_repeated_tokens():
    store = nn.ParamStore()
    rng = np.random.default_rng(5)
    vocab = ("the", "grey", "chair", "near")
    enc = TextEncoder(store, 8, 2, vocab, rng)
    ids = enc.token_ids(["the", "grey", "the", "chair"])  # repeated id 0
    probe_t = rng.standard_normal((4, 8))
    probe_s = rng.standard_normal(8)

    def loss_fn():
        toks, sent, _ = enc.forward(ids)
        return float((toks * probe_t).sum() + sent @ probe_s)

    def grad_fn():
        toks, sent, cache = enc.forward(ids)
        enc.backward(cache, probe_t, probe_s)

    report = nn.finite_difference_check(store, loss_fn, grad_fn)
    assert report.max_rel_error < 1e-4


def test_visual_encoder_pooling():
    store = nn.ParamStore()
    rng = np.random.default_rng(6)
    enc = VisualEncoder(store, 8, rng)
    cloud = rng.uniform(0, 2, size=(64, 6))
    idx_all = np.arange(64)
    feats, _ = enc.forward(cloud, [idx_all, np.array([], dtype=np.int64)])
    # empty membership falls back to the learned empty embedding
    assert np.array_equal(feats[1], store.params["visual.empty"])
    # duplicating points cannot change a max pool
    cloud2 = np.vstack([cloud, cloud[:10]])
    feats2, _ = enc.forward(cloud2, [np.arange(len(cloud2))])
    assert np.allclose(feats2[0], feats[0], atol=1e-12)
    # features are bounded by tanh
    assert np.all(np.abs(feats[0]) <= 1.0)


def test_visual_encoder_gradients():
    store = nn.ParamStore()
    rng = np.random.default_rng(7)
    enc = VisualEncoder(store, 6, rng)
    cloud = rng.uniform(0, 2, size=(40, 6))
    lists = [np.arange(20), np.arange(15, 40), np.array([], dtype=np.int64)]
    probe = rng.standard_normal((3, 6))

    def loss_fn():
        feats, _ = enc.forward(cloud, lists)
        return float((feats * probe).sum())

    def grad_fn():
        feats, cache = enc.forward(cloud, lists)
        enc.backward(cache, probe)

    report = nn.finite_difference_check(store, loss_fn, grad_fn)
    assert report.max_rel_error < 1e-4


def test_encode_visual_anchor_is_target_feature():
    store = nn.ParamStore()
    rng = np.random.default_rng(8)
    enc = VisualEncoder(store, 8, rng)
    pts = rng.uniform(0, 2, size=(200, 6))
    cloud = PointCloud(points=pts)
    boxes = [
        Box3D(center=(0.5, 0.5, 0.5), size=(1, 1, 1)),
        Box3D(center=(1.5, 1.5, 1.5), size=(1, 1, 1)),
    ]
    props = ProposalSet(boxes=boxes, source_instance=np.array([0, 1]))
    target = boxes[1]
    vis = encode_visual(cloud, props, target, enc)
    assert vis.proposal_feats.shape == (2, 8)
    assert np.allclose(vis.object_anchor, vis.proposal_feats[1], atol=1e-12)


def test_box_point_indices_inclusive():
    pts = np.array([[0.0, 0.0, 0.0, 0, 0, 0], [1.0, 1.0, 1.0, 0, 0, 0], [3.0, 3.0, 3.0, 0, 0, 0]])
    cloud = PointCloud(points=pts)
    box = Box3D(center=(0.5, 0.5, 0.5), size=(1, 1, 1))
    idx = box_point_indices(cloud, [box])
    assert idx[0].tolist() == [0, 1]
