"""Trainer suite: config, compilation, determinism, toggles, checkpoints."""

import dataclasses
import zlib

import numpy as np
import pytest

from speechground.nn import ParamStore
from speechground.phonetics import vocabulary
from speechground.scenegen import generate_dataset
from speechground.trainer import (
    CHECKPOINT_MAGIC,
    AblationRow,
    GroundingModel,
    RunLog,
    TrainConfig,
    ablate,
    compile_dataset,
    evaluate,
    evaluate_compiled,
    evaluate_multi_beta,
    grad_check,
    load_checkpoint,
    load_runlog,
    save_checkpoint,
    save_runlog,
    scene_cloud_seed,
    summarize_ablation,
    train,
    write_ablation_csv,
)


def tiny_cfg(**kw):
    kw.setdefault("dim", 16)
    kw.setdefault("n_heads", 2)
    kw.setdefault("epochs", 2)
    kw.setdefault("batch_size", 4)
    kw.setdefault("n_points", 64)
    kw.setdefault("proposals_m", 10)
    return TrainConfig(**kw)


@pytest.fixture(scope="module")
def tiny_ds():
    return generate_dataset(n_scenes=3, utterances_per_scene=2, seed=11)


@pytest.fixture(scope="module")
def tiny_split(tiny_ds):
    return compile_dataset(tiny_ds, tiny_cfg())


# ---- config ----

def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(fuse_level="sum")
    with pytest.raises(ValueError):
        TrainConfig(alignments=("T&S", "X&Y"))
    with pytest.raises(ValueError):
        TrainConfig(error_rate=1.5)


def test_effective_beta_follows_fusion_toggle():
    cfg = tiny_cfg()
    assert cfg.effective_beta() == cfg.loss.beta == 0.5
    assert dataclasses.replace(cfg, cbm=False).effective_beta() == 0.0


def test_config_to_dict_round_trips_loss_fields():
    d = tiny_cfg().to_dict()
    assert d["dim"] == 16
    assert d["loss"]["temperature"] == 0.07
    assert d["alignments"] == ["T&S", "S&O", "T&O"]


# ---- compilation ----

def test_compile_structure(tiny_ds, tiny_split):
    cfg = tiny_cfg()
    split = tiny_split
    assert len(split.items) == len(tiny_ds.utterances)
    assert len(split.clouds) == len(tiny_ds.scenes)
    nv = len(vocabulary())
    for item in split.items:
        assert item.mel_bins.shape[0] == 80
        assert item.token_ids.dtype == np.int64
        assert np.all(item.token_ids >= 0) and np.all(item.token_ids < nv)
        assert len(item.labels) == cfg.proposals_m
        assert np.isclose(item.labels.sum(), 1.0)
        assert len(item.iou_vs_gt) == cfg.proposals_m
        # labeled proposal is the best-overlap one
        assert np.argmax(item.labels) == np.argmax(item.iou_vs_gt)
        assert len(item.index_lists) == cfg.proposals_m + 1
        assert item.subset_tag in ("unique", "multiple")
    for cloud in split.clouds:
        assert cloud.shape == (cfg.n_points, 6)


def test_compile_limit(tiny_ds):
    split = compile_dataset(tiny_ds, tiny_cfg(), limit=4)
    assert len(split.items) == 4


def test_compile_ignores_toggles_and_model_seed(tiny_ds, tiny_split):
    # corruption seeds live in the utterances, so one compiled split can
    # feed every cell and every training seed
    other = compile_dataset(
        tiny_ds, tiny_cfg(seed=9, sll=False, cbm=False, ccm=False)
    )
    for a, b in zip(tiny_split.items, other.items):
        assert np.array_equal(a.mel_bins, b.mel_bins)
        assert np.array_equal(a.token_ids, b.token_ids)
        assert np.array_equal(a.labels, b.labels)


def test_scene_cloud_seed_is_crc32():
    assert scene_cloud_seed("scene-000") == zlib.crc32(b"scene-000")


# ---- model init ----

def test_model_init_deterministic_and_toggle_independent():
    cfg = tiny_cfg()
    a = GroundingModel(cfg)
    b = GroundingModel(cfg)
    c = GroundingModel(dataclasses.replace(cfg, sll=False, cbm=False, ccm=False))
    d = GroundingModel(dataclasses.replace(cfg, seed=1))
    assert a.store.names() == b.store.names() == c.store.names()
    for name in a.store.names():
        assert np.array_equal(a.store.params[name], b.store.params[name])
        assert np.array_equal(a.store.params[name], c.store.params[name])
    assert any(
        not np.array_equal(a.store.params[n], d.store.params[n])
        for n in a.store.names()
    )


def test_shared_match_weights_toggle():
    shared = GroundingModel(tiny_cfg())
    assert shared.match_t is shared.match_s
    split = GroundingModel(tiny_cfg(share_match_weights=False))
    assert split.match_t is not split.match_s
    assert any(n.startswith("match_t.") for n in split.store.names())


def test_speech_vector_matches_branch_toggle(tiny_split):
    item = tiny_split.items[0]
    full = GroundingModel(tiny_cfg())
    off = GroundingModel(tiny_cfg(sll=False))
    v_full = full.speech_vector(item.mel_bins)
    v_off = off.speech_vector(item.mel_bins)
    assert v_full.shape == v_off.shape == (16,)
    # refinement is bypassed when disabled, so the vectors must differ
    assert not np.allclose(v_full, v_off)
    assert np.array_equal(v_off, off.speech_vector(item.mel_bins))


# ---- training ----

def test_train_deterministic(tmp_path, tiny_ds):
    cfg = tiny_cfg()
    m1, l1 = train(cfg, tiny_ds)
    m2, l2 = train(cfg, tiny_ds)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(m1.store, p1)
    save_checkpoint(m2.store, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert l1.epochs == l2.epochs
    r1, r2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_runlog(l1, r1)
    save_runlog(l2, r2)
    assert r1.read_bytes() == r2.read_bytes()


def test_toggle_loss_terms(tiny_ds, tiny_split):
    cfg = tiny_cfg(ccm=False)
    _, log = train(cfg, tiny_ds, compiled_train=tiny_split)
    assert all(e["con"] == 0.0 for e in log.epochs)
    cfg = tiny_cfg(sll=False)
    _, log = train(cfg, tiny_ds, compiled_train=tiny_split)
    assert all(e["cls"] == 0.0 for e in log.epochs)
    assert all(e["con"] > 0.0 for e in log.epochs)


def test_speech_only_losses_leave_text_path_untouched(tiny_ds, tiny_split):
    """Classifier gradients flow only into speech-side parameters."""
    base_cfg = tiny_cfg(sll=False, cbm=False, ccm=False)
    sll_cfg = tiny_cfg(sll=True, cbm=False, ccm=False)
    mb, _ = train(base_cfg, tiny_ds, compiled_train=tiny_split)
    ms, _ = train(sll_cfg, tiny_ds, compiled_train=tiny_split)
    text_side = ("text.", "visual.", "match.", "score.")
    for name in mb.store.names():
        same = np.array_equal(mb.store.params[name], ms.store.params[name])
        if name.startswith(text_side):
            assert same, name
        elif name.startswith(("frontend.", "refine.", "cls_head.")):
            assert not same, name
    # with no speech-side loss the speech trunk keeps its initial values
    init = GroundingModel(base_cfg)
    for name in mb.store.names():
        if name.startswith(("frontend.", "refine.", "cls_head.")):
            assert np.array_equal(mb.store.params[name], init.store.params[name])


def test_loss_decreases_on_fixed_batch():
    ds = generate_dataset(n_scenes=4, utterances_per_scene=4, seed=13)
    cfg = tiny_cfg(epochs=50, batch_size=16)
    _, log = train(cfg, ds)
    assert len(log.epochs) == 50
    assert log.epochs[-1]["loss"] < log.epochs[0]["loss"]


def test_train_with_validation(tiny_ds, tiny_split):
    cfg = tiny_cfg(epochs=2, val_every=2)
    _, log = train(
        cfg, tiny_ds, tiny_ds, compiled_train=tiny_split, compiled_val=tiny_split
    )
    assert "val" not in log.epochs[0]
    rows = log.epochs[1]["val"]
    assert {r["subset"] for r in rows} >= {"overall"}
    assert all(set(r) == {"subset", "thresh", "accuracy", "n"} for r in rows)
    assert log.final_val is not None


def test_clean_pretrain_epochs_change_training(tiny_ds):
    cfg = tiny_cfg(epochs=2)
    warm = dataclasses.replace(cfg, pretrain_clean_epochs=1)
    m1, _ = train(cfg, tiny_ds)
    m2, _ = train(warm, tiny_ds)
    assert any(
        not np.array_equal(m1.store.params[n], m2.store.params[n])
        for n in m1.store.names()
    )


# ---- evaluation ----

def test_evaluate_empty_split_raises(tiny_split):
    model = GroundingModel(tiny_cfg())
    empty = dataclasses.replace(tiny_split, items=[])
    with pytest.raises(ValueError):
        evaluate_multi_beta(model, empty, [0.5])


def test_fusion_off_equals_beta_zero(tmp_path, tiny_ds, tiny_split):
    cfg = tiny_cfg(epochs=1)
    model, _ = train(cfg, tiny_ds, compiled_train=tiny_split)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model.store, path)
    at_zero = evaluate_multi_beta(model, tiny_split, [0.0])[0]
    no_fuse = GroundingModel(dataclasses.replace(cfg, cbm=False))
    load_checkpoint(no_fuse.store, path)
    off = evaluate_compiled(no_fuse, tiny_split, 0.7)  # beta ignored
    assert np.array_equal(at_zero.selected, off.selected)
    # refinement only feeds the speech branch, so text-only selections
    # are blind to it as well
    no_refine = GroundingModel(dataclasses.replace(cfg, cbm=False, sll=False))
    load_checkpoint(no_refine.store, path)
    off2 = evaluate_compiled(no_refine, tiny_split, 0.0)
    assert np.array_equal(off.selected, off2.selected)


def test_multi_beta_matches_separate_evals(tiny_split):
    model = GroundingModel(tiny_cfg())
    outs = evaluate_multi_beta(model, tiny_split, [0.0, 0.5, 1.0])
    assert len(outs) == 3
    solo = evaluate_compiled(model, tiny_split, 0.5)
    assert np.array_equal(outs[1].selected, solo.selected)
    assert outs[1].table.rows == solo.table.rows


def test_evaluate_accepts_checkpoint_path(tmp_path, tiny_ds, tiny_split):
    cfg = tiny_cfg(epochs=1)
    model, _ = train(cfg, tiny_ds, compiled_train=tiny_split)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model.store, path)
    t_model = evaluate(model, tiny_ds, 0.5, cfg)
    t_path = evaluate(str(path), tiny_ds, 0.5, cfg)
    assert t_model.rows == t_path.rows


# ---- gradient check ----

def test_grad_check_small_model(tiny_ds):
    cfg = tiny_cfg(dim=8, n_heads=2, n_points=32, proposals_m=10)
    rep = grad_check(cfg, tiny_ds)
    assert rep.n_checked > 0
    assert rep.max_rel_error < 1e-4, rep.group_errors


# ---- checkpoint format ----

def test_checkpoint_round_trip(tmp_path):
    cfg = tiny_cfg()
    src = GroundingModel(cfg)
    dst = GroundingModel(dataclasses.replace(cfg, seed=3))
    path = tmp_path / "m.ckpt"
    save_checkpoint(src.store, path)
    load_checkpoint(dst.store, path)
    for name in src.store.names():
        assert np.array_equal(src.store.params[name], dst.store.params[name])


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTCKPT!" + b"\x00" * 16)
    store = GroundingModel(tiny_cfg()).store
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(store, path)


def test_checkpoint_rejects_bad_version(tmp_path):
    import struct

    path = tmp_path / "v.ckpt"
    path.write_bytes(CHECKPOINT_MAGIC + struct.pack("<II", 99, 0))
    store = GroundingModel(tiny_cfg()).store
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(store, path)


def test_checkpoint_unknown_and_missing_params(tmp_path):
    s1 = ParamStore()
    s1.add("a", np.ones((2, 2)))
    path = tmp_path / "s.ckpt"
    save_checkpoint(s1, path)
    s2 = ParamStore()
    s2.add("b", np.zeros((2, 2)))
    with pytest.raises(ValueError, match="unknown parameter"):
        load_checkpoint(s2, path)
    s3 = ParamStore()
    s3.add("a", np.zeros((2, 2)))
    s3.add("c", np.zeros(3))
    with pytest.raises(ValueError, match="missing parameters"):
        load_checkpoint(s3, path)


def test_checkpoint_shape_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(GroundingModel(tiny_cfg()).store, path)
    wide = GroundingModel(tiny_cfg(dim=32))
    with pytest.raises(ValueError, match="shape mismatch"):
        load_checkpoint(wide.store, path)


# ---- run logs ----

def test_runlog_round_trip(tmp_path):
    log = RunLog(
        config={"dim": 16},
        epochs=[{"epoch": 0, "loss": 1.5, "cls": 0.1, "ref": 1.0, "con": 0.4}],
        final_val=[{"subset": "overall", "thresh": 0.5, "accuracy": 50.0, "n": 4}],
        checkpoint="runs/model.ckpt",
    )
    path = tmp_path / "log.jsonl"
    save_runlog(log, path)
    back = load_runlog(path)
    assert back.config == log.config
    assert back.epochs == log.epochs
    assert back.final_val == log.final_val
    assert back.checkpoint == log.checkpoint


# ---- ablations ----

def test_ablate_modules_and_beta(tmp_path, tiny_ds):
    cfg = tiny_cfg(epochs=1)
    rows = ablate(cfg, tiny_ds, tiny_ds, "modules", seeds=(0,))
    assert {r.cell for r in rows} == {"baseline", "sll", "sll+ccm", "full"}
    assert all(r.seed == 0 for r in rows)
    assert all(r.thresh in (0.25, 0.5) for r in rows)
    path = tmp_path / "ab.csv"
    write_ablation_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "cell,seed,subset,thresh,accuracy"
    assert len(lines) == len(rows) + 1
    assert all(len(line.split(",")) == 5 for line in lines[1:])

    brows = ablate(cfg, tiny_ds, tiny_ds, "beta", seeds=(0,), values=(0.0, 1.0))
    assert {r.cell for r in brows} == {"beta=0.0", "beta=1.0"}
    with pytest.raises(ValueError, match="unknown sweep"):
        ablate(cfg, tiny_ds, tiny_ds, "widths", seeds=(0,))


def test_summarize_ablation():
    rows = [
        AblationRow("full", 0, "overall", 0.5, 70.0, 10),
        AblationRow("full", 1, "overall", 0.5, 80.0, 10),
        AblationRow("full", 0, "overall", 0.25, 75.0, 10),
    ]
    out = summarize_ablation(rows)
    at50 = next(r for r in out if r["thresh"] == 0.5)
    assert at50["mean"] == 75.0 and at50["min"] == 70.0 and at50["max"] == 80.0
    assert at50["n_seeds"] == 2
    at25 = next(r for r in out if r["thresh"] == 0.25)
    assert at25["n_seeds"] == 1
