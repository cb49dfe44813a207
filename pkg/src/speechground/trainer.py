"""Model assembly, training, evaluation, gradient checking, and ablations.

The model grounds an utterance in a set of 3D proposals through two branches:
a text branch over the (possibly corrupted) transcription and a speech branch
over refined spectrogram features.  Both share the cross-modal match block and
score head by default.  Training minimizes reference cross-entropy on both
branches, a class CE on the pooled speech feature, and a contrastive
alignment over speech, text, and object features; evaluation fuses branch
scores with a convex weight and reports IoU accuracy breakdowns.

Every stochastic step draws from a seeded generator stream, so training twice
with one config yields byte-identical checkpoints, logs, and metrics.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .encoders import (
    ClassifierHead,
    RefineBlock,
    SpeechFrontEnd,
    TextEncoder,
    VisualEncoder,
    box_point_indices,
    stack_frames,
)
from .evalmetrics import BreakdownTable, EvalRecord, breakdown, match_rate
from .grounding import MatchBlock, ScoreHead, fuse_scores, select_box
from .losses import (
    ALIGNMENT_PAIRS,
    LossConfig,
    contrastive_total_grad,
    cross_entropy,
    cross_entropy_grad,
    make_ref_labels,
)
from .phonetics import (
    CLASS_WORDS,
    load_confusion_table,
    corrupt_transcription,
    synth_spectrogram,
    utterance_phonemes,
    vocabulary,
)
from .scenegen import (
    Box3D,
    Dataset,
    PointCloud,
    ProposalSet,
    iou,
    propose_boxes,
    sample_points,
)

_INIT_STREAM = 31
_SHUFFLE_STREAM = 32

CHECKPOINT_MAGIC = b"SGCKPT01"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 40
    batch_size: int = 8
    learning_rate: float = 1e-3
    dim: int = 64
    n_heads: int = 4
    n_points: int = 2048
    proposals_m: int = 16
    proposal_jitter: float = 0.1
    error_rate: float = 0.3
    rate_scale: float = 1.0
    noise_level: float = 1.0
    sll: bool = True
    cbm: bool = True
    ccm: bool = True
    alignments: tuple = ALIGNMENT_PAIRS
    share_match_weights: bool = True
    fuse_level: str = "probability"
    contrastive_grouping: str = "six"
    pretrain_clean_epochs: int = 0
    val_every: int = 1
    gradcheck_dim: int = 16
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size positive")
        if self.fuse_level not in ("probability", "logit"):
            raise ValueError(f"unknown fuse_level {self.fuse_level!r}")
        for pair in self.alignments:
            if pair not in ALIGNMENT_PAIRS:
                raise ValueError(f"unknown alignment pair {pair!r}")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError(f"error_rate out of range: {self.error_rate}")

    def effective_beta(self) -> float:
        """Fusion weight actually used: zero when score fusion is off."""
        return self.loss.beta if self.cbm else 0.0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["alignments"] = list(self.alignments)
        return d


@dataclass
class CompiledItem:
    mel_bins: np.ndarray
    token_ids: np.ndarray
    scene_idx: int
    index_lists: list
    labels: np.ndarray
    target_class: int
    proposals: ProposalSet
    gt_box: Box3D
    iou_vs_gt: np.ndarray
    subset_tag: str


@dataclass
class CompiledSplit:
    clouds: list
    items: list


@dataclass
class RunLog:
    config: dict
    epochs: list
    final_val: list | None = None
    checkpoint: str | None = None


@dataclass
class EvalOutcome:
    table: BreakdownTable
    records: list
    selected: np.ndarray
    label_idx: np.ndarray

    @property
    def match(self) -> float:
        return match_rate(self.selected, self.label_idx)


class GroundingModel:
    """All encoders and heads over one parameter store."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.vocab = vocabulary()
        self.n_classes = len(CLASS_WORDS)
        self.store = nn.ParamStore()
        rng = np.random.default_rng([_INIT_STREAM, cfg.seed])
        # Construction order is fixed so that identical seeds give identical
        # initial parameters no matter which modules are enabled.
        self.frontend = SpeechFrontEnd(self.store, cfg.dim, rng)
        self.refine = RefineBlock(self.store, cfg.dim, cfg.n_heads, rng)
        self.cls_head = ClassifierHead(self.store, cfg.dim, self.n_classes, rng)
        self.text = TextEncoder(self.store, cfg.dim, cfg.n_heads, self.vocab, rng)
        self.visual = VisualEncoder(self.store, cfg.dim, rng)
        self.match_s = MatchBlock(self.store, "match", cfg.dim, cfg.n_heads, rng)
        self.score_s = ScoreHead(self.store, "score", cfg.dim, rng)
        if cfg.share_match_weights:
            self.match_t = self.match_s
            self.score_t = self.score_s
        else:
            self.match_t = MatchBlock(self.store, "match_t", cfg.dim, cfg.n_heads, rng)
            self.score_t = ScoreHead(self.store, "score_t", cfg.dim, rng)

    def forward_item(self, item: CompiledItem, clouds: list) -> dict:
        cfg = self.cfg
        stacked = stack_frames(item.mel_bins)
        ws, fin_cache = self.frontend.forward(stacked)
        if cfg.sll:
            ws2, refine_cache = self.refine.forward(ws)
        else:
            ws2, refine_cache = ws, None
        vector, pool_idx = nn.maxpool_rows(ws2)
        if cfg.sll:
            cls_probs, cls_cache = self.cls_head.forward(vector)
        else:
            cls_probs, cls_cache = None, None
        tok_out, sentence, text_cache = self.text.forward(item.token_ids)
        feats, vis_cache = self.visual.forward(clouds[item.scene_idx], item.index_lists)
        prop_feats, target_feat = feats[:-1], feats[-1]
        fused_t, match_t_cache = self.match_t.forward(prop_feats, tok_out)
        st, score_t_cache = self.score_t.forward(fused_t)
        if cfg.cbm:
            fused_s, match_s_cache = self.match_s.forward(prop_feats, ws2)
            ss, score_s_cache = self.score_s.forward(fused_s)
        else:
            ss, match_s_cache, score_s_cache = None, None, None
        return {
            "fin_cache": fin_cache,
            "refine_cache": refine_cache,
            "pool_idx": pool_idx,
            "n_frames": ws2.shape[0],
            "vector": vector,
            "cls_probs": cls_probs,
            "cls_cache": cls_cache,
            "sentence": sentence,
            "text_cache": text_cache,
            "vis_cache": vis_cache,
            "target_feat": target_feat,
            "match_t_cache": match_t_cache,
            "score_t_cache": (score_t_cache, st),
            "match_s_cache": match_s_cache,
            "score_s_cache": (score_s_cache, ss) if cfg.cbm else None,
            "st": st,
            "ss": ss,
        }

    def backward_item(self, fwd, dss, dst, dcls, ds_row, dt_row, do_row):
        cfg = self.cfg
        m = len(fwd["st"])
        dim = cfg.dim
        dprop = np.zeros((m, dim))
        dws2 = None
        dtok = np.zeros((fwd["text_cache"][0].size, dim))
        if dst is not None:
            dfused = self.score_t.backward(fwd["score_t_cache"][0], dst)
            dp, dl = self.match_t.backward(fwd["match_t_cache"], dfused)
            dprop += dp
            dtok += dl
        if dss is not None:
            dfused = self.score_s.backward(fwd["score_s_cache"][0], dss)
            dp, dl = self.match_s.backward(fwd["match_s_cache"], dfused)
            dprop += dp
            dws2 = dl
        if dws2 is None:
            dws2 = np.zeros((fwd["n_frames"], dim))
        dvec = np.asarray(ds_row, dtype=np.float64).copy()
        if dcls is not None:
            dvec += self.cls_head.backward(fwd["cls_cache"], dcls)
        dws2 = dws2 + nn.maxpool_rows_vjp(fwd["pool_idx"], fwd["n_frames"], dvec)
        if cfg.sll:
            dws = self.refine.backward(fwd["refine_cache"], dws2)
        else:
            dws = dws2
        self.frontend.backward(fwd["fin_cache"], dws)
        self.text.backward(fwd["text_cache"], dtok, np.asarray(dt_row, dtype=np.float64))
        dfeats = np.vstack([dprop, np.asarray(do_row, dtype=np.float64)[None, :]])
        self.visual.backward(fwd["vis_cache"], dfeats)

    def batch_loss(self, items: list, clouds: list, with_grad: bool):
        """Total loss over a batch; accumulates gradients when asked.

        Returns (loss, parts) where parts holds the unweighted component
        means (cls, ref, con).
        """
        cfg = self.cfg
        lc = cfg.loss
        n = len(items)
        fwd = [self.forward_item(it, clouds) for it in items]
        s_feats = np.stack([f["vector"] for f in fwd])
        t_feats = np.stack([f["sentence"] for f in fwd])
        o_feats = np.stack([f["target_feat"] for f in fwd])
        if cfg.ccm:
            con, ds_all, dt_all, do_all = contrastive_total_grad(
                s_feats,
                t_feats,
                o_feats,
                lc.temperature,
                include=cfg.alignments,
                grouping=cfg.contrastive_grouping,
            )
            gamma1 = lc.gamma1
        else:
            con = 0.0
            ds_all = np.zeros_like(s_feats)
            dt_all = np.zeros_like(t_feats)
            do_all = np.zeros_like(o_feats)
            gamma1 = 0.0
        cls_total = 0.0
        ref_total = 0.0
        for i, f in enumerate(fwd):
            item = items[i]
            ref_i = lc.alpha2 * cross_entropy(f["st"], item.labels)
            if cfg.cbm:
                ref_i += lc.alpha1 * cross_entropy(f["ss"], item.labels)
            ref_total += ref_i
            if cfg.sll:
                onehot = np.zeros(self.n_classes)
                onehot[item.target_class] = 1.0
                cls_total += cross_entropy(f["cls_probs"], onehot)
            if with_grad:
                dst = lc.gamma2 * lc.alpha2 * cross_entropy_grad(f["st"], item.labels) / n
                dss = None
                if cfg.cbm:
                    dss = lc.gamma2 * lc.alpha1 * cross_entropy_grad(f["ss"], item.labels) / n
                dcls = None
                if cfg.sll:
                    dcls = lc.gamma3 * cross_entropy_grad(f["cls_probs"], onehot) / n
                self.backward_item(
                    f, dss, dst, dcls,
                    gamma1 * ds_all[i], gamma1 * dt_all[i], gamma1 * do_all[i],
                )
        cls_mean = cls_total / n
        ref_mean = ref_total / n
        loss = gamma1 * con + lc.gamma2 * ref_mean + lc.gamma3 * cls_mean
        return float(loss), {"cls": float(cls_mean), "ref": float(ref_mean), "con": float(con)}

    def branch_scores(self, item: CompiledItem, clouds: list):
        """Per-branch probabilities and logits without gradient bookkeeping."""
        fwd = self.forward_item(item, clouds)
        st_logits = fwd["score_t_cache"][0][2]
        ss_logits = fwd["score_s_cache"][0][2] if self.cfg.cbm else None
        return fwd["ss"], fwd["st"], ss_logits, st_logits

    def speech_vector(self, mel_bins: np.ndarray) -> np.ndarray:
        """Global speech feature for one spectrogram (max-pooled over frames)."""
        stacked = stack_frames(mel_bins)
        ws, _ = self.frontend.forward(stacked)
        if self.cfg.sll:
            ws, _ = self.refine.forward(ws)
        vector, _ = nn.maxpool_rows(ws)
        return vector


def scene_cloud_seed(scene_id: str) -> int:
    return zlib.crc32(scene_id.encode())


def compile_dataset(dataset: Dataset, cfg: TrainConfig, limit: int | None = None) -> CompiledSplit:
    """Precompute model inputs for every utterance.

    Speech is synthesized from the true tokens; the text branch sees the
    transcription corrupted at the configured error rate under the stored
    corruption seed.  Scene clouds are shared across utterances of a scene.
    """
    table = load_confusion_table()
    model_vocab = {w: i for i, w in enumerate(vocabulary())}
    scene_list = dataset.scenes
    scene_pos = {s.scene_id: i for i, s in enumerate(scene_list)}
    clouds = [
        sample_points(s, cfg.n_points, scene_cloud_seed(s.scene_id)).points
        for s in scene_list
    ]
    items = []
    utterances = dataset.utterances if limit is None else dataset.utterances[:limit]
    for utt in utterances:
        scene = scene_list[scene_pos[utt.scene_id]]
        target = scene.object_by_instance(utt.target_instance_id)
        mel = synth_spectrogram(
            utterance_phonemes(utt.tokens),
            rate_scale=cfg.rate_scale,
            noise_level=cfg.noise_level,
            seed=utt.corruption_seed,
        )
        text_tokens = corrupt_transcription(
            utt.tokens, cfg.error_rate, table, utt.corruption_seed
        )
        proposals = propose_boxes(
            scene,
            utt.target_instance_id,
            cfg.proposals_m,
            cfg.proposal_jitter,
            utt.corruption_seed,
        )
        labels = make_ref_labels(proposals, target.box)
        cloud = PointCloud(points=clouds[scene_pos[utt.scene_id]])
        index_lists = box_point_indices(cloud, proposals.boxes + [target.box])
        items.append(
            CompiledItem(
                mel_bins=mel.bins,
                token_ids=np.array([model_vocab[t] for t in text_tokens], dtype=np.int64),
                scene_idx=scene_pos[utt.scene_id],
                index_lists=index_lists,
                labels=labels,
                target_class=target.class_id,
                proposals=proposals,
                gt_box=target.box,
                iou_vs_gt=np.array([iou(b, target.box) for b in proposals.boxes]),
                subset_tag=utt.subset_tag,
            )
        )
    return CompiledSplit(clouds=clouds, items=items)


def _breakdown_rows(table: BreakdownTable) -> list:
    return [
        {"subset": r.subset, "thresh": r.thresh, "accuracy": r.accuracy, "n": r.n}
        for r in table.rows
    ]


def train(
    cfg: TrainConfig,
    train_dataset: Dataset,
    val_dataset: Dataset | None = None,
    verbose: bool = False,
    compiled_train: CompiledSplit | None = None,
    compiled_val: CompiledSplit | None = None,
):
    """Train a model from scratch; returns (model, RunLog).

    Precompiled splits may be passed to reuse work across configurations that
    share data settings; they must match the config's data parameters.
    """
    model = GroundingModel(cfg)
    split = compiled_train if compiled_train is not None else compile_dataset(train_dataset, cfg)
    if cfg.pretrain_clean_epochs > 0:
        clean_cfg = dataclasses.replace(cfg, noise_level=0.0, rate_scale=1.0)
        clean_split = compile_dataset(train_dataset, clean_cfg)
    else:
        clean_split = None
    val_split = None
    if val_dataset is not None or compiled_val is not None:
        val_split = compiled_val if compiled_val is not None else compile_dataset(val_dataset, cfg)
    opt = nn.Adam(model.store, lr=cfg.learning_rate)
    log = RunLog(config=cfg.to_dict(), epochs=[])
    n = len(split.items)
    for epoch in range(cfg.epochs):
        use = clean_split if (clean_split is not None and epoch < cfg.pretrain_clean_epochs) else split
        perm = np.random.default_rng([_SHUFFLE_STREAM, cfg.seed, epoch]).permutation(n)
        sums = {"loss": 0.0, "cls": 0.0, "ref": 0.0, "con": 0.0}
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = [use.items[j] for j in perm[start : start + cfg.batch_size]]
            model.store.zero_grads()
            loss, parts = model.batch_loss(batch, use.clouds, with_grad=True)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {n_batches}: {loss}"
                )
            opt.step()
            sums["loss"] += loss
            for k in ("cls", "ref", "con"):
                sums[k] += parts[k]
            n_batches += 1
        entry = {"epoch": epoch}
        for k in ("loss", "cls", "ref", "con"):
            entry[k] = sums[k] / max(n_batches, 1)
        if val_split is not None and cfg.val_every > 0 and (epoch + 1) % cfg.val_every == 0:
            outcome = evaluate_compiled(model, val_split, cfg.effective_beta())
            entry["val"] = _breakdown_rows(outcome.table)
        log.epochs.append(entry)
        if verbose:
            print(
                f"epoch {epoch}: loss={entry['loss']:.4f} "
                f"cls={entry['cls']:.4f} ref={entry['ref']:.4f} con={entry['con']:.4f}"
            )
    if val_split is not None:
        outcome = evaluate_compiled(model, val_split, cfg.effective_beta())
        log.final_val = _breakdown_rows(outcome.table)
    return model, log


def evaluate_compiled(
    model: GroundingModel,
    split: CompiledSplit,
    beta: float,
) -> EvalOutcome:
    return evaluate_multi_beta(model, split, [beta])[0]


def evaluate_multi_beta(
    model: GroundingModel,
    split: CompiledSplit,
    betas: list,
) -> list:
    """One forward pass per item, fused at each requested beta.

    With score fusion disabled the text distribution is used unchanged and
    beta is ignored.
    """
    cfg = model.cfg
    if not split.items:
        raise ValueError("evaluation split is empty")
    per_beta = [([], [], []) for _ in betas]
    for item in split.items:
        ss, st, ss_logits, st_logits = model.branch_scores(item, split.clouds)
        gt_idx = int(np.argmax(item.labels))
        for bi, beta in enumerate(betas):
            if ss is None:
                fused = st
            elif cfg.fuse_level == "logit":
                fused = nn.softmax(beta * ss_logits + (1.0 - beta) * st_logits)
            else:
                fused = fuse_scores(ss, st, beta)
            idx, box = select_box(fused, item.proposals)
            records, selected, label_idx = per_beta[bi]
            records.append(
                EvalRecord(predicted=box, ground_truth=item.gt_box, subset_tag=item.subset_tag)
            )
            selected.append(idx)
            label_idx.append(gt_idx)
    outcomes = []
    for records, selected, label_idx in per_beta:
        outcomes.append(
            EvalOutcome(
                table=_breakdown_from_selected(split, selected),
                records=records,
                selected=np.array(selected),
                label_idx=np.array(label_idx),
            )
        )
    return outcomes


def _breakdown_from_selected(split: CompiledSplit, selected: list) -> BreakdownTable:
    from .evalmetrics import SUBSETS, THRESHOLDS, BreakdownRow

    ious = np.array([split.items[i].iou_vs_gt[selected[i]] for i in range(len(selected))])
    tags = [split.items[i].subset_tag for i in range(len(selected))]
    rows = []
    for subset in SUBSETS:
        mask = np.array([subset == "overall" or t == subset for t in tags])
        if not mask.any():
            continue
        for thresh in THRESHOLDS:
            acc = 100.0 * float(np.mean(ious[mask] > thresh))
            rows.append(BreakdownRow(subset=subset, thresh=thresh, accuracy=acc, n=int(mask.sum())))
    return BreakdownTable(rows=rows)


def evaluate(checkpoint, dataset: Dataset, beta: float, cfg: TrainConfig) -> BreakdownTable:
    """Evaluate a checkpoint path or model on a dataset at a fusion weight."""
    if isinstance(checkpoint, GroundingModel):
        model = checkpoint
    else:
        model = GroundingModel(cfg)
        load_checkpoint(model.store, checkpoint)
    split = compile_dataset(dataset, cfg)
    return evaluate_compiled(model, split, beta).table


def grad_check(cfg: TrainConfig, dataset: Dataset, eps: float = 1e-5) -> nn.GradCheckReport:
    """Compare analytic and numeric gradients on a small batch.

    Uses at most four utterances from the dataset; the config should specify
    a reduced width and proposal count to keep the parameter count small.
    """
    model = GroundingModel(cfg)
    split = compile_dataset(dataset, cfg, limit=4)
    items = split.items
    clouds = split.clouds

    def loss_fn():
        loss, _ = model.batch_loss(items, clouds, with_grad=False)
        return loss

    def grad_fn():
        model.store.zero_grads()
        model.batch_loss(items, clouds, with_grad=True)

    return nn.finite_difference_check(model.store, loss_fn, grad_fn, eps=eps)


def save_checkpoint(store: nn.ParamStore, path) -> None:
    """Flat named-array container, float64 little-endian, names sorted."""
    names = store.names()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(names)))
        for name in names:
            raw = name.encode()
            arr = store.params[name]
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(store: nn.ParamStore, path) -> None:
    """Load values into an existing store; any shape mismatch is an error."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    seen = set()
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", blob, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(blob, dtype="<f8", count=size, offset=off)
        off += 8 * size
        if name not in store.params:
            raise ValueError(f"{path}: unknown parameter {name!r}")
        target = store.params[name]
        if tuple(shape) != target.shape:
            raise ValueError(
                f"{path}: shape mismatch for {name!r}: "
                f"checkpoint {tuple(shape)} vs model {target.shape}"
            )
        target[...] = values.reshape(shape)
        seen.add(name)
    missing = set(store.params) - seen
    if missing:
        raise ValueError(f"{path}: missing parameters: {sorted(missing)}")


def save_runlog(log: RunLog, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"config": log.config}, separators=(",", ":")) + "\n")
        for entry in log.epochs:
            fh.write(json.dumps(entry, separators=(",", ":")) + "\n")
        if log.final_val is not None:
            fh.write(json.dumps({"final_val": log.final_val}, separators=(",", ":")) + "\n")
        if log.checkpoint is not None:
            fh.write(json.dumps({"checkpoint": log.checkpoint}, separators=(",", ":")) + "\n")


def load_runlog(path) -> RunLog:
    config = None
    epochs = []
    final_val = None
    checkpoint = None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "config" in rec:
                config = rec["config"]
            elif "final_val" in rec:
                final_val = rec["final_val"]
            elif "checkpoint" in rec:
                checkpoint = rec["checkpoint"]
            else:
                epochs.append(rec)
    return RunLog(config=config or {}, epochs=epochs, final_val=final_val, checkpoint=checkpoint)


MODULE_CELLS = (
    ("baseline", {"sll": False, "cbm": False, "ccm": False}),
    ("sll", {"sll": True, "cbm": False, "ccm": False}),
    ("sll+ccm", {"sll": True, "cbm": False, "ccm": True}),
    ("full", {"sll": True, "cbm": True, "ccm": True}),
)

ALIGNMENT_CELLS = (
    ("none", ()),
    ("T&O", ("T&O",)),
    ("T&O+T&S", ("T&O", "T&S")),
    ("T&O+T&S+S&O", ("T&O", "T&S", "S&O")),
)

BETA_VALUES = (0.0, 0.2, 0.5, 0.8, 1.0)
RATE_VALUES = (0.5, 1.0, 2.0)
NOISE_VALUES = (0.0, 1.0, 2.0)


@dataclass
class AblationRow:
    cell: str
    seed: int
    subset: str
    thresh: float
    accuracy: float
    n: int


def _rows_from_table(cell: str, seed: int, table: BreakdownTable) -> list:
    return [
        AblationRow(cell=cell, seed=seed, subset=r.subset, thresh=r.thresh,
                    accuracy=r.accuracy, n=r.n)
        for r in table.rows
    ]


_ABLATE_CTX = {}


def _ablate_task(task):
    kind, cell, seed, overrides, betas = task
    base: TrainConfig = _ABLATE_CTX["cfg"]
    train_ds: Dataset = _ABLATE_CTX["train"]
    val_ds: Dataset = _ABLATE_CTX["val"]
    cfg = dataclasses.replace(base, seed=seed, val_every=0, **overrides)
    model, _ = train(cfg, train_ds, None)
    val_split = compile_dataset(val_ds, cfg)
    rows = []
    if kind == "beta":
        outcomes = evaluate_multi_beta(model, val_split, list(betas))
        for beta, outcome in zip(betas, outcomes):
            rows.extend(_rows_from_table(f"beta={beta}", seed, outcome.table))
    else:
        outcome = evaluate_compiled(model, val_split, cfg.effective_beta())
        rows.extend(_rows_from_table(cell, seed, outcome.table))
    return rows


def ablate(
    cfg: TrainConfig,
    train_dataset: Dataset,
    val_dataset: Dataset,
    sweep: str,
    seeds: tuple = (0, 1, 2),
    values: tuple | None = None,
) -> list:
    """Run an ablation sweep; returns AblationRow entries for every cell.

    Sweeps: "modules" toggles module subsets, "alignment" restricts the
    contrastive pairs, "beta" evaluates one trained model per seed at several
    fusion weights, "rate" and "noise" rebuild speech at perturbed speaking
    rates or noise levels.  SPEECHGROUND_THREADS > 1 runs cells in parallel
    worker processes.
    """
    tasks = []
    if sweep == "modules":
        for cell, toggles in MODULE_CELLS:
            for seed in seeds:
                tasks.append((sweep, cell, seed, toggles, None))
    elif sweep == "alignment":
        for cell, pairs in ALIGNMENT_CELLS:
            over = {"alignments": pairs, "ccm": bool(pairs)}
            for seed in seeds:
                tasks.append((sweep, cell, seed, over, None))
    elif sweep == "beta":
        betas = tuple(values) if values else BETA_VALUES
        for seed in seeds:
            tasks.append((sweep, "beta", seed, {}, betas))
    elif sweep == "rate":
        for v in tuple(values) if values else RATE_VALUES:
            for seed in seeds:
                tasks.append((sweep, f"rate={v}", seed, {"rate_scale": float(v)}, None))
    elif sweep == "noise":
        for v in tuple(values) if values else NOISE_VALUES:
            for seed in seeds:
                tasks.append((sweep, f"noise={v}", seed, {"noise_level": float(v)}, None))
    else:
        raise ValueError(f"unknown sweep {sweep!r}")
    _ABLATE_CTX.update({"cfg": cfg, "train": train_dataset, "val": val_dataset})
    threads = int(os.environ.get("SPEECHGROUND_THREADS", "1"))
    if threads > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(threads) as pool:
            results = pool.map(_ablate_task, tasks)
    else:
        results = [_ablate_task(t) for t in tasks]
    rows = []
    for chunk in results:
        rows.extend(chunk)
    return rows


def summarize_ablation(rows: list) -> list:
    """Mean, min, and max accuracy per (cell, subset, thresh) across seeds."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.cell, r.subset, r.thresh), []).append(r.accuracy)
    out = []
    for (cell, subset, thresh), accs in groups.items():
        out.append(
            {
                "cell": cell,
                "subset": subset,
                "thresh": thresh,
                "mean": float(np.mean(accs)),
                "min": float(np.min(accs)),
                "max": float(np.max(accs)),
                "n_seeds": len(accs),
            }
        )
    return out


def write_ablation_csv(rows: list, path) -> None:
    with open(path, "w") as fh:
        fh.write("cell,seed,subset,thresh,accuracy\n")
        for r in rows:
            fh.write(f"{r.cell},{r.seed},{r.subset},{r.thresh},{r.accuracy}\n")
