"""Desk-scale synthetic lab for speech-guided 3D visual grounding.

Speech is rendered from phoneme templates, transcriptions are corrupted with
phonetically weighted confusions, and a small float64 model grounds both
signals in jittered 3D proposals.  See the demos directory for worked
walkthroughs of each stage.
"""

from .scenegen import (
    Box3D,
    Dataset,
    DatasetFormatError,
    GenerationConfig,
    PlacementError,
    PointCloud,
    ProposalSet,
    Scene,
    SceneObject,
    Utterance,
    generate_dataset,
    generate_scene,
    generate_utterance,
    iou,
    load_dataset,
    points_in_box,
    propose_boxes,
    sample_points,
    save_dataset,
    subset_label,
)
from .phonetics import (
    ConfusionTable,
    MelSpectrogram,
    build_confusion_table,
    corrupt_transcription,
    g2p,
    load_confusion_table,
    mel_spectrogram,
    phonetic_distance,
    synth_spectrogram,
    utterance_phonemes,
    vocabulary,
)
from .losses import (
    LossConfig,
    cls_loss,
    contrastive_directional,
    contrastive_total,
    make_ref_labels,
    ref_loss,
    total_loss,
)
from .grounding import fuse_scores, select_box
from .evalmetrics import (
    BreakdownTable,
    EvalRecord,
    acc_at_iou,
    breakdown,
    match_rate,
    write_breakdown_csv,
)
from .trainer import (
    GroundingModel,
    RunLog,
    TrainConfig,
    ablate,
    compile_dataset,
    evaluate,
    evaluate_compiled,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    summarize_ablation,
    train,
)

__version__ = "0.1.0"
