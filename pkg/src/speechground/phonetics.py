"""Phonetic lexicon, transcription corruption, and synthetic speech spectrograms.

The corpus is closed: every word that can appear in an utterance, corrupted or
not, is listed in ``data/lexicon.tsv`` with an ARPABET pronunciation.  ASR-style
errors are simulated by substituting a word with a phonetically close one, where
closeness is normalized Levenshtein distance over phoneme sequences.  Speech is
rendered directly to log-mel spectrograms from per-phoneme spectral templates,
so no waveform modelling is needed; a conventional STFT mel front end is
provided for real audio input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

# 39 ARPABET phonemes plus a silence marker used at word boundaries.
INVENTORY = (
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH",
    "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH", "K",
    "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH",
    "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH", "SIL",
)

# Word groups.  Classes and attributes name scene content; relation and
# function words glue utterances together and are never corrupted.
CLASS_WORDS = ("chair", "table", "bed", "sofa", "desk", "lamp", "shelf", "door")
ATTRIBUTE_WORDS = ("grey", "white", "brown", "black", "red", "blue")
RELATION_WORDS = ("near", "beside", "left", "right", "front", "behind", "above", "under")
FUNCTION_WORDS = ("the", "a", "is", "there", "of")

SAMPLE_RATE = 16000
N_MELS = 80
FRAME_LEN = 400
FRAME_HOP = 160
MEL_FMIN = 0.0
MEL_FMAX = 8000.0
LOG_FLOOR = 1e-10

# Fixed master seed for the shipped phoneme template bank.
TEMPLATE_MASTER_SEED = 613566757
TEMPLATE_MAGIC = b"SGPT"
TEMPLATE_VERSION = 1

_SYNTH_STREAM = 11
_CORRUPT_STREAM = 12
_TEMPLATE_STREAM = 13

PhonemeSeq = tuple[str, ...]


@dataclass
class MelSpectrogram:
    """Log-mel bins, shape (n_mels, n_frames), natural log of mel energy."""

    bins: np.ndarray
    sample_rate: int = SAMPLE_RATE


@dataclass
class ConfusionTable:
    """Per-word substitution candidates with weights from phonetic distance."""

    entries: dict[str, list[tuple[str, float]]]


def _read_data_text(name: str) -> str:
    return resources.files("speechground.data").joinpath(name).read_text()


@lru_cache(maxsize=1)
def _lexicon() -> dict[str, PhonemeSeq]:
    lex: dict[str, PhonemeSeq] = {}
    for lineno, line in enumerate(_read_data_text("lexicon.tsv").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, _, phon = line.partition("\t")
        phonemes = tuple(phon.split())
        if not word or not phonemes:
            raise ValueError(f"lexicon.tsv:{lineno}: malformed entry {line!r}")
        for p in phonemes:
            if p not in INVENTORY:
                raise ValueError(f"lexicon.tsv:{lineno}: unknown phoneme {p!r}")
        lex[word] = phonemes
    return lex


def vocabulary() -> tuple[str, ...]:
    """All known words in lexicon file order."""
    return tuple(_lexicon())


def g2p(word: str) -> PhonemeSeq:
    """Pronunciation of a known word as a phoneme tuple."""
    lex = _lexicon()
    if word not in lex:
        raise KeyError(f"word not in lexicon: {word!r}")
    return lex[word]


def phonetic_distance(a: str, b: str) -> float:
    """Levenshtein distance between pronunciations over max sequence length.

    Identical words give 0; words sharing no phonemes give 1.
    """
    return _seq_distance(g2p(a), g2p(b))


def _seq_distance(pa: PhonemeSeq, pb: PhonemeSeq) -> float:
    la, lb = len(pa), len(pb)
    if la == 0 or lb == 0:
        raise ValueError("empty phoneme sequence")
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            sub = prev[j - 1] + (pa[i - 1] != pb[j - 1])
            cur[j] = min(sub, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[lb] / max(la, lb)


def substitutable_words() -> tuple[str, ...]:
    """Content words eligible for corruption (not function or relation words)."""
    skip = set(FUNCTION_WORDS) | set(RELATION_WORDS)
    return tuple(w for w in vocabulary() if w not in skip)


def build_confusion_table(lam: float = 4.0, max_distance: float = 0.7) -> ConfusionTable:
    """Confusion candidates for every content word.

    A candidate is any other vocabulary word within max_distance; its weight is
    exp(-lam * distance).  Words with no candidate in range get no entry.
    """
    vocab = vocabulary()
    entries: dict[str, list[tuple[str, float]]] = {}
    for word in substitutable_words():
        cands = []
        for other in vocab:
            if other == word:
                continue
            d = phonetic_distance(word, other)
            if d <= max_distance:
                cands.append((d, other))
        if cands:
            cands.sort(key=lambda t: (t[0], t[1]))
            entries[word] = [(w, float(np.exp(-lam * d))) for d, w in cands]
    return ConfusionTable(entries=entries)


@lru_cache(maxsize=1)
def load_confusion_table() -> ConfusionTable:
    """The shipped confusion table (same content as build_confusion_table())."""
    entries: dict[str, list[tuple[str, float]]] = {}
    for lineno, line in enumerate(_read_data_text("confusions.tsv").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"confusions.tsv:{lineno}: malformed entry {line!r}")
        word, cand, weight = parts
        entries.setdefault(word, []).append((cand, float(weight)))
    return ConfusionTable(entries=entries)


def corrupt_transcription(
    tokens: list[str],
    error_rate: float,
    table: ConfusionTable,
    seed: int,
) -> list[str]:
    """Simulated ASR transcription of an utterance.

    Each token with confusion candidates is replaced with probability
    error_rate; the replacement is drawn with probability proportional to the
    candidate weights.  Corrupted output stays inside the closed vocabulary.
    """
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError(f"error_rate out of range: {error_rate}")
    lex = _lexicon()
    for tok in tokens:
        if tok not in lex:
            raise ValueError(f"token not in lexicon: {tok!r}")
    rng = np.random.default_rng([_CORRUPT_STREAM, seed])
    out = []
    for tok in tokens:
        cands = table.entries.get(tok)
        if cands and rng.random() < error_rate:
            weights = np.array([w for _, w in cands], dtype=np.float64)
            pick = rng.choice(len(cands), p=weights / weights.sum())
            out.append(cands[int(pick)][0])
        else:
            out.append(tok)
    return out


def utterance_phonemes(tokens: list[str]) -> PhonemeSeq:
    """Phoneme sequence for a token list, words separated by single SIL."""
    seq: list[str] = []
    for i, tok in enumerate(tokens):
        if i:
            seq.append("SIL")
        seq.extend(g2p(tok))
    return tuple(seq)


def build_phoneme_templates(seed: int = TEMPLATE_MASTER_SEED) -> np.ndarray:
    """Deterministic spectral template bank, shape (N_MELS, len(INVENTORY)).

    Each phoneme column is smoothed standard-normal noise rescaled to std 1.5,
    giving distinct but spectrally plausible log-mel signatures.  The SIL
    column is a constant low-energy floor.
    """
    rng = np.random.default_rng([_TEMPLATE_STREAM, seed])
    raw = rng.standard_normal((N_MELS, len(INVENTORY)))
    kernel = np.ones(5) / 5.0
    smooth = np.empty_like(raw)
    for j in range(raw.shape[1]):
        smooth[:, j] = np.convolve(raw[:, j], kernel, mode="same")
    smooth -= smooth.mean(axis=0, keepdims=True)
    std = smooth.std(axis=0, keepdims=True)
    smooth = smooth / std * 1.5
    smooth[:, INVENTORY.index("SIL")] = -6.0
    return smooth


def write_phoneme_templates(path, templates: np.ndarray) -> None:
    n_mels, n_phon = templates.shape
    header = struct.pack("<4sIII", TEMPLATE_MAGIC, TEMPLATE_VERSION, n_mels, n_phon)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(templates.astype("<f8").tobytes())


def read_phoneme_templates(path_or_bytes) -> np.ndarray:
    if isinstance(path_or_bytes, bytes):
        blob = path_or_bytes
    else:
        with open(path_or_bytes, "rb") as fh:
            blob = fh.read()
    if len(blob) < 16:
        raise ValueError("template file too short")
    magic, version, n_mels, n_phon = struct.unpack("<4sIII", blob[:16])
    if magic != TEMPLATE_MAGIC:
        raise ValueError(f"bad template magic: {magic!r}")
    if version != TEMPLATE_VERSION:
        raise ValueError(f"unsupported template version: {version}")
    data = np.frombuffer(blob[16:], dtype="<f8")
    if data.size != n_mels * n_phon:
        raise ValueError("template payload size mismatch")
    return data.reshape(n_mels, n_phon).copy()


@lru_cache(maxsize=1)
def load_phoneme_templates() -> np.ndarray:
    """The shipped template bank, shape (N_MELS, len(INVENTORY))."""
    blob = resources.files("speechground.data").joinpath("phoneme_templates.bin").read_bytes()
    t = read_phoneme_templates(blob)
    if t.shape != (N_MELS, len(INVENTORY)):
        raise ValueError(f"unexpected template shape {t.shape}")
    return t


def synth_spectrogram(
    phonemes: PhonemeSeq,
    rate_scale: float = 1.0,
    noise_level: float = 1.0,
    seed: int = 0,
) -> MelSpectrogram:
    """Render a phoneme sequence to a log-mel spectrogram.

    Each phoneme holds its template for a random 3..6 frame duration divided
    by rate_scale (at least one frame), then Gaussian noise of the given level
    is added and the result clamped at the log floor.
    """
    if len(phonemes) == 0:
        raise ValueError("empty phoneme sequence")
    if not 0.5 <= rate_scale <= 2.0:
        raise ValueError(f"rate_scale out of range: {rate_scale}")
    if noise_level < 0:
        raise ValueError(f"negative noise_level: {noise_level}")
    templates = load_phoneme_templates()
    index = {p: i for i, p in enumerate(INVENTORY)}
    rng = np.random.default_rng([_SYNTH_STREAM, seed])
    cols = []
    for ph in phonemes:
        if ph not in index:
            raise ValueError(f"unknown phoneme {ph!r}")
        dur = max(1, int(round(rng.uniform(3.0, 6.0) / rate_scale)))
        cols.append(np.tile(templates[:, index[ph]][:, None], (1, dur)))
    bins = np.concatenate(cols, axis=1)
    if noise_level > 0:
        bins = bins + rng.standard_normal(bins.shape) * noise_level
    bins = np.maximum(bins, np.log(LOG_FLOOR))
    return MelSpectrogram(bins=bins, sample_rate=SAMPLE_RATE)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=1)
def mel_filterbank() -> np.ndarray:
    """Triangular mel filters, shape (N_MELS, FRAME_LEN // 2 + 1)."""
    n_bins = FRAME_LEN // 2 + 1
    fft_freqs = np.arange(n_bins) * (SAMPLE_RATE / FRAME_LEN)
    mel_pts = np.linspace(hz_to_mel(MEL_FMIN), hz_to_mel(MEL_FMAX), N_MELS + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((N_MELS, n_bins))
    for m in range(N_MELS):
        left, center, right = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - left) / (center - left)
        down = (right - fft_freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_spectrogram(waveform) -> MelSpectrogram:
    """Log-mel spectrogram of a 16 kHz waveform.

    25 ms Hann windows with 10 ms hop, magnitude FFT, 80 triangular mel
    filters up to 8 kHz, natural log clamped at the floor.  Frame count is
    1 + floor((n_samples - FRAME_LEN) / FRAME_HOP).
    """
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"waveform must be 1-D, got shape {x.shape}")
    if x.size < FRAME_LEN:
        raise ValueError(f"waveform shorter than one frame ({x.size} < {FRAME_LEN})")
    n_frames = 1 + (x.size - FRAME_LEN) // FRAME_HOP
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(FRAME_LEN) / FRAME_LEN)
    idx = np.arange(FRAME_LEN)[None, :] + FRAME_HOP * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    mag = np.abs(np.fft.rfft(frames, n=FRAME_LEN, axis=1))
    mel = mag @ mel_filterbank().T
    bins = np.log(np.maximum(mel, LOG_FLOOR)).T
    return MelSpectrogram(bins=bins, sample_rate=SAMPLE_RATE)
