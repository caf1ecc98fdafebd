"""Corpus I/O (manifests, WAV, FTRX matrices) and loading utterances into
aligned feature pairs."""

import json
import os
import struct
import wave
from dataclasses import dataclass

import numpy as np

from . import features
from .model import TaskType

FTRX_MAGIC = b"FTRX"
MANIFEST_FIELDS = ("utterance_id", "speaker_id", "dataset", "task", "label", "audio_path", "ssl_feature_path")


class FormatError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    speaker_id: str
    dataset: str
    task: TaskType
    label: int
    audio_path: str = None
    ssl_feature_path: str = None

    def __post_init__(self):
        if not self.utterance_id or not self.speaker_id or not self.dataset:
            raise ManifestError("utterance_id, speaker_id and dataset must be non-empty")
        if self.label not in (0, 1):
            raise ManifestError(f"{self.utterance_id}: label must be 0 (HC) or 1 (PD), got {self.label!r}")
        if not self.audio_path and not self.ssl_feature_path:
            raise ManifestError(f"{self.utterance_id}: needs audio_path or ssl_feature_path")

    def to_record(self):
        return {
            "utterance_id": self.utterance_id,
            "speaker_id": self.speaker_id,
            "dataset": self.dataset,
            "task": self.task.value,
            "label": self.label,
            "audio_path": self.audio_path,
            "ssl_feature_path": self.ssl_feature_path,
        }


def parse_entry(record):
    missing = [k for k in MANIFEST_FIELDS if k not in record]
    extra = [k for k in record if k not in MANIFEST_FIELDS]
    if missing:
        raise ManifestError(f"missing field(s) {missing}")
    if extra:
        raise ManifestError(f"unknown field(s) {extra}")
    label = record["label"]
    if isinstance(label, bool) or not isinstance(label, int):
        raise ManifestError(f"label must be an integer, got {label!r}")
    return ManifestEntry(
        utterance_id=str(record["utterance_id"]),
        speaker_id=str(record["speaker_id"]),
        dataset=str(record["dataset"]),
        task=TaskType.parse(record["task"]),
        label=label,
        audio_path=record["audio_path"] or None,
        ssl_feature_path=record["ssl_feature_path"] or None,
    )


def load_manifest(path):
    """One flat JSON object per line; blank lines are skipped."""
    entries, seen = [], set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ManifestError("record is not an object")
                entry = parse_entry(record)
            except (json.JSONDecodeError, ManifestError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if entry.utterance_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate utterance_id {entry.utterance_id!r}")
            seen.add(entry.utterance_id)
            entries.append(entry)
    return entries


def write_manifest(path, entries):
    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_record(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# WAV


def read_audio(path):
    """Mono 16-bit PCM RIFF/WAVE -> Waveform scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels, width, rate, n = wf.getnchannels(), wf.getsampwidth(), wf.getframerate(), wf.getnframes()
            if channels != 1:
                raise FormatError(f"{path}: channels={channels}, expected 1 (mono)")
            if width != 2:
                raise FormatError(f"{path}: sample width={8 * width} bits, expected 16-bit PCM")
            raw = wf.readframes(n)
    except wave.Error as exc:
        raise FormatError(f"{path}: encoding not supported ({exc}); expected PCM 16-bit") from None
    except EOFError:
        raise FormatError(f"{path}: truncated RIFF header") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return features.Waveform(samples, rate)


def write_audio(path, w):
    pcm = np.clip(np.round(np.asarray(w.samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(w.sample_rate))
        wf.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# FTRX matrices


def write_matrix(path, m):
    m = np.asarray(m)
    if m.ndim != 2:
        raise FormatError(f"{path}: FTRX holds 2-D matrices, got shape {m.shape}")
    rows, cols = m.shape
    if cols == 0:
        raise FormatError(f"{path}: cols must be >= 1")
    with open(path, "wb") as fh:
        fh.write(FTRX_MAGIC + struct.pack("<II", rows, cols))
        fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_matrix(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != FTRX_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {FTRX_MAGIC!r}")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    rows, cols = struct.unpack("<II", raw[4:12])
    if cols == 0:
        raise FormatError(f"{path}: cols must be >= 1")
    expected = 12 + 4 * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw) - 12} bytes, header implies {expected - 12}")
    return np.frombuffer(raw[12:], dtype="<f4").reshape(rows, cols).copy()


# ---------------------------------------------------------------------------
# loading utterances


@dataclass
class Utterance:
    """A manifest entry with its aligned SSL and wavelet matrices."""

    entry: ManifestEntry
    ssl: np.ndarray
    wav: np.ndarray

    def __getattr__(self, name):
        if name == "entry":
            raise AttributeError(name)
        return getattr(self.entry, name)


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.join(base, path)


def load_utterances(manifest_path, frame_cfg=None, wavelet_cfg=None, with_wavelet=True):
    """Read features for every entry; paths resolve relative to the manifest."""
    frame_cfg = frame_cfg or features.FrameConfig()
    wavelet_cfg = wavelet_cfg or features.WaveletConfig()
    base = os.path.dirname(os.path.abspath(manifest_path))
    out = []
    for e in load_manifest(manifest_path):
        if not e.ssl_feature_path:
            raise ManifestError(f"{e.utterance_id}: ssl_feature_path required (SSL backbone is external)")
        ssl = read_matrix(_resolve(base, e.ssl_feature_path))
        wav = None
        if with_wavelet:
            if not e.audio_path:
                raise ManifestError(f"{e.utterance_id}: audio_path required for wavelet features")
            w = read_audio(_resolve(base, e.audio_path))
            wav = features.waveform_features(w, frame_cfg, wavelet_cfg).astype(np.float32)
            ssl, wav = features.align(ssl, wav)
        out.append(Utterance(e, ssl, wav))
    return out


def check_speaker_disjoint(splits):
    """Raise if any (dataset, speaker) appears in more than one split."""
    owner = {}
    for name, entries in splits.items():
        for e in entries:
            key = (e.dataset, e.speaker_id)
            if owner.setdefault(key, name) != name:
                raise ManifestError(f"speaker {key} appears in both {owner[key]!r} and {name!r}")
