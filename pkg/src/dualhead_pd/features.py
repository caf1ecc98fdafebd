"""Frame-level features: framing, multilevel DWT, wavelet band statistics,
and the SSL/wavelet fusion that feeds the model."""

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import numerics as nx
from .numerics import ConfigurationError

_DB4 = np.array(
    [
        -0.010597401784997278,
        0.032883011666982945,
        0.030841381835986965,
        -0.18703481171888114,
        -0.02798376941698385,
        0.6308807679295904,
        0.7148465705525415,
        0.23037781330885523,
    ]
)
_HAAR = np.array([1.0, 1.0]) / np.sqrt(2.0)

FILTERS = {"haar": _HAAR, "db4": _DB4}
STATS = ("log_energy", "mean_abs", "std")


class InputError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InputError("waveform must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    window_ms: float = 25.0
    hop_ms: float = 20.0

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.window_ms:
            raise ConfigurationError(
                f"need 0 < hop_ms <= window_ms, got hop={self.hop_ms} window={self.window_ms}"
            )

    def sizes(self, sample_rate):
        return int(round(self.window_ms * sample_rate / 1000)), int(round(self.hop_ms * sample_rate / 1000))


@dataclass(frozen=True)
class WaveletConfig:
    family: str = "db4"
    levels: int = 5
    eps: float = 1e-8

    def __post_init__(self):
        if self.family not in FILTERS:
            raise ConfigurationError(f"unknown wavelet family {self.family!r}; choose from {sorted(FILTERS)}")
        if self.levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {self.levels}")

    @property
    def n_features(self):
        return len(STATS) * (self.levels + 1)


class FeatureKind(enum.Enum):
    SSL = "ssl"
    WAVELET = "wavelet"
    FUSED = "fused"


@dataclass
class FeatureSequence:
    """Time-major (T, D) feature matrix tagged with its stream."""

    kind: FeatureKind
    matrix: object

    def __post_init__(self):
        self.kind = FeatureKind(self.kind)
        if len(self.matrix.shape) < 2 or self.matrix.shape[-2] < 1:
            raise InputError(f"{self.kind.value} sequence needs shape (..., T>=1, D), got {self.matrix.shape}")

    @property
    def length(self):
        return self.matrix.shape[-2]

    @property
    def dim(self):
        return self.matrix.shape[-1]


def filter_pair(family):
    lo = FILTERS[family]
    hi = np.array([(-1) ** n * lo[len(lo) - 1 - n] for n in range(len(lo))])
    return lo, hi


def frame_signal(w, cfg=FrameConfig()):
    """Split into overlapping frames, dropping the trailing partial window.

    Returns an (n_frames, window) array.
    """
    win, hop = cfg.sizes(w.sample_rate)
    n = w.samples.size
    if n < win:
        raise InputError(f"waveform of {n} samples is shorter than one {win}-sample window")
    count = (n - win) // hop + 1
    idx = hop * np.arange(count)[:, None] + np.arange(win)[None, :]
    return w.samples[idx]


def dwt(frames, cfg=WaveletConfig()):
    """Multilevel periodic DWT of one frame or a stack of frames.

    Returns ``[detail_1, ..., detail_L, approx_L]``. Odd-length intermediate
    bands are extended by repeating their last sample before the next step.
    """
    x = np.asarray(frames, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] < 2 ** cfg.levels:
        raise ConfigurationError(
            f"frame of {x.shape[1]} samples too short for {cfg.levels} levels (need {2 ** cfg.levels})"
        )
    lo, hi = filter_pair(cfg.family)
    bands = []
    approx = x
    for _ in range(cfg.levels):
        if approx.shape[1] % 2:
            approx = np.concatenate([approx, approx[:, -1:]], axis=1)
        approx, detail = kernels.dwt_step(approx, lo, hi)
        bands.append(detail)
    bands.append(approx)
    return [b[0] for b in bands] if single else bands


def idwt(bands, family="db4"):
    """Inverse of :func:`dwt` for even-length levels (test oracle only)."""
    lo, hi = filter_pair(family)
    approx = np.atleast_2d(bands[-1])
    for detail in reversed(bands[:-1]):
        detail = np.atleast_2d(detail)
        half = approx.shape[1]
        n = 2 * half
        out = np.zeros((approx.shape[0], n))
        for k in range(half):
            for j in range(len(lo)):
                out[:, (2 * k + j) % n] += lo[j] * approx[:, k] + hi[j] * detail[:, k]
        approx = out
    return approx[0] if np.ndim(bands[-1]) == 1 else approx


def band_stats(bands, eps=1e-8):
    cols = []
    for c in bands:
        cols.append(np.log(np.sum(c * c, axis=-1) + eps))
        cols.append(np.mean(np.abs(c), axis=-1))
        cols.append(np.std(c, axis=-1))
    return np.stack(cols, axis=-1)


def wavelet_features(frames, cfg=WaveletConfig()):
    """Per band (details then approximation): log-energy, mean |c|, std.

    Accepts one frame (returns a vector) or a stack (returns a matrix).
    """
    return band_stats(dwt(frames, cfg), cfg.eps)


def waveform_features(w, frame_cfg=FrameConfig(), wavelet_cfg=WaveletConfig()):
    """Wavelet feature matrix (T, 3 * (L + 1)) for a whole utterance."""
    return wavelet_features(frame_signal(w, frame_cfg), wavelet_cfg)


def align(ssl, wav):
    """Truncate both streams to the shorter length."""
    if len(ssl) == 0 or len(wav) == 0:
        raise InputError("cannot align an empty feature sequence")
    t = min(len(ssl), len(wav))
    return ssl[:t], wav[:t]


def fuse(ssl, wav, norm_params, eps=1e-8):
    """Layer-normalize each stream per frame and concatenate features.

    ``ssl`` and ``wav`` are Tensors (..., T, D) or FeatureSequences; ``wav``
    may be None when the wavelet stream is disabled. Streams of different
    length are truncated to the shorter. ``norm_params`` maps "ssl"/"wav" to
    (gain, bias) pairs.
    """
    wrapped = isinstance(ssl, FeatureSequence)
    if wrapped:
        ssl = ssl.matrix
    if isinstance(wav, FeatureSequence):
        wav = wav.matrix
    if ssl.shape[-2] == 0 or (wav is not None and wav.shape[-2] == 0):
        raise InputError("empty feature sequence")
    if wav is not None and wav.shape[-2] != ssl.shape[-2]:
        t = min(ssl.shape[-2], wav.shape[-2])
        keep = np.arange(t)
        ssl, wav = nx.take(nx.tensor(ssl), keep, axis=-2), nx.take(nx.tensor(wav), keep, axis=-2)
    parts = [nx.layer_norm(ssl, *norm_params["ssl"], eps=eps)]
    if wav is not None:
        parts.append(nx.layer_norm(wav, *norm_params["wav"], eps=eps))
    out = parts[0] if len(parts) == 1 else nx.concat(parts, axis=-1)
    return FeatureSequence(FeatureKind.FUSED, out) if wrapped else out
