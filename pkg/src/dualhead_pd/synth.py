"""Deterministic synthetic bilingual corpus.

Each language gets a random per-channel offset and scale (the domain gap).
PD shows up three ways:

* a speaker-level mean offset on ``pd_mean`` dims (what a linear probe on
  mean-pooled features sees);
* a within-utterance correlation between paired channels whose sign depends
  on the task (PD positive in continuous speech, negative in DDK; HC the
  reverse), so the label is only recoverable when the task is known;
* in DDK audio, larger inter-syllable jitter and amplitude instability.

Speaker-level offsets on every channel mimic speaker variability. Per-speaker
RNG streams are derived from (seed, language, speaker) so output does not
depend on generation order.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data, features
from .model import TaskType

FRAME_RATE = 50


@dataclass
class LanguageSpec:
    name: str
    n_hc: int
    n_pd: int


@dataclass
class SynthConfig:
    languages: list = field(
        default_factory=lambda: [LanguageSpec("synth_a", 100, 25), LanguageSpec("synth_b", 40, 40)]
    )
    d_ssl: int = 64
    pd_effect: float = 1.0
    mean_effect: float = 0.55
    corr_effect: float = 0.6
    jitter_effect: float = 0.25
    speaker_sd: float = 0.5
    language_shift: float = 1.0
    language_scale_sd: float = 0.3
    continuous_per_speaker: int = 2
    ddk_per_speaker: int = 1
    ddk_seconds: float = 3.0
    continuous_seconds: float = 5.0
    sample_rate: int = 16000
    split: tuple = (0.7, 0.1, 0.2)
    seed: int = 0

    def __post_init__(self):
        self.languages = [l if isinstance(l, LanguageSpec) else LanguageSpec(**l) for l in self.languages]
        self.split = tuple(self.split)
        if self.pd_effect < 0:
            raise ValueError("pd_effect must be >= 0")
        if any(l.n_hc < 1 or l.n_pd < 1 for l in self.languages):
            raise ValueError("every language needs at least one HC and one PD speaker")
        if abs(sum(self.split) - 1) > 1e-9 or min(self.split) <= 0:
            raise ValueError(f"split fractions must be positive and sum to 1, got {self.split}")
        if self.d_ssl < 32:
            raise ValueError("d_ssl must be >= 32 to host the designated dims")

    def dim_map(self):
        return {
            "pd_mean": list(range(0, 8)),
            "pd_corr_pairs": [[8 + 2 * i, 9 + 2 * i] for i in range(4)],
            "audio_envelope": list(range(16, 20)),
            "language_shift": list(range(20, self.d_ssl)),
            "language_scale": list(range(0, self.d_ssl)),
        }


def _ar1(rng, t, d, coef=0.7):
    x = np.empty((t, d))
    x[0] = rng.standard_normal(d)
    noise = rng.standard_normal((t, d)) * np.sqrt(1 - coef**2)
    for i in range(1, t):
        x[i] = coef * x[i - 1] + noise[i]
    return x


def _syllable_train(rng, n, rate, onsets, amps):
    """Plosive burst + decaying voiced segment at each onset."""
    out = np.zeros(n)
    t = np.arange(int(0.12 * rate)) / rate
    for onset, amp in zip(onsets, amps):
        start = int(onset * rate)
        if start >= n:
            break
        f0 = rng.uniform(110, 190)
        voiced = np.sin(2 * np.pi * f0 * t) + 0.5 * np.sin(4 * np.pi * f0 * t)
        env = np.exp(-t / 0.05)
        seg = amp * env * voiced
        burst = int(0.01 * rate)
        seg[:burst] += amp * 0.6 * rng.standard_normal(burst)
        end = min(n, start + seg.size)
        out[start:end] += seg[: end - start]
    out += 0.003 * rng.standard_normal(n)
    return 0.9 * out / max(1e-9, np.max(np.abs(out)))


def ddk_audio(rng, seconds, rate, pd, effect):
    """Regular 'pa-ta-ka' style pulses; PD raises interval jitter and
    amplitude instability."""
    jitter = 0.04 + effect * pd
    shimmer = 0.05 + 1.2 * effect * pd
    period = 1 / rng.uniform(5.5, 6.5)
    gaps = period * np.clip(1 + jitter * rng.standard_normal(int(seconds / period) + 4), 0.3, None)
    onsets = 0.05 + np.concatenate([[0], np.cumsum(gaps)])
    amps = np.clip(1 + shimmer * rng.standard_normal(onsets.size), 0.1, None)
    return _syllable_train(rng, int(seconds * rate), rate, onsets, amps)


def continuous_audio(rng, seconds, rate):
    """Irregular syllable sequence with pauses."""
    gaps = rng.gamma(4.0, 0.05, size=int(seconds * 8) + 4) + rng.binomial(1, 0.1, size=int(seconds * 8) + 4) * 0.3
    onsets = 0.05 + np.concatenate([[0], np.cumsum(gaps)])
    amps = rng.uniform(0.4, 1.0, size=onsets.size)
    return _syllable_train(rng, int(seconds * rate), rate, onsets, amps)


def _envelope(samples, rate, t):
    win, hop = int(0.025 * rate), int(0.02 * rate)
    idx = hop * np.arange(t)[:, None] + np.arange(win)[None, :]
    idx = np.minimum(idx, samples.size - 1)
    e = np.log(np.mean(samples[idx] ** 2, axis=1) + 1e-6)
    return (e - e.mean()) / (e.std() + 1e-6)


def ssl_matrix(rng, cfg, t, label, task, speaker_offset, lang_offset, lang_scale, audio):
    """Frame-level stand-in for SSL features, shape (t, d_ssl)."""
    dims = cfg.dim_map()
    x = _ar1(rng, t, cfg.d_ssl)
    rho = min(0.95, cfg.corr_effect * cfg.pd_effect)
    sign = 1.0 if (label == 1) == (task == TaskType.CONTINUOUS) else -1.0
    for a, b in dims["pd_corr_pairs"]:
        c = sign * rho
        x[:, b] = c * x[:, a] + np.sqrt(1 - c * c) * x[:, b]
    env = _envelope(audio, cfg.sample_rate, t)
    for j, dim in enumerate(dims["audio_envelope"]):
        x[:, dim] = 0.8 * env + 0.6 * x[:, dim]
    x = x + speaker_offset
    x[:, dims["pd_mean"]] += cfg.mean_effect * cfg.pd_effect * label
    return (x * lang_scale + lang_offset).astype(np.float32)


def _language_params(cfg, li):
    rng = np.random.default_rng([cfg.seed, 1_000_003, li])
    offset = np.zeros(cfg.d_ssl)
    shift_dims = cfg.dim_map()["language_shift"]
    offset[shift_dims] = cfg.language_shift * rng.standard_normal(len(shift_dims))
    # the PD dims also move with language, so a single global threshold fails
    offset[:8] = cfg.language_shift * 0.5 * rng.standard_normal(8)
    scale = np.exp(cfg.language_scale_sd * rng.standard_normal(cfg.d_ssl))
    return offset, scale


def _split_speakers(rng, speakers, fractions):
    """Label-stratified speaker split -> {speaker: split_name}."""
    names = ("train", "val", "test")
    assign = {}
    for label in (0, 1):
        group = [s for s, y in speakers if y == label]
        group = [group[i] for i in rng.permutation(len(group))]
        n = len(group)
        n_val = max(1, int(round(fractions[1] * n))) if n >= 3 else 0
        n_test = max(1, int(round(fractions[2] * n))) if n >= 3 else 0
        n_train = n - n_val - n_test
        for i, s in enumerate(group):
            assign[s] = names[0] if i < n_train else names[1] if i < n_train + n_val else names[2]
    return assign


def generate(cfg, out_dir):
    """Write the corpus tree; returns {split: [ManifestEntry]}."""
    os.makedirs(out_dir, exist_ok=True)
    splits = {"train": [], "val": [], "test": []}
    for li, lang in enumerate(cfg.languages):
        lang_offset, lang_scale = _language_params(cfg, li)
        n_spk = lang.n_hc + lang.n_pd
        label_rng = np.random.default_rng([cfg.seed, 2_000_003, li])
        labels = np.array([0] * lang.n_hc + [1] * lang.n_pd)[label_rng.permutation(n_spk)]
        speakers = [(f"{lang.name}_spk{s:03d}", int(labels[s])) for s in range(n_spk)]
        assign = _split_speakers(np.random.default_rng([cfg.seed, 3_000_003, li]), speakers, cfg.split)
        for sub in ("audio", "ssl"):
            os.makedirs(os.path.join(out_dir, sub, lang.name), exist_ok=True)
        for s, (spk, label) in enumerate(speakers):
            rng = np.random.default_rng([cfg.seed, li, s])
            speaker_offset = cfg.speaker_sd * rng.standard_normal(cfg.d_ssl)
            jobs = [(TaskType.DDK, k) for k in range(cfg.ddk_per_speaker)]
            jobs += [(TaskType.CONTINUOUS, k) for k in range(cfg.continuous_per_speaker)]
            for task, k in jobs:
                uid = f"{spk}_{task.value}{k}"
                if task == TaskType.DDK:
                    secs = cfg.ddk_seconds
                    audio = ddk_audio(rng, secs, cfg.sample_rate, label, cfg.jitter_effect * cfg.pd_effect)
                else:
                    secs = cfg.continuous_seconds
                    audio = continuous_audio(rng, secs, cfg.sample_rate)
                t = int(round(secs * FRAME_RATE))
                ssl = ssl_matrix(rng, cfg, t, label, task, speaker_offset, lang_offset, lang_scale, audio)
                audio_rel = os.path.join("audio", lang.name, uid + ".wav")
                ssl_rel = os.path.join("ssl", lang.name, uid + ".ftrx")
                data.write_audio(os.path.join(out_dir, audio_rel), features.Waveform(audio, cfg.sample_rate))
                data.write_matrix(os.path.join(out_dir, ssl_rel), ssl)
                entry = data.ManifestEntry(uid, spk, lang.name, task, label, audio_rel, ssl_rel)
                splits[assign[spk]].append(entry)
    data.check_speaker_disjoint(splits)
    for name, entries in splits.items():
        data.write_manifest(os.path.join(out_dir, f"{name}.jsonl"), entries)
    data.write_manifest(os.path.join(out_dir, "all.jsonl"), [e for v in splits.values() for e in v])
    with open(os.path.join(out_dir, "dim_map.json"), "w") as fh:
        json.dump(cfg.dim_map(), fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "synth_config.json"), "w") as fh:
        json.dump(asdict(cfg), fh, indent=1, sort_keys=True)
    return splits
