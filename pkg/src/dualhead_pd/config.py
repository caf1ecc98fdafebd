"""Flat dotted-key run configuration.

A config file is one JSON object whose keys are dotted names from
``DEFAULTS`` (e.g. ``"model.r": 8``). Command-line overrides use the same
names (``model.r=8``). Unknown keys are rejected.
"""

import json
from dataclasses import fields

from . import features, losses, synth, training
from .model import AblationSwitches, ModelConfig
from .numerics import ConfigurationError

DEFAULTS = {
    "seed": 0,
    "data.corpus": "",
    "data.train": "train.jsonl",
    "data.val": "val.jsonl",
    "data.test": "test.jsonl",
    "frame.window_ms": 25.0,
    "frame.hop_ms": 20.0,
    "wavelet.family": "db4",
    "wavelet.levels": 5,
    "model.d_ssl": 64,
    "model.hidden": 128,
    "model.r": 4,
    "model.k": 3,
    "model.emb_dim": 16,
    "model.n_adaptive": 2,
    "model.placement": ["after_fusion", "after_bottleneck"],
    "model.n_bottleneck": 1,
    "train.epochs": 20,
    "train.batch_size": 64,
    "train.max_lr": 1e-4,
    "train.warmup_ratio": 0.1,
    "train.weight_decay": 0.01,
    "train.patience": 5,
    "train.clip_norm": 5.0,
    "contrastive.m_pos": 0.2,
    "contrastive.m_neg": 1.0,
    "contrastive.weight": 1.0,
    "contrastive.hinge": True,
    "ablation.dual_head": True,
    "ablation.adaptive_layers": True,
    "ablation.bottleneck": True,
    "ablation.wavelet": True,
    "ablation.contrastive": True,
    "eval.threshold": 0.5,
    "eval.speaker_vote": False,
}
for _f in fields(synth.SynthConfig):
    if _f.name != "seed":
        _v = _f.default_factory() if callable(_f.default_factory) else _f.default
        if _f.name == "languages":
            _v = [vars(l) for l in _v]
        DEFAULTS[f"synth.{_f.name}"] = list(_v) if isinstance(_v, tuple) else _v


def _coerce(key, value):
    default = DEFAULTS[key]
    if isinstance(value, str) and not isinstance(default, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigurationError(f"{key}: cannot parse {value!r}") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigurationError(f"{key}: expected a list, got {value!r}")
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigurationError(f"{key}: expected a string, got {value!r}")
    return value


class RunConfig(dict):
    """Resolved mapping of every dotted key to its value."""

    @classmethod
    def resolve(cls, path=None, overrides=(), seed=None):
        cfg = cls(DEFAULTS)
        if path:
            try:
                with open(path) as fh:
                    loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"{path}: config must be a JSON object")
            cfg.update_keys(loaded.items())
        pairs = []
        for item in overrides:
            if "=" not in item:
                raise ConfigurationError(f"override {item!r} is not key=value")
            pairs.append(tuple(item.split("=", 1)))
        cfg.update_keys(pairs)
        if seed is not None:
            cfg["seed"] = seed
        cfg.build()  # validate eagerly
        return cfg

    def update_keys(self, items):
        for key, value in items:
            if key not in DEFAULTS:
                raise ConfigurationError(f"unknown config key {key!r}")
            self[key] = _coerce(key, value)

    def section(self, name):
        n = len(name) + 1
        return {k[n:]: v for k, v in self.items() if k.startswith(name + ".")}

    def build(self):
        """Typed config objects for every section."""
        frame = features.FrameConfig(**self.section("frame"))
        wavelet = features.WaveletConfig(**self.section("wavelet"))
        model = ModelConfig(d_wav=wavelet.n_features, **self.section("model"))
        train = training.TrainConfig(seed=self["seed"], **self.section("train"))
        contrastive = losses.ContrastiveConfig(**self.section("contrastive"))
        switches = AblationSwitches(**self.section("ablation"))
        try:
            synth_cfg = synth.SynthConfig(seed=self["seed"], **self.section("synth"))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"synth: {exc}") from None
        return {
            "frame": frame,
            "wavelet": wavelet,
            "model": model,
            "train": train,
            "contrastive": contrastive,
            "switches": switches,
            "synth": synth_cfg,
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(dict(sorted(self.items())), fh, indent=1)
            fh.write("\n")
